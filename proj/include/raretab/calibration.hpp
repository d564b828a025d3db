#pragma once

#include "raretab/models.hpp"

#include "json.hpp"

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace raretab {

/// Maps a raw score s to sigmoid(a * s + b).
struct SigmoidCalibrator {
  double a = 0.0;
  double b = 0.0;
  std::size_t iterations = 0;

  double apply(double score) const { return sigmoid(a * score + b); }
  /// Calibrates a probability through its clamped logit.
  double apply_proba(double p) const { return apply(clamped_logit(p)); }
};

/// Platt scaling: maximizes the Bernoulli likelihood of sigmoid(a*s + b)
/// against smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2) by Newton's
/// method until the gradient norm drops below 1e-8.
SigmoidCalibrator fit_platt(std::span<const double> scores, const Labels& y);
/// Negative log-likelihood minimized by fit_platt, for diagnostics and tests.
double platt_objective(std::span<const double> scores, const Labels& y, double a, double b);

using ModelFactory = std::function<ClassifierPtr(const Matrix& X, const Labels& y, std::uint64_t seed)>;

struct CalibratedMember {
  ClassifierPtr model;
  SigmoidCalibrator calibrator;
};

/// Ensemble of (model, calibrator) pairs; the prediction is the mean of the
/// members' calibrated probabilities.
class CalibratedModel final : public Classifier {
 public:
  explicit CalibratedModel(std::vector<CalibratedMember> members);

  ModelFamily family() const override { return members_.front().model->family(); }
  std::size_t n_features() const override { return members_.front().model->n_features(); }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const CalibratedModel> from_json(const nlohmann::json& j);

  const std::vector<CalibratedMember>& members() const { return members_; }

 protected:
  Vector predict_rows(const Matrix& X) const override;

 private:
  std::vector<CalibratedMember> members_;
};

/// k-fold cross-validated calibration: member i is fitted on every fold but
/// i and its sigmoid on fold i. Scores are logits clamped to +-15.
std::shared_ptr<const CalibratedModel> calibrate_cv(const ModelFactory& factory, const Matrix& X,
                                                    const Labels& y, std::size_t k, std::uint64_t seed);
std::shared_ptr<const CalibratedModel> calibrate_cv(const Hyperparams& hyper, const Matrix& X, const Labels& y,
                                                    std::size_t k, std::uint64_t seed);

}  // namespace raretab
