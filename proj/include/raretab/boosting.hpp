#pragma once

#include "raretab/models.hpp"
#include "raretab/tree.hpp"

#include <cstdint>
#include <vector>

namespace raretab {

/// Gradient-boosted regression trees on the logit scale with Newton leaf
/// weights for the logistic loss.
class GradientBoosting final : public Classifier {
 public:
  GradientBoosting(std::size_t n_features, double base_score, double learning_rate, std::vector<Tree> trees)
      : n_features_(n_features), base_(base_score), lr_(learning_rate), trees_(std::move(trees)) {}

  static std::shared_ptr<const GradientBoosting> fit(const Matrix& X, const Labels& y, const BoostingParams& p,
                                                     std::uint64_t seed);

  ModelFamily family() const override { return ModelFamily::gbdt; }
  std::size_t n_features() const override { return n_features_; }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const GradientBoosting> from_json(const nlohmann::json& j);

  double base_score() const { return base_; }
  const std::vector<Tree>& trees() const { return trees_; }
  /// Mean training log-loss before the first round and after each round.
  const std::vector<double>& train_loss() const { return train_loss_; }
  Vector margin(const Matrix& X) const;

 protected:
  Vector predict_rows(const Matrix& X) const override;

 private:
  std::size_t n_features_;
  double base_;
  double lr_;
  std::vector<Tree> trees_;
  std::vector<double> train_loss_;
};

}  // namespace raretab
