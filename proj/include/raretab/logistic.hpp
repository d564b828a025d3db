#pragma once

#include "raretab/models.hpp"

namespace raretab {

/// L2-regularized logistic regression. The intercept is not penalized.
class LogisticModel final : public Classifier {
 public:
  LogisticModel(Vector weights, double intercept, std::size_t iterations = 0, double grad_norm = 0.0)
      : w_(std::move(weights)), b_(intercept), iterations_(iterations), grad_norm_(grad_norm) {}

  /// Full-batch gradient descent with Armijo backtracking on
  /// mean log-loss + (l2 / 2) * ||w||^2.
  static std::shared_ptr<const LogisticModel> fit(const Matrix& X, const Labels& y, const LogisticParams& p);

  ModelFamily family() const override { return ModelFamily::logistic; }
  std::size_t n_features() const override { return static_cast<std::size_t>(w_.size()); }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const LogisticModel> from_json(const nlohmann::json& j);

  const Vector& coefficients() const { return w_; }
  double intercept() const { return b_; }
  std::size_t iterations() const { return iterations_; }
  double final_gradient_norm() const { return grad_norm_; }

 protected:
  Vector predict_rows(const Matrix& X) const override;

 private:
  Vector w_;
  double b_;
  std::size_t iterations_;
  double grad_norm_;
};

}  // namespace raretab
