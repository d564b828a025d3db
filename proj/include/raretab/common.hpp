#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace raretab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Binary labels, 1 = positive (minority) class.
using Labels = std::vector<int>;

/// Bad input or configuration: the caller can fix it. The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure during computation (non-finite loss, degenerate fit). Exit code 1.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// log(p / (1 - p)) clamped to [-limit, limit].
double clamped_logit(double p, double limit = 15.0);

/// Positive count and both-classes check shared by most fitters.
std::size_t count_positives(const Labels& y);
void require_binary(const Labels& y, const char* what);
void require_both_classes(const Labels& y, const char* what);

Matrix take_rows(const Matrix& X, std::span<const std::size_t> rows);
Labels take_labels(const Labels& y, std::span<const std::size_t> rows);

}  // namespace raretab
