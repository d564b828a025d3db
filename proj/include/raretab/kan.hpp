#pragma once

#include "raretab/models.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace raretab {

/// Uniform-knot B-spline basis on [lo, hi] split into `intervals` cells.
struct SplineGrid {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t intervals = 5;
  std::size_t order = 3;

  std::size_t n_basis() const { return intervals + order; }
  double step() const { return (hi - lo) / static_cast<double>(intervals); }
  /// Basis values (and derivatives when d is non-null) on the knot sequence
  /// extended by `order` cells on each side; zero outside it.
  void eval(double x, double* values, double* d) const;
};

/// Kolmogorov–Arnold network with one hidden layer. Every edge computes
/// w_base * silu(u) + sum_m c_m * B_m(u); node sums carry a bias.
class KanModel final : public Classifier {
 public:
  /// Grids from the data range with a 10% margin and random initial weights.
  /// The hidden-layer grids come from a forward pass at the initial weights.
  static KanModel initialize(const Matrix& X, const KanParams& p, std::uint64_t seed);
  /// Mini-batch Adam on class-weighted binary cross-entropy. Throws
  /// ComputeError with the epoch and batch when the loss becomes non-finite.
  static std::shared_ptr<const KanModel> fit(const Matrix& X, const Labels& y, const KanParams& p,
                                             std::uint64_t seed);

  ModelFamily family() const override { return ModelFamily::kan; }
  std::size_t n_features() const override { return inputs_; }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const KanModel> from_json(const nlohmann::json& j);

  std::size_t hidden_width() const { return hidden_; }
  const std::vector<double>& parameters() const { return params_; }
  KanModel with_parameters(std::vector<double> params) const;

  /// Weighted BCE summed over rows and divided by the row count, evaluated at
  /// `params`. Fills grad (resized to params.size()) when non-null.
  double loss_gradient(std::span<const double> params, const Matrix& X, const Labels& y,
                       double positive_class_weight, std::vector<double>* grad) const;
  /// Per-epoch mean training loss recorded during fit.
  const std::vector<double>& loss_history() const { return history_; }

 protected:
  Vector predict_rows(const Matrix& X) const override;

 private:
  KanModel() = default;

  // Parameter layout offsets.
  std::size_t off_wb1() const { return 0; }
  std::size_t off_c1() const { return hidden_ * inputs_; }
  std::size_t off_b1() const { return off_c1() + hidden_ * inputs_ * g1_nb(); }
  std::size_t off_wb2() const { return off_b1() + hidden_; }
  std::size_t off_c2() const { return off_wb2() + hidden_; }
  std::size_t off_b2() const { return off_c2() + hidden_ * g2_nb(); }
  std::size_t n_params() const { return off_b2() + 1; }
  std::size_t g1_nb() const { return grid_size_ + order_; }
  std::size_t g2_nb() const { return grid_size_ + order_; }

  double forward(std::span<const double> params, const Matrix& X, Eigen::Index row) const;
  double loss_gradient_rows(std::span<const double> params, const Matrix& X, const Labels& y,
                            std::span<const std::size_t> rows, double positive_class_weight,
                            std::vector<double>* grad) const;

  std::size_t inputs_ = 0;
  std::size_t hidden_ = 0;
  std::size_t grid_size_ = 5;
  std::size_t order_ = 3;
  std::vector<SplineGrid> grid1_;  // per input
  std::vector<SplineGrid> grid2_;  // per hidden unit
  std::vector<double> params_;
  std::vector<double> history_;
};

}  // namespace raretab
