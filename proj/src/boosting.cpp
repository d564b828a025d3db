#include "raretab/boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace raretab {

using nlohmann::json;

namespace {

double mean_logloss(const std::vector<double>& margin, const Labels& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = margin[i];
    s += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y[i] * z;
  }
  return s / static_cast<double>(y.size());
}

}  // namespace

std::shared_ptr<const GradientBoosting> GradientBoosting::fit(const Matrix& X, const Labels& y,
                                                              const BoostingParams& p, std::uint64_t seed) {
  check_training_data(X, y, "gbdt");
  validate(p);
  const std::size_t n = y.size();
  const std::size_t d = static_cast<std::size_t>(X.cols());
  const double prevalence = static_cast<double>(count_positives(y)) / static_cast<double>(n);
  const double base = clamped_logit(prevalence);

  std::vector<double> margin(n, base), grad(n), hess(n);
  std::vector<Tree> trees;
  std::vector<double> losses{mean_logloss(margin, y)};
  if (p.learning_rate > 0.0 && p.n_rounds > 0) {
    const BinnedMatrix data = BinnedMatrix::build(X);
    GrowOptions opt;
    opt.criterion = SplitCriterion::newton;
    opt.max_depth = p.max_depth;
    opt.min_child_weight = p.min_child_weight;
    opt.lambda = p.reg_lambda;
    const auto n_rows = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(p.subsample * static_cast<double>(n))));
    const auto n_cols = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p.colsample * static_cast<double>(d) - 1e-9)));
    std::vector<std::size_t> all_rows(n), all_cols(d);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    std::iota(all_cols.begin(), all_cols.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "gbdt"));
    trees.reserve(p.n_rounds);
    for (std::size_t round = 0; round < p.n_rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double q = sigmoid(margin[i]);
        grad[i] = q - y[i];
        hess[i] = std::max(q * (1.0 - q), 1e-16);
      }
      std::vector<std::size_t> rows = all_rows;
      if (n_rows < n) {
        rng.shuffle(std::span<std::size_t>(rows));
        rows.resize(n_rows);
        std::sort(rows.begin(), rows.end());
      }
      std::vector<std::size_t> cols = all_cols;
      if (n_cols < d) {
        rng.shuffle(std::span<std::size_t>(cols));
        cols.resize(n_cols);
        std::sort(cols.begin(), cols.end());
      }
      Tree tree = grow_tree(data, rows, grad, hess, cols, opt, rng);
      for (std::size_t i = 0; i < n; ++i) {
        margin[i] += p.learning_rate * tree.predict(X, static_cast<Eigen::Index>(i));
      }
      losses.push_back(mean_logloss(margin, y));
      if (!std::isfinite(losses.back())) throw ComputeError("gbdt: non-finite training loss");
      trees.push_back(std::move(tree));
    }
  }
  auto model = std::make_shared<GradientBoosting>(d, base, p.learning_rate, std::move(trees));
  model->train_loss_ = std::move(losses);
  return model;
}

Vector GradientBoosting::margin(const Matrix& X) const {
  Vector out = Vector::Constant(X.rows(), base_);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (const auto& t : trees_) out(r) += lr_ * t.predict(X, r);
  }
  return out;
}

Vector GradientBoosting::predict_rows(const Matrix& X) const {
  return margin(X).unaryExpr([](double t) { return sigmoid(t); });
}

json GradientBoosting::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"type", "gbdt"},
          {"n_features", n_features_},
          {"base_score", base_},
          {"learning_rate", lr_},
          {"trees", std::move(trees)}};
}

std::shared_ptr<const GradientBoosting> GradientBoosting::from_json(const json& j) {
  std::vector<Tree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(Tree::from_json(t));
  return std::make_shared<const GradientBoosting>(j.at("n_features").get<std::size_t>(),
                                                  j.at("base_score").get<double>(),
                                                  j.at("learning_rate").get<double>(), std::move(trees));
}

}  // namespace raretab
