#include "raretab/logistic.hpp"

#include <algorithm>

namespace raretab {

using nlohmann::json;

namespace {

struct Objective {
  const Matrix& X;
  const Vector& y;
  double l2;

  // Returns the loss; fills the gradient (weights then intercept).
  double operator()(const Vector& w, double b, Vector& gw, double& gb) const {
    const double n = static_cast<double>(X.rows());
    const Vector z = (X * w).array() + b;
    double loss = 0.0;
    Vector r(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      // log(1 + e^z) - y z, computed stably.
      const double zi = z(i);
      loss += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - y(i) * zi;
      r(i) = sigmoid(zi) - y(i);
    }
    loss = loss / n + 0.5 * l2 * w.squaredNorm();
    gw = X.transpose() * r / n + l2 * w;
    gb = r.sum() / n;
    return loss;
  }

  double value(const Vector& w, double b) const {
    Vector gw;
    double gb = 0.0;
    return (*this)(w, b, gw, gb);
  }
};

}  // namespace

std::shared_ptr<const LogisticModel> LogisticModel::fit(const Matrix& X, const Labels& y, const LogisticParams& p) {
  check_training_data(X, y, "logistic");
  validate(p);
  Vector yv(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) yv(static_cast<Eigen::Index>(i)) = y[i];
  const Objective f{X, yv, p.l2};

  Vector w = Vector::Zero(X.cols());
  double b = clamped_logit(yv.mean());
  Vector gw;
  double gb = 0.0;
  double loss = f(w, b, gw, gb);
  double step = 1.0;
  Vector prev_w, prev_gw;
  double prev_b = 0.0, prev_gb = 0.0;
  std::size_t it = 0;
  double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
  for (; it < p.max_iters && gnorm >= p.tol; ++it) {
    if (it > 0) {
      // Barzilai–Borwein guess for the initial step, then Armijo backtracking.
      const double sw = (w - prev_w).squaredNorm() + (b - prev_b) * (b - prev_b);
      const double sy = (w - prev_w).dot(gw - prev_gw) + (b - prev_b) * (gb - prev_gb);
      if (sy > 0.0) step = std::clamp(sw / sy, 1e-8, 1e8);
    }
    const double g2 = gnorm * gnorm;
    Vector nw;
    double nb = 0.0, nloss = 0.0;
    for (int tries = 0;; ++tries) {
      nw = w - step * gw;
      nb = b - step * gb;
      nloss = f.value(nw, nb);
      if (nloss <= loss - 1e-4 * step * g2) break;
      step *= 0.5;
      if (tries > 60) break;
    }
    if (!std::isfinite(nloss)) throw ComputeError("logistic: non-finite loss");
    if (!(nloss < loss)) break;
    prev_w = w;
    prev_b = b;
    prev_gw = gw;
    prev_gb = gb;
    w = std::move(nw);
    b = nb;
    loss = f(w, b, gw, gb);
    gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
  }
  return std::make_shared<const LogisticModel>(std::move(w), b, it, gnorm);
}

Vector LogisticModel::predict_rows(const Matrix& X) const {
  Vector z = (X * w_).array() + b_;
  return z.unaryExpr([](double t) { return sigmoid(t); });
}

json LogisticModel::to_json() const {
  return {{"type", "logistic"},
          {"weights", std::vector<double>(w_.data(), w_.data() + w_.size())},
          {"intercept", b_}};
}

std::shared_ptr<const LogisticModel> LogisticModel::from_json(const json& j) {
  const auto w = j.at("weights").get<std::vector<double>>();
  return std::make_shared<const LogisticModel>(Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size())),
                                               j.at("intercept").get<double>());
}

}  // namespace raretab
