#include "raretab/kan.hpp"
#include "raretab/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace raretab {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxKnots = 128;

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

double bce_logit(double z, int y) {
  const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
  return softplus - y * z;
}

SplineGrid grid_for_range(double lo, double hi, const KanParams& p) {
  double span = hi - lo;
  if (!(span > 0.0)) {
    lo -= 1.0;
    hi += 1.0;
    span = 2.0;
  }
  return SplineGrid{lo - 0.1 * span, hi + 0.1 * span, p.grid_size, p.spline_order};
}

}  // namespace

void SplineGrid::eval(double x, double* values, double* d) const {
  const std::size_t k = order;
  const std::size_t n0 = intervals + 2 * k;  // order-0 basis count
  const double h = step();
  const double t0 = lo - static_cast<double>(k) * h;
  std::array<double, kMaxKnots> cur{}, prev{};
  const double pos = (x - t0) / h;
  if (pos >= 0.0 && pos < static_cast<double>(n0)) cur[static_cast<std::size_t>(pos)] = 1.0;
  for (std::size_t p = 1; p <= k; ++p) {
    prev = cur;
    const double denom = static_cast<double>(p) * h;
    for (std::size_t j = 0; j + p < n0; ++j) {
      const double tj = t0 + static_cast<double>(j) * h;
      const double tjp1 = t0 + static_cast<double>(j + p + 1) * h;
      cur[j] = ((x - tj) * prev[j] + (tjp1 - x) * prev[j + 1]) / denom;
    }
    for (std::size_t j = n0 - p; j < n0; ++j) cur[j] = 0.0;
  }
  const std::size_t nb = n_basis();
  for (std::size_t m = 0; m < nb; ++m) values[m] = cur[m];
  if (d != nullptr) {
    for (std::size_t m = 0; m < nb; ++m) d[m] = (prev[m] - prev[m + 1]) / h;
  }
}

KanModel KanModel::initialize(const Matrix& X, const KanParams& p, std::uint64_t seed) {
  validate(p);
  if (p.grid_size + 2 * p.spline_order + 1 >= kMaxKnots) throw ValidationError("kan: grid too large");
  if (X.rows() == 0) throw ValidationError("kan: empty training matrix");
  KanModel m;
  m.inputs_ = static_cast<std::size_t>(X.cols());
  m.hidden_ = p.hidden_width;
  m.grid_size_ = p.grid_size;
  m.order_ = p.spline_order;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    m.grid1_.push_back(grid_for_range(X.col(i).minCoeff(), X.col(i).maxCoeff(), p));
  }
  m.params_.assign(m.n_params(), 0.0);
  Rng rng(derive_seed(seed, "kan-init"));
  const double d = static_cast<double>(std::max<std::size_t>(1, m.inputs_));
  const double h = static_cast<double>(m.hidden_);
  for (std::size_t i = 0; i < m.hidden_ * m.inputs_; ++i) m.params_[m.off_wb1() + i] = rng.normal() / std::sqrt(d);
  for (std::size_t i = m.off_c1(); i < m.off_b1(); ++i) m.params_[i] = 0.1 * rng.normal() / std::sqrt(d);
  for (std::size_t i = 0; i < m.hidden_; ++i) m.params_[m.off_wb2() + i] = rng.normal() / std::sqrt(h);
  for (std::size_t i = m.off_c2(); i < m.off_b2(); ++i) m.params_[i] = 0.1 * rng.normal() / std::sqrt(h);

  // Hidden-unit grids cover the initial pre-activations, at least [-2, 2].
  std::vector<double> lo(m.hidden_, -2.0), hi(m.hidden_, 2.0);
  const std::size_t nb = m.g1_nb();
  std::vector<double> basis(nb);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    std::vector<double> z(m.params_.begin() + static_cast<std::ptrdiff_t>(m.off_b1()),
                          m.params_.begin() + static_cast<std::ptrdiff_t>(m.off_b1() + m.hidden_));
    for (std::size_t i = 0; i < m.inputs_; ++i) {
      const double x = X(r, static_cast<Eigen::Index>(i));
      const double s = silu(x);
      m.grid1_[i].eval(x, basis.data(), nullptr);
      for (std::size_t u = 0; u < m.hidden_; ++u) {
        double v = m.params_[m.off_wb1() + u * m.inputs_ + i] * s;
        const double* c = &m.params_[m.off_c1() + (u * m.inputs_ + i) * nb];
        for (std::size_t q = 0; q < nb; ++q) v += c[q] * basis[q];
        z[u] += v;
      }
    }
    for (std::size_t u = 0; u < m.hidden_; ++u) {
      lo[u] = std::min(lo[u], z[u]);
      hi[u] = std::max(hi[u], z[u]);
    }
  }
  for (std::size_t u = 0; u < m.hidden_; ++u) m.grid2_.push_back(grid_for_range(lo[u], hi[u], p));
  return m;
}

KanModel KanModel::with_parameters(std::vector<double> params) const {
  if (params.size() != params_.size()) throw ValidationError("kan: parameter count mismatch");
  KanModel m = *this;
  m.params_ = std::move(params);
  return m;
}

double KanModel::forward(std::span<const double> params, const Matrix& X, Eigen::Index row) const {
  const std::size_t nb1 = g1_nb(), nb2 = g2_nb();
  std::array<double, kMaxKnots> basis{};
  std::vector<double> z(params.begin() + static_cast<std::ptrdiff_t>(off_b1()),
                        params.begin() + static_cast<std::ptrdiff_t>(off_b1() + hidden_));
  for (std::size_t i = 0; i < inputs_; ++i) {
    const double x = X(row, static_cast<Eigen::Index>(i));
    const double s = silu(x);
    grid1_[i].eval(x, basis.data(), nullptr);
    for (std::size_t u = 0; u < hidden_; ++u) {
      double v = params[off_wb1() + u * inputs_ + i] * s;
      const double* c = &params[off_c1() + (u * inputs_ + i) * nb1];
      for (std::size_t q = 0; q < nb1; ++q) v += c[q] * basis[q];
      z[u] += v;
    }
  }
  double out = params[off_b2()];
  for (std::size_t u = 0; u < hidden_; ++u) {
    grid2_[u].eval(z[u], basis.data(), nullptr);
    out += params[off_wb2() + u] * silu(z[u]);
    const double* c = &params[off_c2() + u * nb2];
    for (std::size_t q = 0; q < nb2; ++q) out += c[q] * basis[q];
  }
  return out;
}

double KanModel::loss_gradient_rows(std::span<const double> params, const Matrix& X, const Labels& y,
                                    std::span<const std::size_t> rows, double positive_class_weight,
                                    std::vector<double>* grad) const {
  const std::size_t nb1 = g1_nb(), nb2 = g2_nb();
  if (grad != nullptr) grad->assign(params.size(), 0.0);
  std::vector<double> in_basis(inputs_ * nb1), in_silu(inputs_), z(hidden_);
  std::vector<double> out_basis(hidden_ * nb2), out_dbasis(hidden_ * nb2);
  const double scale = 1.0 / static_cast<double>(rows.size());
  double loss = 0.0;
  for (std::size_t r : rows) {
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t u = 0; u < hidden_; ++u) z[u] = params[off_b1() + u];
    for (std::size_t i = 0; i < inputs_; ++i) {
      const double x = X(row, static_cast<Eigen::Index>(i));
      in_silu[i] = silu(x);
      double* b = &in_basis[i * nb1];
      grid1_[i].eval(x, b, nullptr);
      for (std::size_t u = 0; u < hidden_; ++u) {
        double v = params[off_wb1() + u * inputs_ + i] * in_silu[i];
        const double* c = &params[off_c1() + (u * inputs_ + i) * nb1];
        for (std::size_t q = 0; q < nb1; ++q) v += c[q] * b[q];
        z[u] += v;
      }
    }
    double out = params[off_b2()];
    for (std::size_t u = 0; u < hidden_; ++u) {
      double* b = &out_basis[u * nb2];
      grid2_[u].eval(z[u], b, &out_dbasis[u * nb2]);
      out += params[off_wb2() + u] * silu(z[u]);
      const double* c = &params[off_c2() + u * nb2];
      for (std::size_t q = 0; q < nb2; ++q) out += c[q] * b[q];
    }
    const double w = y[r] == 1 ? positive_class_weight : 1.0;
    loss += w * bce_logit(out, y[r]);
    if (grad == nullptr) continue;

    auto& g = *grad;
    const double delta = w * (sigmoid(out) - y[r]) * scale;
    g[off_b2()] += delta;
    for (std::size_t u = 0; u < hidden_; ++u) {
      const double* b = &out_basis[u * nb2];
      const double* db = &out_dbasis[u * nb2];
      const double* c = &params[off_c2() + u * nb2];
      g[off_wb2() + u] += delta * silu(z[u]);
      double dz = params[off_wb2() + u] * silu_grad(z[u]);
      for (std::size_t q = 0; q < nb2; ++q) {
        g[off_c2() + u * nb2 + q] += delta * b[q];
        dz += c[q] * db[q];
      }
      dz *= delta;
      g[off_b1() + u] += dz;
      for (std::size_t i = 0; i < inputs_; ++i) {
        g[off_wb1() + u * inputs_ + i] += dz * in_silu[i];
        const double* bi = &in_basis[i * nb1];
        double* gc = &g[off_c1() + (u * inputs_ + i) * nb1];
        for (std::size_t q = 0; q < nb1; ++q) gc[q] += dz * bi[q];
      }
    }
  }
  return loss * scale;
}

double KanModel::loss_gradient(std::span<const double> params, const Matrix& X, const Labels& y,
                               double positive_class_weight, std::vector<double>* grad) const {
  if (params.size() != params_.size()) throw ValidationError("kan: parameter count mismatch");
  if (static_cast<std::size_t>(X.cols()) != inputs_ || static_cast<std::size_t>(X.rows()) != y.size()) {
    throw ValidationError("kan: data shape mismatch");
  }
  if (y.empty()) throw ValidationError("kan: empty batch");
  std::vector<std::size_t> rows(y.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss_gradient_rows(params, X, y, rows, positive_class_weight, grad);
}

std::shared_ptr<const KanModel> KanModel::fit(const Matrix& X, const Labels& y, const KanParams& p,
                                              std::uint64_t seed) {
  check_training_data(X, y, "kan");
  KanModel m = initialize(X, p, seed);
  const std::size_t n = y.size();
  const double pos = static_cast<double>(count_positives(y));
  const double weighted = p.positive_class_weight * pos;
  m.params_[m.off_b2()] = clamped_logit(weighted / (weighted + static_cast<double>(n) - pos));

  const std::size_t np = m.params_.size();
  std::vector<double> mom(np, 0.0), vel(np, 0.0), grad;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  Rng rng(derive_seed(seed, "kan-batches"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < p.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0, batch = 0; start < n; start += p.batch_size, ++batch) {
      const std::size_t end = std::min(n, start + p.batch_size);
      std::span<const std::size_t> rows(order.data() + start, end - start);
      const double loss = m.loss_gradient_rows(m.params_, X, y, rows, p.positive_class_weight, &grad);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "kan: non-finite loss at epoch " << epoch << ", batch " << batch << " (loss " << loss
            << ", learning rate " << p.learning_rate << ")";
        throw ComputeError(msg.str());
      }
      epoch_loss += loss * static_cast<double>(rows.size());
      b1t *= beta1;
      b2t *= beta2;
      for (std::size_t i = 0; i < np; ++i) {
        mom[i] = beta1 * mom[i] + (1 - beta1) * grad[i];
        vel[i] = beta2 * vel[i] + (1 - beta2) * grad[i] * grad[i];
        m.params_[i] -= p.learning_rate * (mom[i] / (1 - b1t)) / (std::sqrt(vel[i] / (1 - b2t)) + eps);
      }
    }
    m.history_.push_back(epoch_loss / static_cast<double>(n));
  }
  return std::make_shared<const KanModel>(std::move(m));
}

Vector KanModel::predict_rows(const Matrix& X) const {
  Vector out(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) out(r) = sigmoid(forward(params_, X, r));
  return out;
}

json KanModel::to_json() const {
  auto grids = [](const std::vector<SplineGrid>& g) {
    json a = json::array();
    for (const auto& s : g) a.push_back({s.lo, s.hi});
    return a;
  };
  return {{"type", "kan"},          {"inputs", inputs_},     {"hidden", hidden_},
          {"grid_size", grid_size_}, {"spline_order", order_}, {"input_grids", grids(grid1_)},
          {"hidden_grids", grids(grid2_)}, {"params", params_}};
}

std::shared_ptr<const KanModel> KanModel::from_json(const json& j) {
  KanModel m;
  m.inputs_ = j.at("inputs").get<std::size_t>();
  m.hidden_ = j.at("hidden").get<std::size_t>();
  m.grid_size_ = j.at("grid_size").get<std::size_t>();
  m.order_ = j.at("spline_order").get<std::size_t>();
  if (m.grid_size_ < 1 || m.grid_size_ + 2 * m.order_ + 1 >= kMaxKnots) throw ValidationError("kan: bad grid");
  for (const auto& g : j.at("input_grids")) {
    m.grid1_.push_back(SplineGrid{g.at(0).get<double>(), g.at(1).get<double>(), m.grid_size_, m.order_});
  }
  for (const auto& g : j.at("hidden_grids")) {
    m.grid2_.push_back(SplineGrid{g.at(0).get<double>(), g.at(1).get<double>(), m.grid_size_, m.order_});
  }
  m.params_ = j.at("params").get<std::vector<double>>();
  if (m.grid1_.size() != m.inputs_ || m.grid2_.size() != m.hidden_ || m.params_.size() != m.n_params()) {
    throw ValidationError("kan: malformed document");
  }
  return std::make_shared<const KanModel>(std::move(m));
}

}  // namespace raretab
