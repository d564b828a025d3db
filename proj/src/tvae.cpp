#include "raretab/schema_json.hpp"
#include "raretab/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace raretab {

using nlohmann::json;

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }
Matrix relu_mask(const Matrix& a) { return (a.array() > 0.0).cast<double>().matrix(); }

}  // namespace

TvaeNetwork::TvaeNetwork(std::size_t input_dim, std::size_t numeric_dim, std::vector<std::size_t> category_sizes,
                         std::size_t hidden, std::size_t latent)
    : input_(input_dim), numeric_(numeric_dim), cats_(std::move(category_sizes)), hidden_(hidden), latent_(latent) {
  const std::size_t cat_total = std::accumulate(cats_.begin(), cats_.end(), std::size_t{0});
  if (numeric_ + cat_total != input_) throw ValidationError("tvae: input layout does not add up");
  if (input_ == 0 || hidden_ == 0 || latent_ == 0) throw ValidationError("tvae: empty layer");
  const std::size_t shapes[7][2] = {{input_, hidden_}, {hidden_, hidden_}, {hidden_, latent_}, {hidden_, latent_},
                                    {latent_, hidden_}, {hidden_, hidden_}, {hidden_, input_}};
  for (const auto& s : shapes) {
    layers_.push_back(Layer{s[0], s[1], total_});
    total_ += s[0] * s[1] + s[1];
  }
}

void TvaeNetwork::init(std::vector<double>& params, Rng& rng) const {
  params.assign(total_, 0.0);
  for (const auto& l : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (std::size_t i = 0; i < l.in * l.out + l.out; ++i) params[l.offset + i] = bound * (2.0 * rng.uniform() - 1.0);
  }
}

double TvaeNetwork::loss_gradient(std::span<const double> params, const Matrix& x, const Matrix& eps,
                                  std::vector<double>* grad) const {
  if (params.size() != total_) throw ValidationError("tvae: parameter count mismatch");
  if (static_cast<std::size_t>(x.rows()) != input_ || static_cast<std::size_t>(eps.rows()) != latent_ ||
      x.cols() != eps.cols() || x.cols() == 0) {
    throw ValidationError("tvae: batch shape mismatch");
  }
  const auto W = [&](std::size_t i) {
    const Layer& l = layers_[i];
    return ConstMap(params.data() + l.offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
  };
  const auto b = [&](std::size_t i) {
    const Layer& l = layers_[i];
    return ConstVecMap(params.data() + l.offset + l.in * l.out, static_cast<Eigen::Index>(l.out));
  };
  const double B = static_cast<double>(x.cols());

  const Matrix a1 = (W(0) * x).colwise() + b(0);
  const Matrix h1 = relu(a1);
  const Matrix a2 = (W(1) * h1).colwise() + b(1);
  const Matrix h2 = relu(a2);
  const Matrix mu = (W(2) * h2).colwise() + b(2);
  const Matrix lv = (W(3) * h2).colwise() + b(3);
  const Matrix sd = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + sd.cwiseProduct(eps);
  const Matrix a3 = (W(4) * z).colwise() + b(4);
  const Matrix h3 = relu(a3);
  const Matrix a4 = (W(5) * h3).colwise() + b(5);
  const Matrix h4 = relu(a4);
  const Matrix o = (W(6) * h4).colwise() + b(6);

  Matrix d_o(o.rows(), o.cols());
  double loss = 0.0;
  const auto nn = static_cast<Eigen::Index>(numeric_);
  if (nn > 0) {
    const Matrix diff = o.topRows(nn) - x.topRows(nn);
    loss += 0.5 * diff.squaredNorm();
    d_o.topRows(nn) = diff;
  }
  Eigen::Index start = nn;
  for (std::size_t k : cats_) {
    const auto kk = static_cast<Eigen::Index>(k);
    for (Eigen::Index c = 0; c < o.cols(); ++c) {
      const auto logits = o.col(c).segment(start, kk);
      const double mx = logits.maxCoeff();
      const Vector e = (logits.array() - mx).exp().matrix();
      const double s = e.sum();
      loss += mx + std::log(s) - logits.dot(x.col(c).segment(start, kk));
      d_o.col(c).segment(start, kk) = e / s - x.col(c).segment(start, kk);
    }
    start += kk;
  }
  loss += 0.5 * (mu.array().square() + lv.array().exp() - 1.0 - lv.array()).sum();
  loss /= B;
  if (grad == nullptr) return loss;

  grad->assign(total_, 0.0);
  const auto gW = [&](std::size_t i) {
    const Layer& l = layers_[i];
    return Eigen::Map<Matrix>(grad->data() + l.offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
  };
  const auto gb = [&](std::size_t i) {
    const Layer& l = layers_[i];
    return Eigen::Map<Vector>(grad->data() + l.offset + l.in * l.out, static_cast<Eigen::Index>(l.out));
  };
  d_o /= B;
  gW(6) = d_o * h4.transpose();
  gb(6) = d_o.rowwise().sum();
  const Matrix da4 = (W(6).transpose() * d_o).cwiseProduct(relu_mask(a4));
  gW(5) = da4 * h3.transpose();
  gb(5) = da4.rowwise().sum();
  const Matrix da3 = (W(5).transpose() * da4).cwiseProduct(relu_mask(a3));
  gW(4) = da3 * z.transpose();
  gb(4) = da3.rowwise().sum();
  const Matrix dz = W(4).transpose() * da3;
  const Matrix dmu = dz + mu / B;
  const Matrix dlv = (0.5 * dz.cwiseProduct(eps).cwiseProduct(sd).array() + 0.5 * (lv.array().exp() - 1.0) / B).matrix();
  gW(2) = dmu * h2.transpose();
  gb(2) = dmu.rowwise().sum();
  gW(3) = dlv * h2.transpose();
  gb(3) = dlv.rowwise().sum();
  const Matrix da2 = (W(2).transpose() * dmu + W(3).transpose() * dlv).cwiseProduct(relu_mask(a2));
  gW(1) = da2 * h1.transpose();
  gb(1) = da2.rowwise().sum();
  const Matrix da1 = (W(1).transpose() * da2).cwiseProduct(relu_mask(a1));
  gW(0) = da1 * x.transpose();
  gb(0) = da1.rowwise().sum();
  return loss;
}

Matrix TvaeNetwork::decode(std::span<const double> params, const Matrix& z) const {
  const auto W = [&](std::size_t i) {
    const Layer& l = layers_[i];
    return ConstMap(params.data() + l.offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in));
  };
  const auto b = [&](std::size_t i) {
    const Layer& l = layers_[i];
    return ConstVecMap(params.data() + l.offset + l.in * l.out, static_cast<Eigen::Index>(l.out));
  };
  const Matrix h3 = relu((W(4) * z).colwise() + b(4));
  const Matrix h4 = relu((W(5) * h3).colwise() + b(5));
  return (W(6) * h4).colwise() + b(6);
}

// ---------------------------------------------------------------------------

namespace {

struct Layout {
  std::vector<std::size_t> numeric;  // schema column per numeric slot
  std::vector<std::size_t> categorical;
  std::vector<std::size_t> sizes;
  std::size_t width = 0;
};

Layout layout_of(const std::vector<ColumnSchema>& schema) {
  Layout l;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (schema[c].is_categorical()) {
      l.categorical.push_back(c);
      l.sizes.push_back(schema[c].categories.size());
    } else {
      l.numeric.push_back(c);
    }
  }
  l.width = l.numeric.size() + std::accumulate(l.sizes.begin(), l.sizes.end(), std::size_t{0});
  return l;
}

}  // namespace

TvaeGenerator::TvaeGenerator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints,
                             TvaeOptions options, std::vector<double> means, std::vector<double> scales,
                             std::vector<double> params, std::vector<double> loss_history)
    : Generator(std::move(schema), std::move(fingerprints)),
      options_(options),
      means_(std::move(means)),
      scales_(std::move(scales)),
      params_(std::move(params)),
      history_(std::move(loss_history)) {
  if (params_.size() != network().n_params()) throw ValidationError("tvae: parameter count mismatch");
}

TvaeNetwork TvaeGenerator::network() const {
  const Layout l = layout_of(schema());
  return TvaeNetwork(l.width, l.numeric.size(), l.sizes, options_.hidden, options_.latent_dim);
}

std::vector<std::vector<double>> TvaeGenerator::sample_columns(std::size_t n, Rng& rng) const {
  const Layout l = layout_of(schema());
  const TvaeNetwork net = network();
  Matrix z(static_cast<Eigen::Index>(options_.latent_dim), static_cast<Eigen::Index>(n));
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, c) = rng.normal();
  }
  const Matrix o = net.decode(params_, z);
  std::vector<std::vector<double>> cols(schema().size(), std::vector<double>(n));
  for (std::size_t i = 0; i < l.numeric.size(); ++i) {
    for (std::size_t r = 0; r < n; ++r) {
      cols[l.numeric[i]][r] = o(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) * scales_[i] + means_[i];
    }
  }
  auto start = static_cast<Eigen::Index>(l.numeric.size());
  for (std::size_t g = 0; g < l.categorical.size(); ++g) {
    const auto k = static_cast<Eigen::Index>(l.sizes[g]);
    for (std::size_t r = 0; r < n; ++r) {
      const auto logits = o.col(static_cast<Eigen::Index>(r)).segment(start, k);
      const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
      double u = rng.uniform() * e.sum();
      Eigen::Index pick = 0;
      for (; pick + 1 < k; ++pick) {
        u -= e(pick);
        if (u < 0.0) break;
      }
      cols[l.categorical[g]][r] = static_cast<double>(pick);
    }
    start += k;
  }
  return cols;
}

json TvaeGenerator::to_json() const {
  json j = base_json();
  j["options"] = {{"latent_dim", options_.latent_dim},
                  {"hidden", options_.hidden},
                  {"epochs", options_.epochs},
                  {"batch_size", options_.batch_size},
                  {"learning_rate", options_.learning_rate}};
  j["means"] = means_;
  j["scales"] = scales_;
  j["params"] = params_;
  j["loss_history"] = history_;
  return j;
}

std::shared_ptr<const TvaeGenerator> TvaeGenerator::from_json(const json& j) {
  TvaeOptions o;
  const json& oj = j.at("options");
  o.latent_dim = oj.at("latent_dim").get<std::size_t>();
  o.hidden = oj.at("hidden").get<std::size_t>();
  o.epochs = oj.at("epochs").get<std::size_t>();
  o.batch_size = oj.at("batch_size").get<std::size_t>();
  o.learning_rate = oj.at("learning_rate").get<double>();
  return std::make_shared<const TvaeGenerator>(
      columns_from_json(j.at("columns")), j.at("training_fingerprints").get<std::vector<std::uint64_t>>(), o,
      j.at("means").get<std::vector<double>>(), j.at("scales").get<std::vector<double>>(),
      j.at("params").get<std::vector<double>>(), j.at("loss_history").get<std::vector<double>>());
}

std::shared_ptr<const TvaeGenerator> fit_tvae(const Table& rows, const TvaeOptions& options, std::uint64_t seed) {
  if (rows.n_rows() < 50) throw ValidationError("tvae: need at least 50 rows to fit");
  if (options.latent_dim < 1 || options.hidden < 1 || options.epochs < 1 || options.batch_size < 1 ||
      !(options.learning_rate > 0.0)) {
    throw ValidationError("tvae: invalid options");
  }
  validate_rows(rows, false);
  const Layout l = layout_of(rows.schema());
  const std::size_t n = rows.n_rows();
  std::vector<double> means, scales;
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(l.width), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < l.numeric.size(); ++i) {
    auto v = rows.column(l.numeric[i]);
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double a : v) ss += (a - m) * (a - m);
    double s = std::sqrt(ss / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
    means.push_back(m);
    scales.push_back(s);
    for (std::size_t r = 0; r < n; ++r) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = (v[r] - m) / s;
  }
  auto start = static_cast<Eigen::Index>(l.numeric.size());
  for (std::size_t g = 0; g < l.categorical.size(); ++g) {
    auto v = rows.column(l.categorical[g]);
    for (std::size_t r = 0; r < n; ++r) x(start + static_cast<Eigen::Index>(v[r]), static_cast<Eigen::Index>(r)) = 1.0;
    start += static_cast<Eigen::Index>(l.sizes[g]);
  }

  const TvaeNetwork net(l.width, l.numeric.size(), l.sizes, options.hidden, options.latent_dim);
  Rng rng(derive_seed(seed, "tvae"));
  std::vector<double> params, grad;
  net.init(params, rng);
  std::vector<double> mom(params.size(), 0.0), vel(params.size(), 0.0), history;
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t s = 0; s < n; s += options.batch_size) {
      const std::size_t e = std::min(n, s + options.batch_size);
      const auto bsz = static_cast<Eigen::Index>(e - s);
      Matrix xb(x.rows(), bsz), eps(static_cast<Eigen::Index>(options.latent_dim), bsz);
      for (Eigen::Index c = 0; c < bsz; ++c) {
        xb.col(c) = x.col(static_cast<Eigen::Index>(order[s + static_cast<std::size_t>(c)]));
        for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = rng.normal();
      }
      const double loss = net.loss_gradient(params, xb, eps, &grad);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "tvae: non-finite loss at epoch " << epoch << " (learning rate " << options.learning_rate << ")";
        throw ComputeError(msg.str());
      }
      total += loss * static_cast<double>(bsz);
      b1t *= beta1;
      b2t *= beta2;
      for (std::size_t i = 0; i < params.size(); ++i) {
        mom[i] = beta1 * mom[i] + (1 - beta1) * grad[i];
        vel[i] = beta2 * vel[i] + (1 - beta2) * grad[i] * grad[i];
        params[i] -= options.learning_rate * (mom[i] / (1 - b1t)) / (std::sqrt(vel[i] / (1 - b2t)) + adam_eps);
      }
    }
    history.push_back(total / static_cast<double>(n));
  }
  return std::make_shared<const TvaeGenerator>(rows.schema(), rows.fingerprints(), options, std::move(means),
                                               std::move(scales), std::move(params), std::move(history));
}

}  // namespace raretab
