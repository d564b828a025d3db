#include "raretab/synthgen.hpp"
#include "raretab/schema_json.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace raretab {

using nlohmann::json;

std::string_view to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::copula: return "copula";
    case GeneratorKind::arf: return "arf";
    case GeneratorKind::tvae: return "tvae";
    case GeneratorKind::edge: return "edge";
  }
  return "unknown";
}

GeneratorKind generator_kind_from_string(std::string_view name) {
  if (name == "copula" || name == "gaussian_copula") return GeneratorKind::copula;
  if (name == "arf") return GeneratorKind::arf;
  if (name == "tvae") return GeneratorKind::tvae;
  if (name == "edge") return GeneratorKind::edge;
  throw ValidationError("unknown generator '" + std::string(name) + "'");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile: p must be in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

Generator::Generator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints)
    : schema_(std::move(schema)), fingerprints_(std::move(fingerprints)) {
  std::sort(fingerprints_.begin(), fingerprints_.end());
}

Table Generator::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<std::vector<double>> cols =
      n == 0 ? std::vector<std::vector<double>>(schema_.size()) : sample_columns(n, rng);
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), kSyntheticRowIdBase);
  Table t(schema_, std::move(cols), Labels(n, 1), std::move(ids));
  validate_rows(t, false);
  return t;
}

json Generator::base_json() const {
  return {{"type", std::string(to_string(kind()))},
          {"columns", columns_to_json(schema_)},
          {"training_fingerprints", fingerprints_}};
}

// ---------------------------------------------------------------------------
// Gaussian copula

Matrix nearest_correlation(const Matrix& m, double min_eigen) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  Vector ev = es.eigenvalues().cwiseMax(min_eigen);
  Matrix r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  const Vector d = r.diagonal().cwiseSqrt().cwiseInverse();
  r = d.asDiagonal() * r * d.asDiagonal();
  r.diagonal().setOnes();
  return 0.5 * (r + r.transpose());
}

CopulaGenerator::CopulaGenerator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints,
                                 std::vector<Marginal> marginals, Matrix correlation)
    : Generator(std::move(schema), std::move(fingerprints)),
      marginals_(std::move(marginals)),
      corr_(std::move(correlation)) {
  const auto d = static_cast<Eigen::Index>(this->schema().size());
  if (marginals_.size() != this->schema().size() || corr_.rows() != d || corr_.cols() != d) {
    throw ValidationError("copula: correlation size differs from column count");
  }
  Eigen::LLT<Matrix> llt(corr_);
  if (llt.info() != Eigen::Success) throw ValidationError("copula: correlation is not positive definite");
  chol_ = llt.matrixL();
}

std::shared_ptr<const CopulaGenerator> CopulaGenerator::with_correlation(const Matrix& correlation) const {
  return std::make_shared<const CopulaGenerator>(schema(), training_fingerprints(), marginals_, correlation);
}

std::vector<std::vector<double>> CopulaGenerator::sample_columns(std::size_t n, Rng& rng) const {
  const std::size_t d = schema().size();
  std::vector<std::vector<double>> cols(d, std::vector<double>(n));
  Vector g(static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < n; ++r) {
    for (Eigen::Index j = 0; j < g.size(); ++j) g(j) = rng.normal();
    const Vector z = chol_ * g;
    for (std::size_t c = 0; c < d; ++c) {
      const double u = normal_cdf(z(static_cast<Eigen::Index>(c)));
      const Marginal& m = marginals_[c];
      if (schema()[c].is_categorical()) {
        std::size_t k = 0;
        while (k + 1 < m.cumulative.size() && u >= m.cumulative[k]) ++k;
        cols[c][r] = static_cast<double>(k);
      } else {
        const double h = u * static_cast<double>(m.sorted.size() - 1);
        const auto lo = std::min(static_cast<std::size_t>(h), m.sorted.size() - 1);
        const std::size_t hi = std::min(lo + 1, m.sorted.size() - 1);
        cols[c][r] = m.sorted[lo] + (h - static_cast<double>(lo)) * (m.sorted[hi] - m.sorted[lo]);
      }
    }
  }
  return cols;
}

json CopulaGenerator::to_json() const {
  json j = base_json();
  json marg = json::array();
  for (const auto& m : marginals_) marg.push_back({{"sorted", m.sorted}, {"cumulative", m.cumulative}});
  j["marginals"] = std::move(marg);
  std::vector<std::vector<double>> corr(static_cast<std::size_t>(corr_.rows()));
  for (Eigen::Index i = 0; i < corr_.rows(); ++i) {
    for (Eigen::Index k = 0; k < corr_.cols(); ++k) corr[static_cast<std::size_t>(i)].push_back(corr_(i, k));
  }
  j["correlation"] = corr;
  return j;
}

std::shared_ptr<const CopulaGenerator> CopulaGenerator::from_json(const json& j) {
  std::vector<Marginal> marginals;
  for (const auto& m : j.at("marginals")) {
    marginals.push_back({m.at("sorted").get<std::vector<double>>(), m.at("cumulative").get<std::vector<double>>()});
  }
  const auto rows = j.at("correlation").get<std::vector<std::vector<double>>>();
  Matrix corr(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw ValidationError("copula: correlation must be square");
    for (std::size_t k = 0; k < rows.size(); ++k) {
      corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return std::make_shared<const CopulaGenerator>(columns_from_json(j.at("columns")),
                                                 j.at("training_fingerprints").get<std::vector<std::uint64_t>>(),
                                                 std::move(marginals), std::move(corr));
}

std::shared_ptr<const CopulaGenerator> fit_gaussian_copula(const Table& rows) {
  if (rows.n_rows() < 5) throw ValidationError("copula: need at least 5 rows to fit");
  validate_rows(rows, false);
  const std::size_t n = rows.n_rows(), d = rows.n_cols();
  std::vector<CopulaGenerator::Marginal> marginals(d);
  Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t c = 0; c < d; ++c) {
    auto values = rows.column(c);
    auto& m = marginals[c];
    const auto col = static_cast<Eigen::Index>(c);
    if (rows.column_schema(c).is_categorical()) {
      const std::size_t levels = rows.column_schema(c).categories.size();
      std::vector<double> freq(levels, 0.0);
      for (double v : values) freq[static_cast<std::size_t>(v)] += 1.0 / static_cast<double>(n);
      double acc = 0.0;
      std::vector<double> mid(levels);
      for (std::size_t k = 0; k < levels; ++k) {
        mid[k] = acc + 0.5 * freq[k];
        acc += freq[k];
        m.cumulative.push_back(acc);
      }
      m.cumulative.back() = 1.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double u = std::clamp(mid[static_cast<std::size_t>(values[r])], 1e-12, 1.0 - 1e-12);
        z(static_cast<Eigen::Index>(r), col) = normal_quantile(u);
      }
    } else {
      m.sorted.assign(values.begin(), values.end());
      std::sort(m.sorted.begin(), m.sorted.end());
      for (std::size_t r = 0; r < n; ++r) {
        // Average rank of the value among the training rows, 1-based.
        const auto lo = std::lower_bound(m.sorted.begin(), m.sorted.end(), values[r]) - m.sorted.begin();
        const auto hi = std::upper_bound(m.sorted.begin(), m.sorted.end(), values[r]) - m.sorted.begin();
        const double rank = 0.5 * static_cast<double>(lo + 1 + hi);
        z(static_cast<Eigen::Index>(r), col) = normal_quantile(rank / static_cast<double>(n + 1));
      }
    }
  }
  Matrix centered = z.rowwise() - z.colwise().mean();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  Matrix corr = Matrix::Identity(cov.rows(), cov.cols());
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    for (Eigen::Index k = 0; k < cov.cols(); ++k) {
      if (i == k) continue;
      const double s = std::sqrt(cov(i, i) * cov(k, k));
      corr(i, k) = s > 1e-12 ? cov(i, k) / s : 0.0;
    }
  }
  return std::make_shared<const CopulaGenerator>(rows.schema(), rows.fingerprints(), std::move(marginals),
                                                 nearest_correlation(corr));
}

// ---------------------------------------------------------------------------
// Edge cohorts

EdgeSampler::EdgeSampler(std::vector<ColumnSchema> schema, EdgeCaseSpec spec)
    : Generator(std::move(schema), {}), spec_(std::move(spec)) {
  spec_.validate_against(this->schema());
}

std::vector<std::vector<double>> EdgeSampler::sample_columns(std::size_t n, Rng& rng) const {
  const auto& cols_schema = schema();
  std::vector<std::vector<double>> cols(cols_schema.size(), std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cols_schema.size(); ++c) {
      const EdgeDistribution& d = spec_.columns.at(cols_schema[c].name);
      if (cols_schema[c].is_categorical()) {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t k = 0;
        // Last category with positive mass absorbs rounding slack.
        std::size_t last = 0;
        for (std::size_t i = 0; i < d.probs.size(); ++i) {
          if (d.probs[i] > 0.0) last = i;
        }
        for (k = 0; k < last; ++k) {
          acc += d.probs[k];
          if (u < acc) break;
        }
        cols[c][r] = static_cast<double>(k);
      } else {
        cols[c][r] = d.sigma > 0.0 ? rng.normal(d.mu, d.sigma) : d.mu;
      }
    }
  }
  return cols;
}

json EdgeSampler::to_json() const {
  std::vector<ColumnSchema> cols = schema();
  for (auto& c : cols) c.edge = spec_.columns.at(c.name);
  json j = base_json();
  j["columns"] = columns_to_json(cols);
  return j;
}

Table sample_edge_cases(std::span<const ColumnSchema> schema, const EdgeCaseSpec& spec, std::size_t n,
                        std::uint64_t seed) {
  return EdgeSampler(std::vector<ColumnSchema>(schema.begin(), schema.end()), spec).sample(n, seed);
}

// ---------------------------------------------------------------------------

GeneratorPtr fit_generator(GeneratorKind kind, const Table& rows, const GeneratorOptions& options,
                           std::uint64_t seed) {
  switch (kind) {
    case GeneratorKind::copula: return fit_gaussian_copula(rows);
    case GeneratorKind::arf: return fit_arf(rows, options.arf, seed);
    case GeneratorKind::tvae: return fit_tvae(rows, options.tvae, seed);
    case GeneratorKind::edge: break;
  }
  throw ValidationError("fit_generator: edge cohorts come from the edge spec, not from rows");
}

GeneratorPtr generator_from_json(const json& j) {
  try {
    switch (generator_kind_from_string(j.at("type").get<std::string>())) {
      case GeneratorKind::copula: return CopulaGenerator::from_json(j);
      case GeneratorKind::arf: return ArfGenerator::from_json(j);
      case GeneratorKind::tvae: return TvaeGenerator::from_json(j);
      case GeneratorKind::edge: {
        auto cols = columns_from_json(j.at("columns"));
        EdgeCaseSpec spec = EdgeCaseSpec::from_columns(cols);
        return std::make_shared<const EdgeSampler>(std::move(cols), std::move(spec));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("generator: malformed document: ") + e.what());
  }
  throw ValidationError("generator: unknown type");
}

}  // namespace raretab
