#include "raretab/preprocess.hpp"
#include "raretab/schema_json.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace raretab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Sparse columns

std::vector<std::size_t> sparse_columns(const Table& t, std::size_t max_missing) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    if (t.missing_count(c) > max_missing) out.push_back(c);
  }
  return out;
}

Table drop_sparse_columns(const Table& t, std::size_t max_missing) {
  const auto sparse = sparse_columns(t, max_missing);
  if (sparse.empty()) return t;
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    if (!std::binary_search(sparse.begin(), sparse.end(), c)) keep.push_back(c);
  }
  if (keep.empty()) throw ValidationError("drop_sparse_columns: all columns removed");
  return t.select_columns(std::span<const std::size_t>(keep));
}

// ---------------------------------------------------------------------------
// Imputer

namespace {

struct WorkingColumns {
  std::vector<std::vector<double>> cols;
  std::vector<std::vector<bool>> missing;
};

WorkingColumns initial_fill(const Table& t, const std::vector<double>& fill) {
  WorkingColumns w;
  w.cols.resize(t.n_cols());
  w.missing.resize(t.n_cols());
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    auto src = t.column(c);
    w.cols[c].assign(src.begin(), src.end());
    w.missing[c] = t.missing_mask(c);
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
      if (w.missing[c][r]) w.cols[c][r] = fill[c];
    }
  }
  return w;
}

double column_mode(std::span<const double> values, std::size_t levels) {
  std::vector<std::size_t> counts(levels, 0);
  for (double v : values) {
    if (!std::isnan(v)) ++counts[static_cast<std::size_t>(v)];
  }
  return static_cast<double>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

double column_mean(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return sum / static_cast<double>(n);
}

}  // namespace

Imputer Imputer::fit(const Table& train, const ImputeOptions& options) {
  if (!(options.tol >= 0.0)) throw ValidationError("impute: tol must be >= 0");
  if (!(options.ridge >= 0.0)) throw ValidationError("impute: ridge must be >= 0");
  Imputer imp;
  for (std::size_t c = 0; c < train.n_cols(); ++c) {
    const auto& col = train.column_schema(c);
    imp.names_.push_back(col.name);
    if (train.n_rows() == 0 || train.missing_count(c) == train.n_rows()) {
      throw ValidationError("impute: column '" + col.name + "' is entirely missing");
    }
    if (col.is_categorical()) {
      imp.fill_.push_back(column_mode(train.column(c), col.categories.size()));
    } else {
      imp.fill_.push_back(column_mean(train.column(c)));
      imp.numeric_.push_back(c);
    }
  }
  if (train.missing_total() == 0 && imp.numeric_.size() < 2) return imp;

  WorkingColumns w = initial_fill(train, imp.fill_);
  const std::size_t p = imp.numeric_.size();
  for (std::size_t round = 0; round < options.rounds; ++round) {
    std::vector<Regressor> regs;
    double max_change = 0.0;
    for (std::size_t ti = 0; ti < p; ++ti) {
      const std::size_t target = imp.numeric_[ti];
      const auto& miss = w.missing[target];
      std::vector<std::size_t> rows;
      for (std::size_t r = 0; r < train.n_rows(); ++r) {
        if (!miss[r]) rows.push_back(r);
      }
      const auto n = static_cast<Eigen::Index>(rows.size());
      const auto q = static_cast<Eigen::Index>(p - 1);
      Matrix X(n, q);
      Vector y(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = w.cols[target][rows[i]];
        Eigen::Index k = 0;
        for (std::size_t fi = 0; fi < p; ++fi) {
          if (fi == ti) continue;
          X(i, k++) = w.cols[imp.numeric_[fi]][rows[i]];
        }
      }
      Regressor reg;
      reg.column = target;
      reg.coef.assign(p, 0.0);
      const double y_mean = y.mean();
      if (q > 0) {
        const Vector x_mean = X.colwise().mean();
        X.rowwise() -= x_mean.transpose();
        Matrix gram = X.transpose() * X;
        gram.diagonal().array() += options.ridge;
        const Vector beta = gram.ldlt().solve(X.transpose() * (y.array() - y_mean).matrix());
        reg.intercept = y_mean - beta.dot(x_mean);
        Eigen::Index k = 0;
        for (std::size_t fi = 0; fi < p; ++fi) {
          if (fi != ti) reg.coef[fi] = beta(k++);
        }
      } else {
        reg.intercept = y_mean;
      }
      for (std::size_t r = 0; r < train.n_rows(); ++r) {
        if (!miss[r]) continue;
        double v = reg.intercept;
        for (std::size_t fi = 0; fi < p; ++fi) v += reg.coef[fi] * w.cols[imp.numeric_[fi]][r];
        max_change = std::max(max_change, std::abs(v - w.cols[target][r]));
        w.cols[target][r] = v;
      }
      regs.push_back(std::move(reg));
    }
    imp.rounds_.push_back(std::move(regs));
    imp.max_changes_.push_back(max_change);
    if (!std::isfinite(max_change)) throw ComputeError("impute: non-finite update");
    if (max_change < options.tol) break;
  }
  return imp;
}

void Imputer::apply_round(std::vector<std::vector<double>>& cols,
                          const std::vector<std::vector<bool>>& missing,
                          const std::vector<Regressor>& round) const {
  const std::size_t n = cols.empty() ? 0 : cols.front().size();
  for (const auto& reg : round) {
    const auto& miss = missing[reg.column];
    for (std::size_t r = 0; r < n; ++r) {
      if (!miss[r]) continue;
      double v = reg.intercept;
      for (std::size_t fi = 0; fi < numeric_.size(); ++fi) v += reg.coef[fi] * cols[numeric_[fi]][r];
      cols[reg.column][r] = v;
    }
  }
}

Table Imputer::transform(const Table& t) const {
  if (t.n_cols() != names_.size()) throw ValidationError("impute: column count differs from fit");
  for (std::size_t c = 0; c < names_.size(); ++c) {
    if (t.column_schema(c).name != names_[c]) {
      throw ValidationError("impute: column '" + t.column_schema(c).name + "' does not match fit");
    }
  }
  if (t.missing_total() == 0) return t;
  WorkingColumns w = initial_fill(t, fill_);
  for (const auto& round : rounds_) apply_round(w.cols, w.missing, round);
  return Table(t.schema(), std::move(w.cols), t.target(), t.row_ids());
}

json Imputer::to_json() const {
  json rounds = json::array();
  for (const auto& round : rounds_) {
    json regs = json::array();
    for (const auto& reg : round) {
      regs.push_back({{"column", reg.column}, {"intercept", reg.intercept}, {"coef", reg.coef}});
    }
    rounds.push_back(std::move(regs));
  }
  return {{"columns", names_},
          {"fill", fill_},
          {"numeric", numeric_},
          {"rounds", std::move(rounds)},
          {"max_changes", max_changes_}};
}

Imputer Imputer::from_json(const json& j) {
  Imputer imp;
  imp.names_ = j.at("columns").get<std::vector<std::string>>();
  imp.fill_ = j.at("fill").get<std::vector<double>>();
  imp.numeric_ = j.at("numeric").get<std::vector<std::size_t>>();
  imp.max_changes_ = j.at("max_changes").get<std::vector<double>>();
  for (const auto& round : j.at("rounds")) {
    std::vector<Regressor> regs;
    for (const auto& r : round) {
      Regressor reg;
      reg.column = r.at("column").get<std::size_t>();
      reg.intercept = r.at("intercept").get<double>();
      reg.coef = r.at("coef").get<std::vector<double>>();
      if (reg.coef.size() != imp.numeric_.size() || reg.column >= imp.names_.size()) {
        throw ValidationError("impute: malformed regressor");
      }
      regs.push_back(std::move(reg));
    }
    imp.rounds_.push_back(std::move(regs));
  }
  if (imp.fill_.size() != imp.names_.size()) throw ValidationError("impute: malformed fill values");
  return imp;
}

Table impute(const Table& t, std::size_t rounds, double tol) {
  ImputeOptions opts;
  opts.rounds = rounds;
  opts.tol = tol;
  return Imputer::fit(t, opts).transform(t);
}

// ---------------------------------------------------------------------------
// One-hot

std::vector<std::vector<std::size_t>> FeatureLayout::groups() const {
  std::vector<std::vector<std::size_t>> by_source(source_names.size());
  for (std::size_t s = 0; s < slot_source.size(); ++s) by_source[slot_source[s]].push_back(s);
  std::vector<std::vector<std::size_t>> out;
  for (auto& g : by_source) {
    if (!g.empty()) out.push_back(std::move(g));
  }
  return out;
}

FeatureLayout FeatureLayout::select(std::span<const std::size_t> slots) const {
  FeatureLayout out;
  out.source_names = source_names;
  for (std::size_t s : slots) {
    if (s >= width()) throw ValidationError("feature layout: slot out of range");
    out.slot_names.push_back(slot_names[s]);
    out.slot_source.push_back(slot_source[s]);
  }
  return out;
}

FeatureLayout one_hot_layout(std::span<const ColumnSchema> schema) {
  FeatureLayout layout;
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& col = schema[c];
    layout.source_names.push_back(col.name);
    if (col.is_categorical()) {
      for (const auto& cat : col.categories) {
        layout.slot_names.push_back(col.name + "=" + cat);
        layout.slot_source.push_back(c);
      }
    } else {
      layout.slot_names.push_back(col.name);
      layout.slot_source.push_back(c);
    }
  }
  return layout;
}

Matrix one_hot_encode(const Table& t) {
  const FeatureLayout layout = one_hot_layout(t.schema());
  Matrix X = Matrix::Zero(static_cast<Eigen::Index>(t.n_rows()), static_cast<Eigen::Index>(layout.width()));
  Eigen::Index slot = 0;
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    const auto& col = t.column_schema(c);
    auto values = t.column(c);
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
      const double v = values[r];
      if (std::isnan(v)) {
        throw ValidationError("one_hot_encode: missing cell in column '" + col.name + "' row " +
                              std::to_string(r));
      }
      const auto row = static_cast<Eigen::Index>(r);
      if (col.is_categorical()) {
        X(row, slot + static_cast<Eigen::Index>(v)) = 1.0;
      } else {
        X(row, slot) = v;
      }
    }
    slot += col.is_categorical() ? static_cast<Eigen::Index>(col.categories.size()) : 1;
  }
  return X;
}

// ---------------------------------------------------------------------------
// Scaling

Scaler Scaler::fit(const Matrix& X) {
  if (X.rows() == 0) throw ValidationError("standardize: empty fit matrix");
  Scaler s;
  s.mean = X.colwise().mean().transpose();
  s.scale = Vector::Ones(X.cols());
  s.constant.assign(static_cast<std::size_t>(X.cols()), false);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.mean(j)).square().mean();
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) {
      s.scale(j) = sd;
    } else {
      s.constant[static_cast<std::size_t>(j)] = true;
    }
  }
  return s;
}

Matrix Scaler::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) throw ValidationError("standardize: column count differs from fit");
  Matrix out = (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
  for (std::size_t j = 0; j < constant.size(); ++j) {
    if (constant[j]) out.col(static_cast<Eigen::Index>(j)).setZero();
  }
  return out;
}

// ---------------------------------------------------------------------------
// ANOVA

std::vector<AnovaScore> anova_f_scores(const Matrix& X, const Labels& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ValidationError("anova: row count mismatch");
  require_both_classes(y, "anova");
  const double n = static_cast<double>(y.size());
  const double n1 = static_cast<double>(count_positives(y));
  const double n0 = n - n1;
  std::vector<AnovaScore> out;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? s1 : s0) += X(static_cast<Eigen::Index>(i), j);
    const double m0 = s0 / n0, m1 = s1 / n1, m = (s0 + s1) / n;
    double ssw = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = X(static_cast<Eigen::Index>(i), j) - (y[i] ? m1 : m0);
      ssw += d * d;
    }
    AnovaScore s;
    s.feature = static_cast<std::size_t>(j);
    s.ms_between = n0 * (m0 - m) * (m0 - m) + n1 * (m1 - m) * (m1 - m);
    s.ms_within = n > 2 ? ssw / (n - 2.0) : 0.0;
    if (s.ms_within > 0.0) {
      s.f = s.ms_between / s.ms_within;
    } else {
      s.degenerate = true;
      s.f = s.ms_between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    out.push_back(s);
  }
  return out;
}

std::vector<std::size_t> select_top_k(std::span<const AnovaScore> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw ValidationError("select_top_k: k must be in [1, " + std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a].f > scores[b].f; });
  order.resize(k);
  for (auto& i : order) i = scores[i].feature;
  return order;
}

// ---------------------------------------------------------------------------
// Pipeline

FittedPipeline FittedPipeline::fit(const Table& train, const PipelineOptions& options) {
  FittedPipeline p;
  std::size_t threshold = train.n_rows();
  if (options.max_missing) threshold = std::min(threshold, *options.max_missing);
  if (options.max_missing_fraction) {
    const double f = *options.max_missing_fraction;
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("pipeline: max_missing_fraction must be in [0, 1]");
    threshold = std::min(threshold, static_cast<std::size_t>(std::floor(f * static_cast<double>(train.n_rows()))));
  }
  const Table dropped = drop_sparse_columns(train, threshold);
  for (const auto& col : dropped.schema()) p.kept_.push_back(col.name);
  p.cleaned_schema_ = dropped.schema();
  p.imputer_ = Imputer::fit(dropped, options.impute);
  const Table cleaned = p.imputer_.transform(dropped);

  const Matrix raw = one_hot_encode(cleaned);
  p.scaler_ = Scaler::fit(raw);
  const Matrix scaled = p.scaler_.apply(raw);
  p.anova_ = anova_f_scores(scaled, cleaned.target());
  if (options.select_k) {
    p.selected_ = select_top_k(p.anova_, *options.select_k);
  } else {
    p.selected_.resize(static_cast<std::size_t>(scaled.cols()));
    std::iota(p.selected_.begin(), p.selected_.end(), std::size_t{0});
  }
  p.layout_ = one_hot_layout(p.cleaned_schema_).select(p.selected_);
  return p;
}

Table FittedPipeline::clean(const Table& t) const {
  return imputer_.transform(t.select_columns(std::span<const std::string>(kept_)));
}

Matrix FittedPipeline::encode(const Table& cleaned) const {
  if (cleaned.n_cols() != cleaned_schema_.size()) throw ValidationError("pipeline: table is not cleaned");
  for (std::size_t c = 0; c < cleaned_schema_.size(); ++c) {
    const auto& a = cleaned.column_schema(c);
    const auto& b = cleaned_schema_[c];
    if (a.name != b.name || a.kind != b.kind || a.categories != b.categories) {
      throw ValidationError("pipeline: column '" + a.name + "' does not match the fitted schema");
    }
  }
  const Matrix scaled = scaler_.apply(one_hot_encode(cleaned));
  Matrix out(scaled.rows(), static_cast<Eigen::Index>(selected_.size()));
  for (std::size_t j = 0; j < selected_.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = scaled.col(static_cast<Eigen::Index>(selected_[j]));
  }
  return out;
}

namespace {

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json FittedPipeline::to_json() const {
  json anova = json::array();
  for (const auto& s : anova_) {
    anova.push_back({{"feature", s.feature},
                     {"f", finite_or_null(s.f)},
                     {"ms_between", s.ms_between},
                     {"ms_within", s.ms_within},
                     {"degenerate", s.degenerate}});
  }
  std::vector<int> constant(scaler_.constant.begin(), scaler_.constant.end());
  return {{"kept_columns", kept_},
          {"columns", columns_to_json(cleaned_schema_)},
          {"imputer", imputer_.to_json()},
          {"scaler", {{"mean", vector_json(scaler_.mean)}, {"scale", vector_json(scaler_.scale)}, {"constant", constant}}},
          {"anova", std::move(anova)},
          {"selected", selected_}};
}

FittedPipeline FittedPipeline::from_json(const json& j) {
  FittedPipeline p;
  p.kept_ = j.at("kept_columns").get<std::vector<std::string>>();
  p.cleaned_schema_ = columns_from_json(j.at("columns"));
  p.imputer_ = Imputer::from_json(j.at("imputer"));
  const auto& sc = j.at("scaler");
  p.scaler_.mean = vector_from(sc.at("mean"));
  p.scaler_.scale = vector_from(sc.at("scale"));
  for (int c : sc.at("constant").get<std::vector<int>>()) p.scaler_.constant.push_back(c != 0);
  for (const auto& a : j.at("anova")) {
    AnovaScore s;
    s.feature = a.at("feature").get<std::size_t>();
    s.f = a.at("f").is_null() ? std::numeric_limits<double>::infinity() : a.at("f").get<double>();
    s.ms_between = a.at("ms_between").get<double>();
    s.ms_within = a.at("ms_within").get<double>();
    s.degenerate = a.at("degenerate").get<bool>();
    p.anova_.push_back(s);
  }
  p.selected_ = j.at("selected").get<std::vector<std::size_t>>();
  p.layout_ = one_hot_layout(p.cleaned_schema_).select(p.selected_);
  return p;
}

}  // namespace raretab
