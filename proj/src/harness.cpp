#include "raretab/harness.hpp"

#include "raretab/parallel.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace raretab {

using nlohmann::json;

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string short_number(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::size_t parse_count(std::string_view s, const std::string& context) {
  std::size_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ValidationError("regime '" + context + "': bad count '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split_args(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    auto part = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    out.push_back(part);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Table with_row_ids(const Table& t, std::uint64_t first) {
  std::vector<std::vector<double>> cols;
  for (std::size_t c = 0; c < t.n_cols(); ++c) cols.emplace_back(t.column(c).begin(), t.column(c).end());
  std::vector<std::uint64_t> ids(t.n_rows());
  std::iota(ids.begin(), ids.end(), first);
  return Table(t.schema(), std::move(cols), t.target(), std::move(ids));
}

std::vector<std::size_t> positive_rows(const Labels& y) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 1) rows.push_back(i);
  }
  return rows;
}

std::uint64_t model_seed(std::uint64_t fold_seed, const std::string& name) {
  return derive_seed(fold_seed, "model:" + name);
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

// ---------------------------------------------------------------------------

std::size_t RegimeSpec::synth_count(std::size_t minority) const {
  if (synth_multiple) return static_cast<std::size_t>(std::llround(*synth_multiple * static_cast<double>(minority)));
  return n_synth;
}

std::string RegimeSpec::label() const {
  const std::string synth = synth_multiple ? "x" + short_number(*synth_multiple) : std::to_string(n_synth);
  const std::string gen(to_string(generator));
  switch (kind) {
    case RegimeKind::none: return "none";
    case RegimeKind::generator: return "generator(" + gen + "," + synth + ")";
    case RegimeKind::edge: return "edge(" + std::to_string(n_edge) + ")";
    case RegimeKind::generator_plus_edge:
      return "generator_plus_edge(" + gen + "," + synth + "," + std::to_string(n_edge) + ")";
  }
  return "unknown";
}

RegimeSpec RegimeSpec::parse(std::string_view text) {
  const std::string context(text);
  RegimeSpec r;
  std::string_view head = text;
  std::vector<std::string_view> args;
  if (const auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') throw ValidationError("regime '" + context + "': missing ')'");
    head = text.substr(0, open);
    args = split_args(text.substr(open + 1, text.size() - open - 2));
  }
  const auto read_synth = [&](std::string_view s) {
    if (!s.empty() && s.front() == 'x') {
      double m = 0.0;
      auto res = std::from_chars(s.data() + 1, s.data() + s.size(), m);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError("regime '" + context + "': bad multiple '" + std::string(s) + "'");
      }
      r.synth_multiple = m;
    } else {
      r.n_synth = parse_count(s, context);
    }
  };
  if (head == "none") {
    if (!args.empty()) throw ValidationError("regime '" + context + "': none takes no arguments");
  } else if (head == "edge") {
    r.kind = RegimeKind::edge;
    if (args.size() > 1) throw ValidationError("regime '" + context + "': edge takes at most one count");
    if (args.size() == 1) r.n_edge = parse_count(args[0], context);
  } else if (head == "generator" || head == "generator_plus_edge") {
    r.kind = head == "generator" ? RegimeKind::generator : RegimeKind::generator_plus_edge;
    const std::size_t max_args = r.kind == RegimeKind::generator ? 2 : 3;
    if (args.empty() || args.size() > max_args) {
      throw ValidationError("regime '" + context + "': expected a generator name and up to " +
                            std::to_string(max_args - 1) + " counts");
    }
    r.generator = generator_kind_from_string(args[0]);
    if (args.size() >= 2) read_synth(args[1]);
    if (args.size() == 3) r.n_edge = parse_count(args[2], context);
  } else {
    r.kind = RegimeKind::generator;
    r.generator = generator_kind_from_string(head);
    if (args.size() > 1) throw ValidationError("regime '" + context + "': expected one count");
    if (args.size() == 1) read_synth(args[0]);
  }
  r.validate();
  return r;
}

void RegimeSpec::validate() const {
  if (uses_generator() && generator == GeneratorKind::edge) {
    throw ValidationError("regime: use edge(n) for edge-case augmentation, not a generator");
  }
  if (synth_multiple && !(std::isfinite(*synth_multiple) && *synth_multiple >= 0.0)) {
    throw ValidationError("regime: synthetic multiple must be finite and >= 0");
  }
}

GeneratorPtr fit_regime_generator(const Table& train, const RegimeSpec& regime, const GeneratorOptions& options,
                                  std::uint64_t seed) {
  if (!regime.uses_generator()) return nullptr;
  const auto rows = positive_rows(train.target());
  return fit_generator(regime.generator, train.select_rows(rows), options, seed);
}

Table augment_training_fold(const Table& train, const RegimeSpec& regime, const GeneratorPtr& generator,
                            const EdgeCaseSpec* edge, std::uint64_t seed) {
  regime.validate();
  Table out = train;
  std::size_t added = 0;
  if (regime.uses_generator()) {
    if (!generator || generator->kind() != regime.generator) {
      throw ValidationError("augment: regime " + regime.label() + " needs a fitted " +
                            std::string(to_string(regime.generator)) + " generator");
    }
    auto own = train.fingerprints();
    std::sort(own.begin(), own.end());
    for (std::uint64_t f : generator->training_fingerprints()) {
      if (!std::binary_search(own.begin(), own.end(), f)) {
        throw ValidationError("augment: generator was fitted on rows outside the training fold");
      }
    }
    const std::size_t n = regime.synth_count(train.positives());
    out = Table::concat(out, generator->sample(n, derive_seed(seed, "synth")));
    added = n;
  }
  if (regime.uses_edge()) {
    if (edge == nullptr) throw ValidationError("augment: regime " + regime.label() + " needs an edge spec");
    const Table rows = sample_edge_cases(train.schema(), *edge, regime.n_edge, derive_seed(seed, "edge"));
    out = Table::concat(out, with_row_ids(rows, kSyntheticRowIdBase + added));
  }
  return out;
}

void assert_no_leakage(const Table& train, const Table& eval) {
  std::vector<std::uint64_t> ids = train.row_ids();
  std::sort(ids.begin(), ids.end());
  for (std::uint64_t id : eval.row_ids()) {
    if (id >= kSyntheticRowIdBase) throw ComputeError("leakage: synthetic row in an evaluation set");
    if (std::binary_search(ids.begin(), ids.end(), id)) {
      throw ComputeError("leakage: row " + std::to_string(id) + " is on both sides of a split");
    }
  }
}

// ---------------------------------------------------------------------------

json ParamRange::sample(Rng& rng) const {
  switch (kind) {
    case Kind::continuous: return lo + (hi - lo) * rng.uniform();
    case Kind::log_continuous: return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * rng.uniform());
    case Kind::integer: {
      const auto a = static_cast<std::int64_t>(lo), b = static_cast<std::int64_t>(hi);
      return a + static_cast<std::int64_t>(rng.index(static_cast<std::size_t>(b - a + 1)));
    }
    case Kind::categorical: return choices[rng.index(choices.size())];
  }
  return nullptr;
}

void SearchSpace::validate() const {
  for (const auto& r : ranges) {
    const std::string where = "search space '" + r.name + "': ";
    switch (r.kind) {
      case ParamRange::Kind::categorical:
        if (r.choices.empty()) throw ValidationError(where + "no choices");
        break;
      case ParamRange::Kind::log_continuous:
        if (!(r.lo > 0.0)) throw ValidationError(where + "log range needs low > 0");
        [[fallthrough]];
      case ParamRange::Kind::continuous:
      case ParamRange::Kind::integer:
        if (!(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi)) {
          throw ValidationError(where + "needs finite low <= high");
        }
        if (r.kind == ParamRange::Kind::integer && (r.lo != std::floor(r.lo) || r.hi != std::floor(r.hi))) {
          throw ValidationError(where + "integer bounds must be whole numbers");
        }
        break;
    }
  }
}

json SearchSpace::sample(Rng& rng) const {
  json out = json::object();
  for (const auto& r : ranges) out[r.name] = r.sample(rng);
  return out;
}

json SearchSpace::to_json() const {
  json out = json::object();
  for (const auto& r : ranges) {
    switch (r.kind) {
      case ParamRange::Kind::continuous: out[r.name] = {{"type", "uniform"}, {"low", r.lo}, {"high", r.hi}}; break;
      case ParamRange::Kind::log_continuous:
        out[r.name] = {{"type", "log_uniform"}, {"low", r.lo}, {"high", r.hi}};
        break;
      case ParamRange::Kind::integer:
        out[r.name] = {{"type", "int"}, {"low", static_cast<std::int64_t>(r.lo)}, {"high", static_cast<std::int64_t>(r.hi)}};
        break;
      case ParamRange::Kind::categorical: out[r.name] = {{"type", "choice"}, {"values", r.choices}}; break;
    }
  }
  return out;
}

SearchSpace SearchSpace::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("search space must be an object");
  SearchSpace s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    ParamRange r;
    r.name = it.key();
    const json& v = it.value();
    const std::string type = v.value("type", "");
    try {
      if (type == "uniform" || type == "log_uniform" || type == "int") {
        r.kind = type == "uniform"       ? ParamRange::Kind::continuous
                 : type == "log_uniform" ? ParamRange::Kind::log_continuous
                                         : ParamRange::Kind::integer;
        r.lo = v.at("low").get<double>();
        r.hi = v.at("high").get<double>();
      } else if (type == "choice") {
        r.kind = ParamRange::Kind::categorical;
        r.choices = v.at("values").get<std::vector<json>>();
      } else {
        throw ValidationError("search space '" + r.name + "': unknown type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ValidationError("search space '" + r.name + "': " + e.what());
    }
    s.ranges.push_back(std::move(r));
  }
  s.validate();
  return s;
}

SearchSpace default_search_space(ModelFamily family) {
  using K = ParamRange::Kind;
  SearchSpace s;
  switch (family) {
    case ModelFamily::logistic:
      s.ranges = {{"l2", K::log_continuous, 1e-4, 10.0, {}}, {"max_iters", K::integer, 200, 3000, {}}};
      break;
    case ModelFamily::random_forest:
      s.ranges = {{"n_trees", K::integer, 50, 300, {}},  {"max_depth", K::integer, 2, 12, {}},
                  {"min_leaf", K::integer, 1, 20, {}},   {"min_split", K::integer, 2, 40, {}},
                  {"max_features", K::integer, 1, 10, {}}, {"bootstrap", K::categorical, 0, 0, {true, false}}};
      break;
    case ModelFamily::gbdt:
      s.ranges = {{"n_rounds", K::integer, 50, 400, {}},           {"max_depth", K::integer, 2, 6, {}},
                  {"learning_rate", K::log_continuous, 0.01, 0.3, {}}, {"min_child_weight", K::log_continuous, 0.5, 10, {}},
                  {"subsample", K::continuous, 0.5, 1.0, {}},      {"colsample", K::continuous, 0.5, 1.0, {}},
                  {"reg_lambda", K::log_continuous, 0.1, 10.0, {}}};
      break;
    case ModelFamily::kan:
      s.ranges = {{"grid_size", K::integer, 3, 10, {}},
                  {"spline_order", K::integer, 1, 4, {}},
                  {"learning_rate", K::log_continuous, 1e-3, 5e-2, {}},
                  {"positive_class_weight", K::continuous, 1.0, 15.0, {}}};
      break;
  }
  return s;
}

SearchResult random_search(const SearchSpace& space, std::size_t budget,
                           const std::function<double(const json&)>& objective, std::uint64_t seed) {
  if (budget < 1) throw ValidationError("random search: budget must be >= 1");
  space.validate();
  Rng rng(derive_seed(seed, "search"));
  SearchResult result;
  result.trials.resize(budget);
  for (auto& t : result.trials) t.params = space.sample(rng);
  parallel_for(budget, [&](std::size_t i) { result.trials[i].score = objective(result.trials[i].params); });
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < budget; ++i) {
    const double s = result.trials[i].score;
    if (std::isfinite(s) && s > best) {
      best = s;
      result.best_index = i;
    }
  }
  result.best = result.trials[result.best_index].params;
  result.best_score = result.trials[result.best_index].score;
  return result;
}

ModelSpec default_model_spec(ModelFamily family) {
  ModelSpec s;
  s.name = std::string(to_string(family));
  s.hyper = default_params(family);
  s.calibrate = family == ModelFamily::random_forest || family == ModelFamily::gbdt;
  return s;
}

Hyperparams apply_overrides(const Hyperparams& hyper, const json& overrides) {
  json j = params_to_json(hyper);
  for (auto it = overrides.begin(); it != overrides.end(); ++it) j[it.key()] = it.value();
  return params_from_json(family_of(hyper), j);
}

ClassifierPtr train_model(const ModelSpec& spec, const Matrix& X, const Labels& y, std::uint64_t seed) {
  if (spec.calibrate) return calibrate_cv(spec.hyper, X, y, spec.calibration_folds, seed);
  return fit_model(X, y, spec.hyper, seed);
}

// ---------------------------------------------------------------------------

namespace {

using MetricField = std::pair<const char*, double MetricSet::*>;

constexpr std::array<MetricField, 9> kMetricFields{{
    {"accuracy", &MetricSet::accuracy},
    {"precision", &MetricSet::precision},
    {"recall", &MetricSet::recall},
    {"f1", &MetricSet::f1},
    {"auc", &MetricSet::auc},
    {"avg_confidence", &MetricSet::avg_confidence},
    {"avg_entropy", &MetricSet::avg_entropy},
    {"brier", &MetricSet::brier},
    {"ece", &MetricSet::ece},
}};

}  // namespace

const std::vector<std::string>& MetricSet::names() {
  static const std::vector<std::string> n = [] {
    std::vector<std::string> out;
    for (const auto& f : kMetricFields) out.emplace_back(f.first);
    return out;
  }();
  return n;
}

double MetricSet::get(std::string_view name) const {
  for (const auto& f : kMetricFields) {
    if (name == f.first) return this->*(f.second);
  }
  throw ValidationError("unknown metric '" + std::string(name) + "'");
}

json MetricSet::to_json() const {
  json out = json::object();
  for (const auto& f : kMetricFields) out[f.first] = num(this->*(f.second));
  return out;
}

MetricSet compute_metrics(std::span<const double> p, const Labels& y, const EvalSettings& settings) {
  MetricSet m;
  const auto c = classification_metrics(confusion_at_threshold(p, y, settings.threshold));
  m.accuracy = c.accuracy;
  m.precision = c.precision;
  m.recall = c.recall;
  m.f1 = c.f1;
  const std::size_t pos = count_positives(y);
  m.auc = pos > 0 && pos < y.size() ? auc_roc(p, y) : std::numeric_limits<double>::quiet_NaN();
  m.avg_confidence = avg_confidence(p);
  m.avg_entropy = avg_entropy(p);
  m.brier = settings.brier_two_class ? brier_two_class(p, y) : brier(p, y);
  m.ece = ece(p, y, settings.ece_bins, settings.threshold);
  return m;
}

CvResult summarize_folds(std::vector<MetricSet> folds) {
  CvResult r;
  r.folds = std::move(folds);
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    if (std::isnan(r.folds[f].auc)) r.auc_excluded.push_back(f);
  }
  for (const auto& field : kMetricFields) {
    std::vector<double> values;
    for (const auto& m : r.folds) {
      if (std::isfinite(m.*(field.second))) values.push_back(m.*(field.second));
    }
    const MeanStd ms = mean_std(values);
    r.mean.*(field.second) = values.empty() ? std::numeric_limits<double>::quiet_NaN() : ms.mean;
    r.std.*(field.second) = values.empty() ? std::numeric_limits<double>::quiet_NaN() : ms.std;
  }
  return r;
}

json CvResult::to_json() const {
  json f = json::array();
  for (const auto& m : folds) f.push_back(m.to_json());
  return {{"mean", mean.to_json()}, {"std", std.to_json()}, {"folds", f}, {"auc_excluded_folds", auc_excluded}};
}

PreparedFold prepare_fold(const Table& train, const Table& eval, const RegimeSpec& regime, const EdgeCaseSpec* edge,
                          const PrepareOptions& options, std::uint64_t seed) {
  PreparedFold out{FittedPipeline::fit(train, options.pipeline), {}, {}, {}, {}, 0};
  const Table clean_train = out.pipeline.clean(train);
  const GeneratorPtr generator = fit_regime_generator(
      clean_train, regime, options.generators, derive_seed(seed, "generator:" + std::string(to_string(regime.generator))));
  const Table augmented = augment_training_fold(clean_train, regime, generator, edge, seed);
  const Table clean_eval = out.pipeline.clean(eval);
  assert_no_leakage(augmented, clean_eval);
  out.X_train = out.pipeline.encode(augmented);
  out.y_train = augmented.target();
  out.X_eval = out.pipeline.encode(clean_eval);
  out.y_eval = clean_eval.target();
  out.synthetic_rows = augmented.n_rows() - clean_train.n_rows();
  return out;
}

namespace {

std::vector<PreparedFold> prepare_folds(const Table& table, const FoldPlan& folds, const RegimeSpec& regime,
                                        const EdgeCaseSpec* edge, const PrepareOptions& prepare, std::uint64_t seed) {
  std::vector<std::optional<PreparedFold>> slots(folds.k);
  parallel_for(folds.k, [&](std::size_t f) {
    const auto tr = folds.train_rows(f);
    const auto ev = folds.eval_rows(f);
    slots[f] = prepare_fold(table.select_rows(tr), table.select_rows(ev), regime, edge, prepare,
                            derive_seed(seed, "cv", {f}));
  });
  std::vector<PreparedFold> out;
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

MetricSet evaluate_fold(const ModelSpec& spec, const PreparedFold& fold, const EvalSettings& settings,
                        std::uint64_t fold_seed) {
  const ClassifierPtr model = train_model(spec, fold.X_train, fold.y_train, model_seed(fold_seed, spec.name));
  const Vector p = model->predict_proba(fold.X_eval);
  return compute_metrics(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), fold.y_eval,
                         settings);
}

void warn_excluded(const std::string& model, const std::string& regime, const CvResult& r) {
  for (std::size_t f : r.auc_excluded) {
    std::cerr << "warning: " << model << " / " << regime << ": fold " << f
              << " has one class on its eval side; AUC excluded\n";
  }
}

std::vector<CvResult> cv_models(std::span<const ModelSpec> specs, const std::vector<PreparedFold>& folds,
                                const EvalSettings& settings, std::uint64_t seed) {
  const std::size_t k = folds.size();
  std::vector<MetricSet> cells(specs.size() * k);
  parallel_for(cells.size(), [&](std::size_t i) {
    const std::size_t m = i / k, f = i % k;
    cells[i] = evaluate_fold(specs[m], folds[f], settings, derive_seed(seed, "cv", {f}));
  });
  std::vector<CvResult> out;
  for (std::size_t m = 0; m < specs.size(); ++m) {
    out.push_back(summarize_folds(std::vector<MetricSet>(cells.begin() + static_cast<std::ptrdiff_t>(m * k),
                                                         cells.begin() + static_cast<std::ptrdiff_t>((m + 1) * k))));
  }
  return out;
}

}  // namespace

CvResult cv_evaluate(const ModelSpec& spec, const Table& table, const FoldPlan& folds, const RegimeSpec& regime,
                     const EdgeCaseSpec* edge, const PrepareOptions& prepare, const EvalSettings& settings,
                     std::uint64_t seed) {
  if (folds.k < 2 || folds.assignments.size() != table.n_rows()) {
    throw ValidationError("cv_evaluate: fold plan does not match the table");
  }
  const auto prepared = prepare_folds(table, folds, regime, edge, prepare, seed);
  CvResult r = cv_models(std::span<const ModelSpec>(&spec, 1), prepared, settings, seed).front();
  warn_excluded(spec.name, regime.label(), r);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

EdgeCaseSpec effective_edge(const Table& table, const ExperimentConfig& config) {
  return config.edge ? *config.edge : EdgeCaseSpec::from_columns(table.schema());
}

bool needs_edge(const ExperimentConfig& config) {
  if (config.stress_n > 0) return true;
  return std::any_of(config.regimes.begin(), config.regimes.end(), [](const RegimeSpec& r) { return r.uses_edge(); });
}

json config_summary(const ExperimentConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) {
    json e = {{"name", m.name},
              {"family", std::string(to_string(family_of(m.hyper)))},
              {"hyperparams", params_to_json(m.hyper)},
              {"calibrate", m.calibrate},
              {"calibration_folds", m.calibration_folds}};
    if (m.search) e["search"] = m.search->to_json();
    models.push_back(e);
  }
  json regimes = json::array();
  for (const auto& r : c.regimes) regimes.push_back(r.label());
  const auto& a = c.prepare.generators.arf;
  const auto& t = c.prepare.generators.tvae;
  json pipeline = {{"impute_rounds", c.prepare.pipeline.impute.rounds}, {"impute_tol", c.prepare.pipeline.impute.tol}};
  pipeline["max_missing"] = c.prepare.pipeline.max_missing ? json(*c.prepare.pipeline.max_missing) : json(nullptr);
  pipeline["max_missing_fraction"] =
      c.prepare.pipeline.max_missing_fraction ? json(*c.prepare.pipeline.max_missing_fraction) : json(nullptr);
  pipeline["select_k"] = c.prepare.pipeline.select_k ? json(*c.prepare.pipeline.select_k) : json(nullptr);
  return {{"seed", c.seed},
          {"test_frac", c.test_frac},
          {"k_folds", c.k_folds},
          {"models", models},
          {"regimes", regimes},
          {"pipeline", pipeline},
          {"generators",
           {{"arf",
             {{"n_trees", a.n_trees}, {"min_leaf", a.min_leaf}, {"max_depth", a.max_depth}, {"delta", a.delta},
              {"max_rounds", a.max_rounds}}},
            {"tvae",
             {{"latent_dim", t.latent_dim}, {"hidden", t.hidden}, {"epochs", t.epochs}, {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate}}}}},
          {"metrics",
           {{"threshold", c.eval.threshold}, {"ece_bins", c.eval.ece_bins}, {"brier_two_class", c.eval.brier_two_class}}},
          {"stress_n", c.stress_n},
          {"importance_repeats", c.importance_repeats},
          {"search_budget", c.search_budget},
          {"cross_validate", c.cross_validate},
          {"importance", c.importance}};
}

json search_json(const SearchResult& s) {
  json trials = json::array();
  for (const auto& t : s.trials) trials.push_back({{"params", t.params}, {"score", num(t.score)}});
  return {{"best", s.best},
          {"best_score", num(s.best_score)},
          {"best_index", s.best_index},
          {"budget", s.trials.size()},
          {"trials", trials}};
}

}  // namespace

void ExperimentConfig::validate(const Table& table) const {
  std::vector<std::string> errors;
  const auto check = [&](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };
  check(test_frac > 0.0 && test_frac < 1.0, "test_frac must be in (0, 1)");
  check(k_folds >= 2, "k_folds must be >= 2");
  check(!models.empty(), "models: at least one model is required");
  check(!regimes.empty(), "regimes: at least one regime is required");
  check(eval.ece_bins >= 1, "metrics.ece_bins must be >= 1");
  check(eval.threshold >= 0.0 && eval.threshold <= 1.0, "metrics.threshold must be in [0, 1]");
  check(!importance || importance_repeats >= 1, "importance_repeats must be >= 1");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    const std::string where = "models[" + std::to_string(i) + "] (" + m.name + "): ";
    check(!m.name.empty(), where + "name must not be empty");
    check(std::find(names.begin(), names.end(), m.name) == names.end(), where + "duplicate model name");
    names.push_back(m.name);
    try {
      raretab::validate(m.hyper);
    } catch (const ValidationError& e) {
      errors.push_back(where + e.what());
    }
    check(!m.calibrate || m.calibration_folds >= 2, where + "calibration_folds must be >= 2");
    if (m.search) {
      check(search_budget >= 1, where + "search_budget must be >= 1");
      try {
        m.search->validate();
      } catch (const ValidationError& e) {
        errors.push_back(where + e.what());
      }
    }
  }
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    try {
      regimes[i].validate();
    } catch (const ValidationError& e) {
      errors.push_back("regimes[" + std::to_string(i) + "]: " + e.what());
    }
  }
  if (needs_edge(*this)) {
    try {
      effective_edge(table, *this).validate_against(table.schema());
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    }
  }
  if (table.n_rows() == 0) errors.push_back("dataset has no rows");
  if (!errors.empty()) {
    std::string msg = "invalid experiment config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
}

json ResultEntry::to_json() const {
  json j = {{"model", model},
            {"regime", regime.label()},
            {"family", std::string(to_string(family_of(hyper)))},
            {"hyperparams", params_to_json(hyper)},
            {"calibrated", calibrated},
            {"train_rows", train_rows},
            {"confusion", {{"tp", confusion.tp}, {"tn", confusion.tn}, {"fp", confusion.fp}, {"fn", confusion.fn}}},
            {"test", test.to_json()}};
  j["cv"] = cv ? cv->to_json() : json(nullptr);
  std::vector<double> coverage, risk;
  for (const auto& pt : rc.points) {
    coverage.push_back(pt.coverage);
    risk.push_back(pt.risk);
  }
  j["rc_curve"] = {{"auc_rc", rc.auc_rc}, {"coverage", coverage}, {"risk", risk}};
  j["test_probabilities"] = test_probabilities;
  if (edge) {
    j["edge_cohort"] = {{"n", edge_probabilities.size()},
                        {"summary",
                         {{"q0", edge->q0}, {"q50", edge->q50}, {"q99", edge->q99}, {"mean", edge->mean}, {"std", edge->std}}},
                        {"probabilities", edge_probabilities}};
  } else {
    j["edge_cohort"] = nullptr;
  }
  j["importance"] = importance ? raretab::to_json(*importance) : json(nullptr);
  return j;
}

const ResultEntry& ExperimentReport::find(std::string_view model, std::string_view regime) const {
  for (const auto& r : results) {
    if (r.model == model && r.regime.label() == regime) return r;
  }
  throw ValidationError("report: no result for " + std::string(model) + " / " + std::string(regime));
}

const RankTable* ExperimentReport::ranks_for(std::string_view regime) const {
  for (const auto& [label, table] : ranks) {
    if (label == regime) return &table;
  }
  return nullptr;
}

json ExperimentReport::to_json() const {
  json res = json::array();
  for (const auto& r : results) res.push_back(r.to_json());
  json rk = json::array();
  for (const auto& [label, table] : ranks) {
    json t = raretab::to_json(table);
    t["regime"] = label;
    rk.push_back(t);
  }
  return {{"schema_version", kReportSchemaVersion}, {"metadata", metadata}, {"data", data},
          {"tuning", tuning},                       {"results", res},       {"feature_ranks", rk}};
}

json deviations_json() {
  return json::array({
      {{"id", "search"},
       {"description", "seeded uniform random search replaces TPE; objective is mean CV AUC without augmentation"}},
      {{"id", "brier"}, {"description", "Brier score in binary form (half the two-class sum)"}},
      {{"id", "tvae"},
       {"description", "TVAE uses a unit-variance Gaussian decoder on standardized numerics, no mode-specific mixtures"}},
      {{"id", "ece_bins"}, {"description", "ECE uses M equal-width confidence bins over [0, 1]"}},
      {{"id", "tuning_reuse"},
       {"description", "hyperparameters are tuned once without augmentation and reused for every regime"}},
      {{"id", "model_families"}, {"description", "one gradient boosting family stands in for XGBoost and CatBoost"}},
  });
}

ExperimentReport run_experiment(const Table& table, const ExperimentConfig& input) {
  input.validate(table);
  ExperimentConfig config = input;
  const std::uint64_t root = config.seed;
  const EdgeCaseSpec edge = effective_edge(table, config);
  const EdgeCaseSpec* edge_ptr = needs_edge(config) ? &edge : nullptr;

  const std::uint64_t split_seed = derive_seed(root, "split");
  const std::uint64_t fold_seed = derive_seed(root, "folds");
  const std::uint64_t final_seed = derive_seed(root, "final");
  const std::uint64_t stress_seed = derive_seed(root, "stress");
  const std::uint64_t importance_seed = derive_seed(root, "importance");

  const SplitIndices split = stratified_split_indices(table.target(), config.test_frac, split_seed);
  const Table train = table.select_rows(split.train);
  const Table test = table.select_rows(split.test);
  const FoldPlan folds = stratified_kfold(train.target(), config.k_folds, fold_seed);

  ExperimentReport report;
  report.metadata = {{"tool", "raretab"},
                     {"version", "0.1.0"},
                     {"root_seed", root},
                     {"seeds",
                      {{"split", split_seed},
                       {"folds", fold_seed},
                       {"final", final_seed},
                       {"stress", stress_seed},
                       {"importance", importance_seed}}},
                     {"deviations", deviations_json()},
                     {"config", config_summary(config)}};
  report.data = {{"rows", table.n_rows()},
                 {"positives", table.positives()},
                 {"columns", table.n_cols()},
                 {"train_rows", train.n_rows()},
                 {"train_positives", train.positives()},
                 {"test_rows", test.n_rows()},
                 {"test_positives", test.positives()},
                 {"test_labels", test.target()}};

  const RegimeSpec none{};
  std::optional<std::vector<PreparedFold>> none_folds;
  const auto get_none_folds = [&]() -> const std::vector<PreparedFold>& {
    if (!none_folds) none_folds = prepare_folds(train, folds, none, edge_ptr, config.prepare, root);
    return *none_folds;
  };

  for (auto& spec : config.models) {
    if (!spec.search) continue;
    const auto& prepared = get_none_folds();
    const auto objective = [&](const json& params) {
      ModelSpec candidate = spec;
      candidate.hyper = apply_overrides(spec.hyper, params);
      candidate.calibrate = false;
      double total = 0.0;
      std::size_t used = 0;
      for (std::size_t f = 0; f < prepared.size(); ++f) {
        const MetricSet m = evaluate_fold(candidate, prepared[f], config.eval, derive_seed(root, "cv", {f}));
        if (std::isfinite(m.auc)) {
          total += m.auc;
          ++used;
        }
      }
      return used > 0 ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    };
    const SearchResult s =
        random_search(*spec.search, config.search_budget, objective, derive_seed(root, "search:" + spec.name));
    spec.hyper = apply_overrides(spec.hyper, s.best);
    report.tuning[spec.name] = search_json(s);
  }

  const std::size_t n_models = config.models.size();
  report.results.resize(config.regimes.size() * n_models);

  if (config.cross_validate) {
    for (std::size_t ri = 0; ri < config.regimes.size(); ++ri) {
      const RegimeSpec& regime = config.regimes[ri];
      std::vector<PreparedFold> local;
      const std::vector<PreparedFold>* prepared = nullptr;
      if (regime.kind == RegimeKind::none) {
        prepared = &get_none_folds();
      } else {
        local = prepare_folds(train, folds, regime, edge_ptr, config.prepare, root);
        prepared = &local;
      }
      auto cv = cv_models(config.models, *prepared, config.eval, root);
      for (std::size_t m = 0; m < n_models; ++m) {
        warn_excluded(config.models[m].name, regime.label(), cv[m]);
        report.results[ri * n_models + m].cv = std::move(cv[m]);
      }
    }
  }
  none_folds.reset();

  Table cohort;
  if (config.stress_n > 0) cohort = sample_edge_cases(table.schema(), edge, config.stress_n, stress_seed);

  for (std::size_t ri = 0; ri < config.regimes.size(); ++ri) {
    const RegimeSpec& regime = config.regimes[ri];
    const PreparedFold final_fold = prepare_fold(train, test, regime, edge_ptr, config.prepare, final_seed);
    if (ri == 0) {
      report.data["kept_columns"] = final_fold.pipeline.kept_columns();
      report.data["features"] = final_fold.pipeline.layout().slot_names;
    }
    Matrix X_stress;
    if (config.stress_n > 0) X_stress = final_fold.pipeline.transform(cohort);
    parallel_for(n_models, [&](std::size_t m) {
      const ModelSpec& spec = config.models[m];
      ResultEntry& e = report.results[ri * n_models + m];
      e.model = spec.name;
      e.regime = regime;
      e.hyper = spec.hyper;
      e.calibrated = spec.calibrate;
      e.train_rows = static_cast<std::size_t>(final_fold.X_train.rows());
      const ClassifierPtr model =
          train_model(spec, final_fold.X_train, final_fold.y_train, model_seed(final_seed, spec.name));
      const Vector p = model->predict_proba(final_fold.X_eval);
      e.test_probabilities = to_std(p);
      e.confusion = confusion_at_threshold(e.test_probabilities, final_fold.y_eval, config.eval.threshold);
      e.test = compute_metrics(e.test_probabilities, final_fold.y_eval, config.eval);
      e.rc = risk_coverage(e.test_probabilities, final_fold.y_eval, config.eval.threshold);
      if (config.stress_n > 0) {
        e.edge_probabilities = to_std(model->predict_proba(X_stress));
        e.edge = cohort_summary(e.edge_probabilities);
      }
      if (config.importance) {
        e.importance = permutation_importance(*model, final_fold.X_eval, final_fold.y_eval,
                                              final_fold.pipeline.layout(), config.importance_repeats,
                                              importance_seed);
        e.importance->model = spec.name;
      }
    });
    if (config.importance) {
      std::vector<ImportanceResult> results;
      for (std::size_t m = 0; m < n_models; ++m) results.push_back(*report.results[ri * n_models + m].importance);
      report.ranks.emplace_back(regime.label(), average_ranks(results));
    }
  }
  return report;
}

std::vector<std::string> top_features(const RankTable& ranks, std::size_t k) {
  std::vector<std::size_t> order(ranks.entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks.entries[a].mean_rank < ranks.entries[b].mean_rank;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(ranks.entries[order[i]].name);
  return out;
}

RetrainComparison retrain_on_selected_features(const Table& table, const ExperimentConfig& config,
                                               const ExperimentReport& original, std::span<const std::string> keep) {
  if (keep.empty()) throw ValidationError("retrain: keep list is empty");
  std::vector<std::string> names;
  for (const auto& col : table.schema()) {
    if (std::find(keep.begin(), keep.end(), col.name) != keep.end()) names.push_back(col.name);
  }
  for (const auto& k : keep) {
    if (!table.find_column(k)) throw ValidationError("retrain: unknown column '" + k + "'");
  }
  RetrainComparison out;
  out.restricted = run_experiment(table.select_columns(std::span<const std::string>(names)), config);
  out.deltas = json::array();
  for (const auto& r : out.restricted.results) {
    const ResultEntry& o = original.find(r.model, r.regime.label());
    json d = json::object();
    for (const auto& name : MetricSet::names()) d[name] = num(r.test.get(name) - o.test.get(name));
    out.deltas.push_back({{"model", r.model}, {"regime", r.regime.label()}, {"delta", d}});
  }
  return out;
}

}  // namespace raretab
