#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "raretab/harness.hpp"
#include "raretab/schema_json.hpp"
#include "support.hpp"

#include <set>

using namespace raretab;
using namespace raretab::testing;
using nlohmann::json;

namespace {

// s1 and s2 drive the label; n1..n3 and the category are noise.
Table planted_table(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> cols(6, std::vector<double>(n));
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 5; ++c) cols[c][i] = rng.normal();
    cols[5][i] = static_cast<double>(rng.bernoulli(0.5));
    y[i] = rng.bernoulli(sigmoid(-2.5 + 1.5 * cols[0][i] + 1.0 * cols[1][i]));
  }
  return make_table({numeric("s1"), numeric("s2"), numeric("n1"), numeric("n2"), numeric("n3"),
                     categorical("c", {"a", "b"})},
                    std::move(cols), std::move(y));
}

ModelSpec lr_spec() {
  ModelSpec s = default_model_spec(ModelFamily::logistic);
  s.name = "lr";
  return s;
}

ModelSpec small_forest() {
  ModelSpec s = default_model_spec(ModelFamily::random_forest);
  s.name = "rf";
  auto p = std::get<ForestParams>(s.hyper);
  p.n_trees = 20;
  p.min_leaf = 5;
  s.hyper = p;
  s.calibrate = false;
  return s;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.seed = 5;
  c.k_folds = 3;
  c.models = {lr_spec(), small_forest()};
  c.regimes = {RegimeSpec::parse("none"), RegimeSpec::parse("generator(copula,100)")};
  EdgeCaseSpec edge;
  for (const char* name : {"s1", "s2", "n1", "n2", "n3"}) edge.columns[name] = EdgeDistribution{2.0, 0.5, {}};
  edge.columns["c"] = EdgeDistribution{0, 0, {0.5, 0.5}};
  c.edge = edge;
  c.stress_n = 50;
  c.importance_repeats = 3;
  return c;
}

struct BenchTrain {
  Schema schema;
  Table train;
  Table test;
};

BenchTrain bench_train() {
  const Schema schema = load_schema(bench_dir() + "/schema.json");
  const Table t = load_csv(bench_dir() + "/benchmark.csv", schema);
  const auto idx = stratified_split_indices(t.target(), 0.2, 1);
  const Table train = t.select_rows(idx.train);
  PipelineOptions opt;
  opt.max_missing = 500;
  const FittedPipeline pipe = FittedPipeline::fit(train, opt);
  return {schema, pipe.clean(train), pipe.clean(t.select_rows(idx.test))};
}

}  // namespace

TEST_CASE("regime labels round trip") {
  for (const char* text : {"none", "generator(arf,500)", "generator(copula,200)", "edge(500)",
                           "generator_plus_edge(arf,500,500)", "generator(tvae,x3.9)"}) {
    CHECK(RegimeSpec::parse(text).label() == text);
  }
  CHECK(RegimeSpec::parse("arf").label() == "generator(arf,500)");
  CHECK(RegimeSpec::parse("edge").n_edge == 500);
  CHECK(RegimeSpec::parse("generator(tvae,x2)").synth_count(127) == 254);
  for (const char* bad : {"bogus", "none(1)", "edge(1,2)", "generator()", "generator(arf,-3)", "generator(edge,5)",
                          "generator(arf,500"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(RegimeSpec::parse(bad), ValidationError);
  }
}

TEST_CASE("augmentation adds labelled rows to the training side only") {
  const BenchTrain b = bench_train();
  REQUIRE(b.train.positives() == 127);
  const EdgeCaseSpec edge = EdgeCaseSpec::from_columns(b.train.schema());

  const RegimeSpec none = RegimeSpec::parse("none");
  const Table same = augment_training_fold(b.train, none, nullptr, nullptr, 1);
  CHECK(same.n_rows() == b.train.n_rows());
  CHECK(same.row_ids() == b.train.row_ids());

  const RegimeSpec arf = RegimeSpec::parse("generator(arf,500)");
  const GeneratorPtr gen = fit_regime_generator(b.train, arf, {}, 2);
  const Table aug = augment_training_fold(b.train, arf, gen, nullptr, 3);
  CHECK(aug.positives() == 627);
  CHECK(aug.n_rows() == b.train.n_rows() + 500);
  for (std::size_t r = 0; r < b.train.n_rows(); ++r) CHECK(aug.fingerprint(r) == b.train.fingerprint(r));

  const RegimeSpec both = RegimeSpec::parse("generator_plus_edge(arf,500,500)");
  const Table aug2 = augment_training_fold(b.train, both, gen, &edge, 3);
  CHECK(aug2.n_rows() == b.train.n_rows() + 1000);
  CHECK(aug2.positives() == 1127);

  CHECK_NOTHROW(assert_no_leakage(aug2, b.test));
  const Table leaky = Table::concat(b.test, aug.select_rows(std::vector<std::size_t>{aug.n_rows() - 1}));
  CHECK_THROWS_AS(assert_no_leakage(aug, leaky), ComputeError);
  const Table overlap = Table::concat(b.test, b.train.select_rows(std::vector<std::size_t>{0}));
  CHECK_THROWS_AS(assert_no_leakage(b.train, overlap), ComputeError);

  CHECK_THROWS_AS(augment_training_fold(b.test, arf, gen, nullptr, 3), ValidationError);
  CHECK_THROWS_AS(augment_training_fold(b.train, both, gen, nullptr, 3), ValidationError);
  CHECK_THROWS_AS(augment_training_fold(b.train, arf, nullptr, nullptr, 3), ValidationError);
}

TEST_CASE("random search basics") {
  SearchSpace space;
  space.ranges.push_back({"x", ParamRange::Kind::continuous, 0.0, 1.0, {}});
  const auto one = random_search(space, 1, [](const json& p) { return p.at("x").get<double>(); }, 3);
  REQUIRE(one.trials.size() == 1);
  CHECK(one.best == one.trials[0].params);

  SearchSpace point;
  point.ranges.push_back({"depth", ParamRange::Kind::integer, 4, 4, {}});
  point.ranges.push_back({"kind", ParamRange::Kind::categorical, 0, 0, {json("gini")}});
  const auto p = random_search(point, 5, [](const json&) { return 1.0; }, 4);
  CHECK(p.best == json{{"depth", 4}, {"kind", "gini"}});
  CHECK(p.best_index == 0);

  CHECK_THROWS_AS(random_search(space, 0, [](const json&) { return 0.0; }, 1), ValidationError);
}

TEST_CASE("random search lands in the top decile of a grid on a unimodal surrogate") {
  SearchSpace space;
  space.ranges.push_back({"a", ParamRange::Kind::continuous, -2.0, 2.0, {}});
  space.ranges.push_back({"lr", ParamRange::Kind::log_continuous, 1e-3, 1.0, {}});
  const auto f = [](double a, double lr) {
    const double u = std::log10(lr) + 1.5;
    return -((a - 0.4) * (a - 0.4) + 0.5 * u * u);
  };
  const auto res = random_search(space, 50, [&](const json& p) { return f(p.at("a"), p.at("lr")); }, 11);

  std::vector<double> grid;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 25; ++j) grid.push_back(f(-2.0 + 4.0 * i / 39.0, std::pow(10.0, -3.0 + 3.0 * j / 24.0)));
  }
  std::sort(grid.rbegin(), grid.rend());
  CHECK(res.best_score >= grid[99]);
  CHECK(res.best_score == f(res.best.at("a"), res.best.at("lr")));
}

TEST_CASE("search space json and validation") {
  for (auto family : {ModelFamily::logistic, ModelFamily::random_forest, ModelFamily::gbdt, ModelFamily::kan}) {
    const SearchSpace s = default_search_space(family);
    CHECK_NOTHROW(s.validate());
    CHECK(SearchSpace::from_json(s.to_json()).to_json() == s.to_json());
    Rng rng(1);
    const json draw = s.sample(rng);
    const ModelSpec spec = default_model_spec(family);
    CHECK_NOTHROW(validate(apply_overrides(spec.hyper, draw)));
  }
  SearchSpace bad;
  bad.ranges.push_back({"x", ParamRange::Kind::continuous, 2.0, 1.0, {}});
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.ranges = {{"x", ParamRange::Kind::log_continuous, 0.0, 1.0, {}}};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.ranges = {{"x", ParamRange::Kind::categorical, 0, 0, {}}};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("cv on a signal-free imbalanced table predicts the majority class") {
  const std::size_t n = 1000;
  Rng rng(6);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  const Table t = make_table({numeric("x")}, {x}, shuffled_labels(n, 80, 7));
  const FoldPlan plan = stratified_kfold(t.target(), 10, 8);
  const CvResult cv = cv_evaluate(lr_spec(), t, plan, RegimeSpec{}, nullptr, {}, {}, 9);
  REQUIRE(cv.folds.size() == 10);
  for (std::size_t f = 0; f < 10; ++f) {
    const auto rows = plan.eval_rows(f);
    double pos = 0;
    for (auto r : rows) pos += t.target()[r];
    CHECK(cv.folds[f].accuracy == doctest::Approx(1.0 - pos / static_cast<double>(rows.size())).epsilon(1e-12));
  }
  CHECK(cv.std.accuracy < 0.01);
  CHECK(cv.mean.accuracy == doctest::Approx(0.92).epsilon(0.001));

  const CvResult again = cv_evaluate(lr_spec(), t, plan, RegimeSpec{}, nullptr, {}, {}, 9);
  CHECK(again.to_json() == cv.to_json());
}

TEST_CASE("cv excludes the auc of folds without positives") {
  const Table t = make_table({numeric("x")}, {{0.1, 0.5, 0.2, 0.9, 0.3, 0.4, 0.8, 0.7, 0.6, 0.05}},
                             Labels{1, 0, 0, 1, 0, 0, 1, 0, 0, 0});
  const FoldPlan plan = stratified_kfold(t.target(), 5, 1);
  const CvResult cv = cv_evaluate(lr_spec(), t, plan, RegimeSpec{}, nullptr, {}, {}, 2);
  CHECK(cv.auc_excluded.size() == 2);
  CHECK(std::isfinite(cv.mean.auc));
  for (auto f : cv.auc_excluded) CHECK(std::isnan(cv.folds[f].auc));
}

TEST_CASE("experiment is deterministic and covers every model and regime") {
  const Table t = planted_table(600, 1);
  const ExperimentConfig config = small_config();
  const ExperimentReport a = run_experiment(t, config);
  const ExperimentReport b = run_experiment(t, config);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.results.size() == 4);
  for (const auto& m : {"lr", "rf"}) {
    for (const auto& r : {"none", "generator(copula,100)"}) {
      const ResultEntry& e = a.find(m, r);
      CHECK(e.cv.has_value());
      CHECK(e.cv->folds.size() == 3);
      CHECK(e.edge_probabilities.size() == 50);
      CHECK(e.importance.has_value());
      CHECK(e.test_probabilities.size() == 120);
    }
  }
  CHECK(a.find("lr", "generator(copula,100)").train_rows == a.find("lr", "none").train_rows + 100);
  REQUIRE(a.ranks_for("none") != nullptr);
  const auto top = top_features(*a.ranks_for("none"), 2);
  CHECK(std::set<std::string>(top.begin(), top.end()) == std::set<std::string>{"s1", "s2"});

  ExperimentConfig other = config;
  other.seed = 6;
  CHECK(run_experiment(t, other).to_json().dump() != a.to_json().dump());
}

TEST_CASE("retraining on feature subsets") {
  const Table t = planted_table(2000, 2);
  ExperimentConfig config = small_config();
  config.models = {lr_spec()};
  config.regimes = {RegimeSpec{}};
  config.cross_validate = false;
  config.importance = false;
  const ExperimentReport original = run_experiment(t, config);

  const std::vector<std::string> all = {"s1", "s2", "n1", "n2", "n3", "c"};
  const auto same = retrain_on_selected_features(t, config, original, all);
  CHECK(same.restricted.results[0].test.to_json() == original.results[0].test.to_json());
  for (const auto& [k, v] : same.deltas[0]["delta"].items()) CHECK(v.get<double>() == 0.0);

  const std::vector<std::string> noise = {"n1", "n2", "n3"};
  const auto junk = retrain_on_selected_features(t, config, original, noise);
  CHECK(std::abs(junk.restricted.results[0].test.auc - 0.5) <= 0.1);

  const std::vector<std::string> top = {"s1", "s2"};
  const auto kept = retrain_on_selected_features(t, config, original, top);
  CHECK(kept.restricted.results[0].test.auc >= original.results[0].test.auc - 0.05);

  CHECK_THROWS_AS(retrain_on_selected_features(t, config, original, std::vector<std::string>{}), ValidationError);
  CHECK_THROWS_AS(retrain_on_selected_features(t, config, original, std::vector<std::string>{"zz"}), ValidationError);
}

TEST_CASE("top-k retraining on the bundled benchmark keeps auc") {
  const Schema schema = load_schema(bench_dir() + "/schema.json");
  const Table t = load_csv(bench_dir() + "/benchmark.csv", schema);
  ExperimentConfig config;
  config.seed = 7;
  ModelSpec lr = lr_spec();
  lr.hyper = LogisticParams{0.1};
  config.models = {lr};
  config.regimes = {RegimeSpec{}};
  config.prepare.pipeline.max_missing = 500;
  config.cross_validate = false;
  config.importance_repeats = 5;
  const ExperimentReport original = run_experiment(t, config);
  const auto keep = top_features(*original.ranks_for("none"), 6);
  const auto kept = retrain_on_selected_features(t, config, original, keep);
  CHECK(kept.restricted.results[0].test.auc >= original.results[0].test.auc - 0.05);
}

TEST_CASE("experiment config validation lists every problem") {
  const Table t = planted_table(100, 3);
  ExperimentConfig c = small_config();
  c.test_frac = 1.5;
  c.k_folds = 1;
  c.models.push_back(c.models[0]);
  try {
    c.validate(t);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("test_frac") != std::string::npos);
    CHECK(msg.find("k_folds") != std::string::npos);
    CHECK(msg.find("duplicate model name") != std::string::npos);
  }
  CHECK_THROWS_AS(run_experiment(t, c), ValidationError);
}

TEST_CASE("metric set accessors") {
  const MetricSet m = compute_metrics(std::vector<double>{0.9, 0.2, 0.6, 0.1}, Labels{1, 0, 0, 0}, {});
  CHECK(MetricSet::names().size() == 9);
  CHECK(m.get("recall") == 1.0);
  CHECK(m.get("precision") == 0.5);
  CHECK(m.auc == 1.0);
  CHECK_THROWS(m.get("nope"));
  EvalSettings two;
  two.brier_two_class = true;
  CHECK(compute_metrics(std::vector<double>{0.8}, Labels{1}, two).brier == doctest::Approx(0.08));
  CHECK(std::isnan(compute_metrics(std::vector<double>{0.8}, Labels{1}, {}).auc));
}
