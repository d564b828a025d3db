// raretab command-line interface.
//
//   raretab run --config data/bench.json
//   raretab split|train|evaluate|importance --config C [--regime R]
//   raretab synth --config C --generator arf --n 500
//   raretab stress --config C --n 200 --spec data/edge.json
//   raretab report --from out/bench/report.json
//
// Exit codes: 0 success, 2 invalid input or config, 1 runtime failure.

#include "raretab/config.hpp"
#include "raretab/harness.hpp"
#include "raretab/parallel.hpp"
#include "raretab/report.hpp"
#include "raretab/schema_json.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace raretab;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  bool brier_multiclass = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool needs_config) {
  auto* c = cmd->add_option("--config", flags.config, "Experiment config JSON");
  if (needs_config) c->required();
  cmd->add_option("--seed", flags.seed, "Root seed (overrides the config)");
  cmd->add_option("--threads", flags.threads, "Worker threads (default: RARETAB_THREADS or all cores)");
  cmd->add_option("--out", flags.out, "Output directory (overrides the config)");
  if (needs_config) cmd->add_flag("--brier-multiclass", flags.brier_multiclass, "Two-class Brier sum instead of the binary form");
}

void log(const std::string& msg) { std::cerr << "[raretab] " << msg << '\n'; }

void apply_threads(const CommonFlags& flags) {
  if (flags.threads) {
    set_thread_count(*flags.threads);
  } else if (const char* env = std::getenv("RARETAB_THREADS")) {
    try {
      set_thread_count(static_cast<unsigned>(std::stoul(env)));
    } catch (const std::exception&) {
      throw ValidationError(std::string("RARETAB_THREADS: not a count: '") + env + "'");
    }
  }
}

// Config, data and the train/test split shared by the step-wise subcommands.
struct Context {
  RunConfig run;
  LoadedData data;
  fs::path out;
  std::uint64_t root = 0;
  Table train;
  Table test;
  EdgeCaseSpec edge;

  std::uint64_t final_seed() const { return derive_seed(root, "final"); }
  const EdgeCaseSpec* edge_ptr() const { return edge.columns.empty() ? nullptr : &edge; }
};

Context load_context(const CommonFlags& flags) {
  Context ctx;
  ctx.run = load_config(flags.config);
  if (flags.seed) ctx.run.experiment.seed = *flags.seed;
  if (!flags.out.empty()) ctx.run.output = flags.out;
  if (flags.brier_multiclass) ctx.run.experiment.eval.brier_two_class = true;
  ctx.data = load_data(ctx.run);
  ctx.run.experiment.validate(ctx.data.table);
  ctx.out = ctx.run.output;
  ctx.root = ctx.run.experiment.seed;
  const SplitIndices split =
      stratified_split_indices(ctx.data.table.target(), ctx.run.experiment.test_frac, derive_seed(ctx.root, "split"));
  ctx.train = ctx.data.table.select_rows(split.train);
  ctx.test = ctx.data.table.select_rows(split.test);
  ctx.edge = ctx.run.experiment.edge ? *ctx.run.experiment.edge : EdgeCaseSpec::from_columns(ctx.data.schema.columns);
  log("loaded " + std::to_string(ctx.data.table.n_rows()) + " rows (" + std::to_string(ctx.data.table.positives()) +
      " positive), seed " + std::to_string(ctx.root));
  return ctx;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void write_rows(const fs::path& path, const Table& t, const TargetSpec& target) {
  fs::create_directories(path.parent_path());
  write_csv(path.string(), t, target);
}

void write_table(const fs::path& out, const CsvTable& t) {
  write_text_file(out / "tables" / t.name, t.render());
  log("wrote " + (out / "tables" / t.name).string());
}

// ---------------------------------------------------------------------------
// Fitted models saved by `train` and reused by evaluate, stress and importance.

struct TrainedSet {
  std::string regime;
  FittedPipeline pipeline;
  std::vector<std::pair<std::string, ClassifierPtr>> models;
};

TrainedSet train_models(const Context& ctx, const RegimeSpec& regime) {
  const auto& exp = ctx.run.experiment;
  for (const auto& m : exp.models) {
    if (m.search) log("model " + m.name + ": search runs under `run` only; using configured hyperparameters");
  }
  const PreparedFold fold = prepare_fold(ctx.train, ctx.test, regime, ctx.edge_ptr(), exp.prepare, ctx.final_seed());
  TrainedSet set{regime.label(), fold.pipeline, {}};
  set.models.resize(exp.models.size());
  parallel_for(exp.models.size(), [&](std::size_t i) {
    const ModelSpec& spec = exp.models[i];
    set.models[i] = {spec.name,
                     train_model(spec, fold.X_train, fold.y_train, derive_seed(ctx.final_seed(), "model:" + spec.name))};
  });
  log("trained " + std::to_string(set.models.size()) + " models on " + std::to_string(fold.X_train.rows()) +
      " rows, regime " + set.regime);
  return set;
}

void save_models(const fs::path& dir, const TrainedSet& set) {
  json manifest = {{"regime", set.regime}, {"models", json::array()}};
  write_json(dir / "pipeline.json", set.pipeline.to_json());
  for (const auto& [name, model] : set.models) {
    write_json(dir / (name + ".json"), model->to_json());
    manifest["models"].push_back(name);
  }
  write_json(dir / "manifest.json", manifest);
  log("wrote models to " + dir.string());
}

TrainedSet load_models(const fs::path& dir) {
  const json manifest = json::parse(read_text_file(dir / "manifest.json"));
  TrainedSet set{manifest.at("regime").get<std::string>(),
                 FittedPipeline::from_json(json::parse(read_text_file(dir / "pipeline.json"))),
                 {}};
  for (const auto& name : manifest.at("models")) {
    const auto n = name.get<std::string>();
    set.models.emplace_back(n, model_from_json(json::parse(read_text_file(dir / (n + ".json")))));
  }
  return set;
}

TrainedSet models_for(const Context& ctx, const std::string& models_dir, const std::string& regime) {
  const fs::path dir = models_dir.empty() ? ctx.out / "models" : fs::path(models_dir);
  if (fs::exists(dir / "manifest.json")) {
    log("using models from " + dir.string());
    return load_models(dir);
  }
  if (!models_dir.empty()) throw ValidationError("no trained models in " + dir.string());
  return train_models(ctx, RegimeSpec::parse(regime));
}

std::vector<double> as_vector(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// Subcommands

int cmd_run(const CommonFlags& flags) {
  const auto start = std::chrono::steady_clock::now();
  Context ctx = load_context(flags);
  log("running " + std::to_string(ctx.run.experiment.models.size()) + " models x " +
      std::to_string(ctx.run.experiment.regimes.size()) + " regimes");
  const ExperimentReport report = run_experiment(ctx.data.table, ctx.run.experiment);
  write_report_bundle(report.to_json(), ctx.out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log("wrote " + (ctx.out / "report.json").string() + " in " + format_fixed(secs, 1) + " s");
  return 0;
}

int cmd_split(const CommonFlags& flags) {
  Context ctx = load_context(flags);
  const fs::path dir = ctx.out / "split";
  write_rows(dir / "train.csv", ctx.train, ctx.data.schema.target);
  write_rows(dir / "test.csv", ctx.test, ctx.data.schema.target);
  const FoldPlan folds =
      stratified_kfold(ctx.train.target(), ctx.run.experiment.k_folds, derive_seed(ctx.root, "folds"));
  write_json(dir / "split.json", {{"seed", ctx.root},
                                  {"train_rows", ctx.train.n_rows()},
                                  {"train_positives", ctx.train.positives()},
                                  {"test_rows", ctx.test.n_rows()},
                                  {"test_positives", ctx.test.positives()},
                                  {"train_row_ids", ctx.train.row_ids()},
                                  {"test_row_ids", ctx.test.row_ids()},
                                  {"k_folds", folds.k},
                                  {"train_fold", folds.assignments}});
  log("wrote split to " + dir.string());
  return 0;
}

int cmd_synth(const CommonFlags& flags, const std::string& generator, std::size_t n) {
  Context ctx = load_context(flags);
  const GeneratorKind kind = generator_kind_from_string(generator);
  const fs::path dir = ctx.out / "synth";
  Table rows;
  GeneratorPtr fitted;
  if (kind == GeneratorKind::edge) {
    ctx.edge.validate_against(ctx.data.schema.columns);
    rows = sample_edge_cases(ctx.data.schema.columns, ctx.edge, n, derive_seed(ctx.root, "synth"));
  } else {
    RegimeSpec regime;
    regime.kind = RegimeKind::generator;
    regime.generator = kind;
    regime.n_synth = n;
    const FittedPipeline pipeline = FittedPipeline::fit(ctx.train, ctx.run.experiment.prepare.pipeline);
    fitted = fit_regime_generator(pipeline.clean(ctx.train), regime, ctx.run.experiment.prepare.generators,
                                  derive_seed(ctx.final_seed(), "generator:" + generator));
    rows = fitted->sample(n, derive_seed(ctx.root, "synth"));
    write_json(dir / ("generator_" + generator + ".json"), fitted->to_json());
  }
  write_rows(dir / ("synthetic_" + generator + ".csv"), rows, ctx.data.schema.target);
  log("wrote " + std::to_string(rows.n_rows()) + " synthetic rows to " + dir.string());
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& regime) {
  Context ctx = load_context(flags);
  save_models(ctx.out / "models", train_models(ctx, RegimeSpec::parse(regime)));
  return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& models_dir, const std::string& regime) {
  Context ctx = load_context(flags);
  const TrainedSet set = models_for(ctx, models_dir, regime);
  const Matrix X = set.pipeline.transform(ctx.test);
  const Labels& y = ctx.test.target();
  const auto& settings = ctx.run.experiment.eval;
  CsvTable table{"evaluate_" + file_stem(set.regime) + ".csv", {"model", "regime"}, {}};
  for (const auto& m : MetricSet::names()) table.header.push_back(m);
  table.header.push_back("auc_rc");
  json out = json::array();
  for (const auto& [name, model] : set.models) {
    const auto p = as_vector(model->predict_proba(X));
    const MetricSet metrics = compute_metrics(p, y, settings);
    const RcCurve rc = risk_coverage(p, y, settings.threshold);
    std::vector<std::string> row = {name, set.regime};
    for (const auto& m : MetricSet::names()) row.push_back(format_fixed(metrics.get(m)));
    row.push_back(format_fixed(rc.auc_rc));
    table.rows.push_back(std::move(row));
    out.push_back({{"model", name},
                   {"regime", set.regime},
                   {"test", metrics.to_json()},
                   {"auc_rc", rc.auc_rc},
                   {"test_probabilities", p}});
  }
  write_json(ctx.out / "evaluate.json", {{"results", out}, {"test_labels", y}});
  write_table(ctx.out, table);
  return 0;
}

int cmd_stress(const CommonFlags& flags, std::optional<std::size_t> n, const std::string& spec_path,
               const std::string& models_dir, const std::string& regime) {
  Context ctx = load_context(flags);
  EdgeCaseSpec spec = ctx.edge;
  if (!spec_path.empty()) spec = load_edge_spec(spec_path, ctx.data.schema.columns);
  spec.validate_against(ctx.data.schema.columns);
  const std::size_t count = n.value_or(ctx.run.experiment.stress_n);
  if (count == 0) throw ValidationError("stress: --n must be positive");
  const Table cohort = sample_edge_cases(ctx.data.schema.columns, spec, count, derive_seed(ctx.root, "stress"));
  write_rows(ctx.out / "stress" / "edge_cohort.csv", cohort, ctx.data.schema.target);

  const TrainedSet set = models_for(ctx, models_dir, regime);
  const Matrix X = set.pipeline.transform(cohort);
  CsvTable table{"stress_" + file_stem(set.regime) + ".csv", {"model", "regime", "n", "q0", "q50", "q99", "mean", "std"}, {}};
  json out = json::array();
  for (const auto& [name, model] : set.models) {
    const auto p = as_vector(model->predict_proba(X));
    const CohortSummary s = cohort_summary(p);
    table.rows.push_back({name, set.regime, std::to_string(count), format_fixed(s.q0), format_fixed(s.q50),
                          format_fixed(s.q99), format_fixed(s.mean), format_fixed(s.std)});
    out.push_back({{"model", name},
                   {"regime", set.regime},
                   {"summary", {{"q0", s.q0}, {"q50", s.q50}, {"q99", s.q99}, {"mean", s.mean}, {"std", s.std}}},
                   {"probabilities", p}});
  }
  write_json(ctx.out / "stress" / "stress.json", {{"n", count}, {"results", out}});
  write_table(ctx.out, table);
  return 0;
}

int cmd_importance(const CommonFlags& flags, const std::string& models_dir, const std::string& regime,
                   std::optional<std::size_t> repeats) {
  Context ctx = load_context(flags);
  const TrainedSet set = models_for(ctx, models_dir, regime);
  const Matrix X = set.pipeline.transform(ctx.test);
  const std::size_t r = repeats.value_or(ctx.run.experiment.importance_repeats);
  std::vector<ImportanceResult> results;
  for (const auto& [name, model] : set.models) {
    ImportanceResult res = permutation_importance(*model, X, ctx.test.target(), set.pipeline.layout(), r,
                                                  derive_seed(ctx.root, "importance"));
    res.model = name;
    results.push_back(std::move(res));
  }
  const RankTable ranks = average_ranks(results);

  CsvTable per_model{"importance_" + file_stem(set.regime) + ".csv", {"regime", "model", "feature", "mean", "std"}, {}};
  json out = json::array();
  for (const auto& res : results) {
    for (const auto& f : res.features) {
      per_model.rows.push_back({set.regime, res.model, f.name, format_fixed(f.mean), format_fixed(f.std)});
    }
    out.push_back(to_json(res));
  }
  CsvTable ranked{"feature_ranks_" + file_stem(set.regime) + ".csv", {"regime", "feature", "mean_rank"}, {}};
  for (const auto& m : ranks.models) ranked.header.push_back("rank_" + m);
  const auto order = top_features(ranks, ranks.entries.size());
  for (const auto& name : order) {
    for (const auto& e : ranks.entries) {
      if (e.name != name) continue;
      std::vector<std::string> row = {set.regime, e.name, format_fixed(e.mean_rank)};
      for (double v : e.per_model) row.push_back(format_fixed(v));
      ranked.rows.push_back(std::move(row));
    }
  }
  json rank_json = to_json(ranks);
  rank_json["regime"] = set.regime;
  write_json(ctx.out / "importance.json", {{"results", out}, {"feature_ranks", rank_json}});
  write_table(ctx.out, per_model);
  write_table(ctx.out, ranked);
  return 0;
}

int cmd_report(const CommonFlags& flags, const std::string& from) {
  json report;
  try {
    report = json::parse(read_text_file(from));
  } catch (const json::parse_error& e) {
    throw ValidationError(from + ": " + e.what());
  }
  if (!report.contains("schema_version") || report.at("schema_version") != kReportSchemaVersion) {
    throw ValidationError(from + ": unsupported report schema version");
  }
  const fs::path out = flags.out.empty() ? fs::path(from).parent_path() : fs::path(flags.out);
  write_report_bundle(report, out, false);
  log("regenerated tables and figures under " + out.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imbalanced tabular risk prediction: augmentation, calibration and stress testing"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string regime = "none";
  std::string models_dir;
  std::string generator = "arf";
  std::size_t synth_n = 500;
  std::optional<std::size_t> stress_n;
  std::optional<std::size_t> repeats;
  std::string spec_path;
  std::string from;

  auto* run = app.add_subcommand("run", "Full experiment: report.json, tables and figures");
  add_common(run, flags, true);

  auto* split = app.add_subcommand("split", "Write the stratified train/test split and CV folds");
  add_common(split, flags, true);

  auto* synth = app.add_subcommand("synth", "Fit a generator on training positives and sample rows");
  add_common(synth, flags, true);
  synth->add_option("--generator", generator, "copula, arf, tvae or edge")->capture_default_str();
  synth->add_option("--n", synth_n, "Rows to sample")->capture_default_str();

  auto* train = app.add_subcommand("train", "Fit every configured model on the training split");
  add_common(train, flags, true);
  train->add_option("--regime", regime, "Training regime")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "Score trained models on the test split");
  auto* stress = app.add_subcommand("stress", "Sample an edge-case cohort and summarize model outputs on it");
  auto* importance = app.add_subcommand("importance", "Permutation importance and averaged feature ranks");
  for (auto* cmd : {evaluate, stress, importance}) {
    add_common(cmd, flags, true);
    cmd->add_option("--models", models_dir, "Directory written by `train` (default: <out>/models)");
    cmd->add_option("--regime", regime, "Regime used when models must be trained first")->capture_default_str();
  }
  stress->add_option("--n", stress_n, "Cohort size (default: config stress_n)");
  stress->add_option("--spec", spec_path, "Edge spec JSON (default: the schema's edge distributions)");
  importance->add_option("--repeats", repeats, "Permutations per feature (default: config importance_repeats)");

  auto* report = app.add_subcommand("report", "Regenerate tables and figures from report.json");
  add_common(report, flags, false);
  report->add_option("--from", from, "report.json to render")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_threads(flags);
    if (*run) return cmd_run(flags);
    if (*split) return cmd_split(flags);
    if (*synth) return cmd_synth(flags, generator, synth_n);
    if (*train) return cmd_train(flags, regime);
    if (*evaluate) return cmd_evaluate(flags, models_dir, regime);
    if (*stress) return cmd_stress(flags, stress_n, spec_path, models_dir, regime);
    if (*importance) return cmd_importance(flags, models_dir, regime, repeats);
    if (*report) return cmd_report(flags, from);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
