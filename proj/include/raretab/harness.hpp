#pragma once

#include "raretab/calibration.hpp"
#include "raretab/data.hpp"
#include "raretab/eval.hpp"
#include "raretab/importance.hpp"
#include "raretab/models.hpp"
#include "raretab/preprocess.hpp"
#include "raretab/rng.hpp"
#include "raretab/synthgen.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace raretab {

// ---------------------------------------------------------------------------
// Training regimes

enum class RegimeKind { none, generator, edge, generator_plus_edge };

struct RegimeSpec {
  RegimeKind kind = RegimeKind::none;
  GeneratorKind generator = GeneratorKind::arf;
  std::size_t n_synth = 500;
  std::size_t n_edge = 500;
  /// When set, the synthetic count is this multiple of the training minority size.
  std::optional<double> synth_multiple;

  bool uses_generator() const { return kind == RegimeKind::generator || kind == RegimeKind::generator_plus_edge; }
  bool uses_edge() const { return kind == RegimeKind::edge || kind == RegimeKind::generator_plus_edge; }
  std::size_t synth_count(std::size_t minority) const;

  /// Canonical text: none, generator(arf,500), edge(500),
  /// generator_plus_edge(arf,500,500). A multiple is written as x3.9.
  std::string label() const;
  static RegimeSpec parse(std::string_view text);
  void validate() const;
};

/// Generator fitted on the minority rows of a (cleaned) training table.
GeneratorPtr fit_regime_generator(const Table& train, const RegimeSpec& regime, const GeneratorOptions& options,
                                  std::uint64_t seed);

/// train plus synthetic positives. The generator must have been fitted on
/// rows of train (checked by fingerprint); edge rows need an edge spec.
/// Seeds for the two synthetic blocks come from derive_seed(seed, ...).
Table augment_training_fold(const Table& train, const RegimeSpec& regime, const GeneratorPtr& generator,
                            const EdgeCaseSpec* edge, std::uint64_t seed);

/// Throws ComputeError if a synthetic row or a row of train appears in eval.
void assert_no_leakage(const Table& train, const Table& eval);

// ---------------------------------------------------------------------------
// Model specs and search

struct ParamRange {
  enum class Kind { continuous, log_continuous, integer, categorical };

  std::string name;
  Kind kind = Kind::continuous;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<nlohmann::json> choices;

  nlohmann::json sample(Rng& rng) const;
};

struct SearchSpace {
  std::vector<ParamRange> ranges;

  void validate() const;
  nlohmann::json sample(Rng& rng) const;

  nlohmann::json to_json() const;
  static SearchSpace from_json(const nlohmann::json& j);
};

/// Ranges over the tuned dimensions of each family.
SearchSpace default_search_space(ModelFamily family);

struct SearchTrial {
  nlohmann::json params;
  double score = 0.0;
};

struct SearchResult {
  nlohmann::json best;
  double best_score = 0.0;
  std::size_t best_index = 0;
  std::vector<SearchTrial> trials;
};

/// Draws budget configurations from a stream seeded by derive_seed(seed,
/// "search"), scores them (possibly in parallel) and returns the first
/// maximum.
SearchResult random_search(const SearchSpace& space, std::size_t budget,
                           const std::function<double(const nlohmann::json&)>& objective, std::uint64_t seed);

struct ModelSpec {
  std::string name;
  Hyperparams hyper;
  bool calibrate = false;
  std::size_t calibration_folds = 5;
  std::optional<SearchSpace> search;
};

/// Family defaults; calibration on for the tree ensembles.
ModelSpec default_model_spec(ModelFamily family);
/// hyper with the keys of overrides replaced.
Hyperparams apply_overrides(const Hyperparams& hyper, const nlohmann::json& overrides);
ClassifierPtr train_model(const ModelSpec& spec, const Matrix& X, const Labels& y, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics and cross-validation

struct EvalSettings {
  double threshold = 0.5;
  std::size_t ece_bins = 10;
  bool brier_two_class = false;
};

struct MetricSet {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;  // NaN when the labels hold one class
  double avg_confidence = 0.0;
  double avg_entropy = 0.0;
  double brier = 0.0;
  double ece = 0.0;

  static const std::vector<std::string>& names();
  double get(std::string_view name) const;
  nlohmann::json to_json() const;
};

MetricSet compute_metrics(std::span<const double> p, const Labels& y, const EvalSettings& settings);

struct CvResult {
  std::vector<MetricSet> folds;
  MetricSet mean;
  MetricSet std;
  std::vector<std::size_t> auc_excluded;  // folds whose eval side held one class

  nlohmann::json to_json() const;
};

CvResult summarize_folds(std::vector<MetricSet> folds);

/// One fold after preprocessing and augmentation: the pipeline is fitted on
/// the training side only and the eval side is never augmented.
struct PreparedFold {
  FittedPipeline pipeline;
  Matrix X_train;
  Labels y_train;
  Matrix X_eval;
  Labels y_eval;
  std::size_t synthetic_rows = 0;
};

struct PrepareOptions {
  PipelineOptions pipeline;
  GeneratorOptions generators;
};

PreparedFold prepare_fold(const Table& train, const Table& eval, const RegimeSpec& regime, const EdgeCaseSpec* edge,
                          const PrepareOptions& options, std::uint64_t seed);

/// Per fold f: prepare with derive_seed(seed, "cv", {f}), fit the model with
/// derive_seed(fold seed, "model:" + name), evaluate on the untouched fold.
CvResult cv_evaluate(const ModelSpec& spec, const Table& table, const FoldPlan& folds, const RegimeSpec& regime,
                     const EdgeCaseSpec* edge, const PrepareOptions& prepare, const EvalSettings& settings,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  std::uint64_t seed = 42;
  double test_frac = 0.2;
  std::size_t k_folds = 10;
  std::vector<ModelSpec> models;
  std::vector<RegimeSpec> regimes;
  PrepareOptions prepare;
  EvalSettings eval;
  std::optional<EdgeCaseSpec> edge;  // defaults to the schema's edge distributions
  std::size_t stress_n = 200;
  std::size_t importance_repeats = 10;
  std::size_t search_budget = 30;
  bool cross_validate = true;
  bool importance = true;

  /// Every problem found, joined into one ValidationError.
  void validate(const Table& table) const;
};

struct ResultEntry {
  std::string model;
  RegimeSpec regime;
  Hyperparams hyper;
  bool calibrated = false;
  std::size_t train_rows = 0;  // after augmentation
  ConfusionCounts confusion;
  MetricSet test;
  std::optional<CvResult> cv;
  RcCurve rc;
  std::vector<double> test_probabilities;
  std::vector<double> edge_probabilities;
  std::optional<CohortSummary> edge;
  std::optional<ImportanceResult> importance;

  nlohmann::json to_json() const;
};

struct ExperimentReport {
  nlohmann::json metadata;
  nlohmann::json data;
  nlohmann::json tuning = nlohmann::json::object();
  std::vector<ResultEntry> results;
  std::vector<std::pair<std::string, RankTable>> ranks;  // per regime label

  const ResultEntry& find(std::string_view model, std::string_view regime) const;
  const RankTable* ranks_for(std::string_view regime) const;
  nlohmann::json to_json() const;
};

inline constexpr int kReportSchemaVersion = 1;

/// Deviations from the reference method, as listed in report metadata.
nlohmann::json deviations_json();

/// Split, tune, per-regime CV, final train/test evaluation, edge-cohort
/// scoring and permutation importance. Every random draw derives from
/// config.seed.
ExperimentReport run_experiment(const Table& table, const ExperimentConfig& config);

/// Names of the k best features by averaged rank (ties by name order in the table).
std::vector<std::string> top_features(const RankTable& ranks, std::size_t k);

struct RetrainComparison {
  ExperimentReport restricted;
  nlohmann::json deltas;  // per (model, regime): restricted test metric minus original
};

/// Reruns the experiment on the kept columns (in table order) and compares
/// test metrics with the original report.
RetrainComparison retrain_on_selected_features(const Table& table, const ExperimentConfig& config,
                                               const ExperimentReport& original, std::span<const std::string> keep);

}  // namespace raretab
