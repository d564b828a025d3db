#pragma once

#include "raretab/data.hpp"
#include "raretab/harness.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace raretab {

/// Experiment config document. Relative paths resolve against the config
/// file's directory.
///
///   {"dataset": "benchmark.csv", "schema": "schema.json", "target": "cardiac_death",
///    "edge_spec": "edge.json", "output": "out", "seed": 7, "test_frac": 0.2, "k_folds": 10,
///    "models": [{"name": "rf", "family": "random_forest", "hyperparams": {"n_trees": 100},
///                "calibrate": true, "calibration_folds": 5, "search": "default"}],
///    "regimes": ["none", "generator(arf,500)", "edge(500)"],
///    "generators": {"arf": {...}, "tvae": {...}},
///    "pipeline": {"max_missing": 500, "max_missing_fraction": 0.3, "select_k": 20,
///                 "impute_rounds": 10, "impute_tol": 0.001},
///    "metrics": {"ece_bins": 10, "threshold": 0.5, "brier_two_class": false},
///    "stress_n": 200, "importance_repeats": 10, "search_budget": 30,
///    "cross_validate": true, "importance": true}
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> edge_spec;
  std::filesystem::path output = "out";
  std::optional<std::string> target;
  ExperimentConfig experiment;
  nlohmann::json source;
};

/// Collects every problem (with its JSON path) before throwing one ValidationError.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

struct LoadedData {
  Schema schema;
  Table table;
};

/// Reads schema and dataset, applies the target override and the edge spec file.
LoadedData load_data(RunConfig& config);

}  // namespace raretab
