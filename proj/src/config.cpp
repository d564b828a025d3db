#include "raretab/config.hpp"

#include "raretab/schema_json.hpp"

#include <fstream>
#include <set>

namespace raretab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Errors {
 public:
  void add(const std::string& path, const std::string& msg) { items_.push_back(path + ": " + msg); }
  bool empty() const { return items_.empty(); }

  template <class F>
  void guard(const std::string& path, F&& f) {
    try {
      f();
    } catch (const ValidationError& e) {
      add(path, e.what());
    } catch (const json::exception& e) {
      add(path, e.what());
    }
  }

  [[noreturn]] void raise() const {
    std::string msg = "invalid config:";
    for (const auto& e : items_) msg += "\n  - " + e;
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> items_;
};

const std::set<std::string> kTopKeys = {"dataset", "schema",   "target",  "edge_spec",       "output",
                                        "seed",    "test_frac", "k_folds", "models",          "regimes",
                                        "generators", "pipeline", "metrics", "stress_n",      "importance_repeats",
                                        "search_budget", "cross_validate", "importance"};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <class T>
void read(const json& j, const char* key, T& out, Errors& errors, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  errors.guard(where + "/" + key, [&] { out = j.at(key).get<T>(); });
}

ModelSpec parse_model(const json& m, const std::string& where, Errors& errors) {
  ModelSpec spec;
  if (!m.is_object()) {
    errors.add(where, "model entry must be an object");
    return spec;
  }
  static const std::set<std::string> keys = {"name", "family", "hyperparams", "calibrate", "calibration_folds", "search"};
  for (auto it = m.begin(); it != m.end(); ++it) {
    if (!keys.count(it.key())) errors.add(where + "/" + it.key(), "unknown key");
  }
  ModelFamily family = ModelFamily::logistic;
  bool family_ok = false;
  errors.guard(where + "/family", [&] {
    family = family_from_string(m.at("family").get<std::string>());
    family_ok = true;
  });
  if (!family_ok) return spec;
  spec = default_model_spec(family);
  read(m, "name", spec.name, errors, where);
  read(m, "calibrate", spec.calibrate, errors, where);
  read(m, "calibration_folds", spec.calibration_folds, errors, where);
  if (m.contains("hyperparams")) {
    errors.guard(where + "/hyperparams", [&] { spec.hyper = params_from_json(family, m.at("hyperparams")); });
  }
  if (m.contains("search") && !m.at("search").is_null()) {
    const json& s = m.at("search");
    errors.guard(where + "/search", [&] {
      if (s.is_string()) {
        if (s.get<std::string>() != "default") throw ValidationError("expected \"default\" or an object");
        spec.search = default_search_space(family);
      } else {
        spec.search = SearchSpace::from_json(s);
      }
    });
  }
  return spec;
}

void parse_generators(const json& g, GeneratorOptions& out, Errors& errors) {
  if (g.contains("arf")) {
    const json& a = g.at("arf");
    const std::string w = "/generators/arf";
    read(a, "n_trees", out.arf.n_trees, errors, w);
    read(a, "min_leaf", out.arf.min_leaf, errors, w);
    read(a, "max_depth", out.arf.max_depth, errors, w);
    read(a, "delta", out.arf.delta, errors, w);
    read(a, "max_rounds", out.arf.max_rounds, errors, w);
  }
  if (g.contains("tvae")) {
    const json& t = g.at("tvae");
    const std::string w = "/generators/tvae";
    read(t, "latent_dim", out.tvae.latent_dim, errors, w);
    read(t, "hidden", out.tvae.hidden, errors, w);
    read(t, "epochs", out.tvae.epochs, errors, w);
    read(t, "batch_size", out.tvae.batch_size, errors, w);
    read(t, "learning_rate", out.tvae.learning_rate, errors, w);
  }
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  RunConfig cfg;
  cfg.source = j;
  Errors errors;
  if (!j.is_object()) {
    errors.add("/", "config must be a JSON object");
    errors.raise();
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kTopKeys.count(it.key())) errors.add("/" + it.key(), "unknown key");
  }
  std::string dataset, schema, output = "out";
  if (!j.contains("dataset")) errors.add("/dataset", "required");
  if (!j.contains("schema")) errors.add("/schema", "required");
  read(j, "dataset", dataset, errors, "");
  read(j, "schema", schema, errors, "");
  read(j, "output", output, errors, "");
  cfg.dataset = resolve(base_dir, dataset);
  cfg.schema = resolve(base_dir, schema);
  cfg.output = resolve(base_dir, output);
  if (!dataset.empty() && !fs::exists(cfg.dataset)) errors.add("/dataset", "file not found: " + cfg.dataset.string());
  if (!schema.empty() && !fs::exists(cfg.schema)) errors.add("/schema", "file not found: " + cfg.schema.string());
  if (j.contains("edge_spec") && !j.at("edge_spec").is_null()) {
    std::string e;
    read(j, "edge_spec", e, errors, "");
    cfg.edge_spec = resolve(base_dir, e);
    if (!fs::exists(*cfg.edge_spec)) errors.add("/edge_spec", "file not found: " + cfg.edge_spec->string());
  }
  if (j.contains("target") && !j.at("target").is_null()) {
    std::string t;
    read(j, "target", t, errors, "");
    cfg.target = t;
  }

  ExperimentConfig& x = cfg.experiment;
  read(j, "seed", x.seed, errors, "");
  read(j, "test_frac", x.test_frac, errors, "");
  read(j, "k_folds", x.k_folds, errors, "");
  read(j, "stress_n", x.stress_n, errors, "");
  read(j, "importance_repeats", x.importance_repeats, errors, "");
  read(j, "search_budget", x.search_budget, errors, "");
  read(j, "cross_validate", x.cross_validate, errors, "");
  read(j, "importance", x.importance, errors, "");

  if (j.contains("models")) {
    if (!j.at("models").is_array()) {
      errors.add("/models", "must be an array");
    } else {
      for (std::size_t i = 0; i < j.at("models").size(); ++i) {
        x.models.push_back(parse_model(j.at("models")[i], "/models/" + std::to_string(i), errors));
      }
    }
  } else {
    for (ModelFamily f : {ModelFamily::logistic, ModelFamily::random_forest, ModelFamily::gbdt, ModelFamily::kan}) {
      x.models.push_back(default_model_spec(f));
    }
  }
  if (j.contains("regimes")) {
    if (!j.at("regimes").is_array()) {
      errors.add("/regimes", "must be an array");
    } else {
      for (std::size_t i = 0; i < j.at("regimes").size(); ++i) {
        errors.guard("/regimes/" + std::to_string(i),
                     [&] { x.regimes.push_back(RegimeSpec::parse(j.at("regimes")[i].get<std::string>())); });
      }
    }
  } else {
    x.regimes = {RegimeSpec{}};
  }
  if (j.contains("generators")) parse_generators(j.at("generators"), x.prepare.generators, errors);
  if (j.contains("pipeline")) {
    const json& p = j.at("pipeline");
    auto& po = x.prepare.pipeline;
    errors.guard("/pipeline", [&] {
      if (p.contains("max_missing") && !p.at("max_missing").is_null()) po.max_missing = p.at("max_missing").get<std::size_t>();
      if (p.contains("max_missing_fraction") && !p.at("max_missing_fraction").is_null()) {
        po.max_missing_fraction = p.at("max_missing_fraction").get<double>();
      }
      if (p.contains("select_k") && !p.at("select_k").is_null()) po.select_k = p.at("select_k").get<std::size_t>();
    });
    read(p, "impute_rounds", po.impute.rounds, errors, "/pipeline");
    read(p, "impute_tol", po.impute.tol, errors, "/pipeline");
  }
  if (j.contains("metrics")) {
    const json& m = j.at("metrics");
    read(m, "ece_bins", x.eval.ece_bins, errors, "/metrics");
    read(m, "threshold", x.eval.threshold, errors, "/metrics");
    read(m, "brier_two_class", x.eval.brier_two_class, errors, "/metrics");
  }
  if (!errors.empty()) errors.raise();
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: file not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

LoadedData load_data(RunConfig& config) {
  LoadedData d;
  d.schema = load_schema(config.schema.string());
  if (config.target) d.schema.target.name = *config.target;
  d.table = load_csv(config.dataset.string(), d.schema);
  if (config.edge_spec) config.experiment.edge = load_edge_spec(config.edge_spec->string(), d.schema.columns);
  config.experiment.validate(d.table);
  return d;
}

}  // namespace raretab
