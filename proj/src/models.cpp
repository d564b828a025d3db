#include "raretab/models.hpp"
#include "raretab/boosting.hpp"
#include "raretab/calibration.hpp"
#include "raretab/forest.hpp"
#include "raretab/kan.hpp"
#include "raretab/logistic.hpp"

#include <set>

namespace raretab {

using nlohmann::json;

std::string_view to_string(ModelFamily family) {
  switch (family) {
    case ModelFamily::logistic: return "logistic";
    case ModelFamily::random_forest: return "random_forest";
    case ModelFamily::gbdt: return "gbdt";
    case ModelFamily::kan: return "kan";
  }
  return "unknown";
}

ModelFamily family_from_string(std::string_view name) {
  if (name == "logistic" || name == "lr") return ModelFamily::logistic;
  if (name == "random_forest" || name == "rf") return ModelFamily::random_forest;
  if (name == "gbdt" || name == "boosting") return ModelFamily::gbdt;
  if (name == "kan") return ModelFamily::kan;
  throw ValidationError("unknown model family '" + std::string(name) + "'");
}

ModelFamily family_of(const Hyperparams& h) {
  return static_cast<ModelFamily>(h.index());
}

Hyperparams default_params(ModelFamily family) {
  switch (family) {
    case ModelFamily::logistic: return LogisticParams{};
    case ModelFamily::random_forest: return ForestParams{};
    case ModelFamily::gbdt: return BoostingParams{};
    case ModelFamily::kan: return KanParams{};
  }
  throw ValidationError("unknown model family");
}

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

template <class T>
void read_field(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.insert(key);
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("hyperparameter '") + key + "' has the wrong type");
  }
}

}  // namespace

void validate(const Hyperparams& h) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogisticParams>) {
          require(p.l2 >= 0.0 && std::isfinite(p.l2), "logistic: l2 must be finite and >= 0");
          require(p.max_iters >= 1, "logistic: max_iters must be >= 1");
          require(p.tol > 0.0, "logistic: tol must be > 0");
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          require(p.n_trees >= 1, "random_forest: n_trees must be >= 1");
          require(p.max_depth >= 1, "random_forest: max_depth must be >= 1");
          require(p.min_leaf >= 1, "random_forest: min_leaf must be >= 1");
          require(p.min_split >= 2, "random_forest: min_split must be >= 2");
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          require(p.max_depth >= 1, "gbdt: max_depth must be >= 1");
          require(p.learning_rate >= 0.0 && std::isfinite(p.learning_rate), "gbdt: learning_rate must be >= 0");
          require(p.min_child_weight >= 0.0, "gbdt: min_child_weight must be >= 0");
          require(p.subsample > 0.0 && p.subsample <= 1.0, "gbdt: subsample must be in (0, 1]");
          require(p.colsample > 0.0 && p.colsample <= 1.0, "gbdt: colsample must be in (0, 1]");
          require(p.reg_lambda >= 0.0, "gbdt: reg_lambda must be >= 0");
        } else {
          require(p.grid_size >= 1, "kan: grid_size must be >= 1");
          require(p.spline_order >= 1, "kan: spline_order must be >= 1");
          require(p.learning_rate > 0.0, "kan: learning_rate must be > 0");
          require(p.positive_class_weight > 0.0, "kan: positive_class_weight must be > 0");
          require(p.epochs >= 1, "kan: epochs must be >= 1");
          require(p.hidden_width >= 1, "kan: hidden_width must be >= 1");
          require(p.batch_size >= 1, "kan: batch_size must be >= 1");
        }
      },
      h);
}

json params_to_json(const Hyperparams& h) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogisticParams>) {
          return {{"l2", p.l2}, {"max_iters", p.max_iters}, {"tol", p.tol}};
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          return {{"n_trees", p.n_trees},     {"max_depth", p.max_depth},       {"min_leaf", p.min_leaf},
                  {"min_split", p.min_split}, {"max_features", p.max_features}, {"bootstrap", p.bootstrap}};
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          return {{"n_rounds", p.n_rounds},     {"max_depth", p.max_depth},
                  {"learning_rate", p.learning_rate}, {"min_child_weight", p.min_child_weight},
                  {"subsample", p.subsample},   {"colsample", p.colsample},
                  {"reg_lambda", p.reg_lambda}};
        } else {
          return {{"grid_size", p.grid_size},
                  {"spline_order", p.spline_order},
                  {"learning_rate", p.learning_rate},
                  {"positive_class_weight", p.positive_class_weight},
                  {"epochs", p.epochs},
                  {"hidden_width", p.hidden_width},
                  {"batch_size", p.batch_size}};
        }
      },
      h);
}

Hyperparams params_from_json(ModelFamily family, const json& j) {
  if (!j.is_object()) throw ValidationError("hyperparameters must be a JSON object");
  Hyperparams h = default_params(family);
  std::set<std::string> seen;
  std::visit(
      [&](auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogisticParams>) {
          read_field(j, "l2", p.l2, seen);
          read_field(j, "max_iters", p.max_iters, seen);
          read_field(j, "tol", p.tol, seen);
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          read_field(j, "n_trees", p.n_trees, seen);
          read_field(j, "max_depth", p.max_depth, seen);
          read_field(j, "min_leaf", p.min_leaf, seen);
          read_field(j, "min_split", p.min_split, seen);
          read_field(j, "max_features", p.max_features, seen);
          read_field(j, "bootstrap", p.bootstrap, seen);
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          read_field(j, "n_rounds", p.n_rounds, seen);
          read_field(j, "max_depth", p.max_depth, seen);
          read_field(j, "learning_rate", p.learning_rate, seen);
          read_field(j, "min_child_weight", p.min_child_weight, seen);
          read_field(j, "subsample", p.subsample, seen);
          read_field(j, "colsample", p.colsample, seen);
          read_field(j, "reg_lambda", p.reg_lambda, seen);
        } else {
          read_field(j, "grid_size", p.grid_size, seen);
          read_field(j, "spline_order", p.spline_order, seen);
          read_field(j, "learning_rate", p.learning_rate, seen);
          read_field(j, "positive_class_weight", p.positive_class_weight, seen);
          read_field(j, "epochs", p.epochs, seen);
          read_field(j, "hidden_width", p.hidden_width, seen);
          read_field(j, "batch_size", p.batch_size, seen);
        }
      },
      h);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) {
      throw ValidationError("unknown hyperparameter '" + it.key() + "' for " + std::string(to_string(family)));
    }
  }
  validate(h);
  return h;
}

Vector Classifier::predict_proba(const Matrix& X) const {
  if (static_cast<std::size_t>(X.cols()) != n_features()) {
    throw ValidationError("predict_proba: expected " + std::to_string(n_features()) + " columns, got " +
                          std::to_string(X.cols()));
  }
  if (X.rows() == 0) return Vector(0);
  Vector p = predict_rows(X);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = std::clamp(p(i), 0.0, 1.0);
  return p;
}

void check_training_data(const Matrix& X, const Labels& y, const char* what) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) {
    throw ValidationError(std::string(what) + ": row count differs from label count");
  }
  if (!X.allFinite()) throw ValidationError(std::string(what) + ": non-finite input");
  require_both_classes(y, what);
}

ClassifierPtr fit_model(const Matrix& X, const Labels& y, const Hyperparams& hyper, std::uint64_t seed) {
  validate(hyper);
  return std::visit(
      [&](const auto& p) -> ClassifierPtr {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LogisticParams>) {
          return LogisticModel::fit(X, y, p);
        } else if constexpr (std::is_same_v<T, ForestParams>) {
          return RandomForest::fit(X, y, p, seed);
        } else if constexpr (std::is_same_v<T, BoostingParams>) {
          return GradientBoosting::fit(X, y, p, seed);
        } else {
          return KanModel::fit(X, y, p, seed);
        }
      },
      hyper);
}

ClassifierPtr model_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "calibrated") return CalibratedModel::from_json(j);
    switch (family_from_string(type)) {
      case ModelFamily::logistic: return LogisticModel::from_json(j);
      case ModelFamily::random_forest: return RandomForest::from_json(j);
      case ModelFamily::gbdt: return GradientBoosting::from_json(j);
      case ModelFamily::kan: return KanModel::from_json(j);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model: malformed document: ") + e.what());
  }
  throw ValidationError("model: unknown type");
}

}  // namespace raretab
