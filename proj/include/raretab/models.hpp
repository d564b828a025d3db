#pragma once

#include "raretab/common.hpp"

#include "json.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <variant>

namespace raretab {

enum class ModelFamily { logistic, random_forest, gbdt, kan };

std::string_view to_string(ModelFamily family);
/// Accepts "logistic"/"lr", "random_forest"/"rf", "gbdt", "kan".
ModelFamily family_from_string(std::string_view name);

struct LogisticParams {
  double l2 = 1e-2;
  std::size_t max_iters = 2000;
  double tol = 1e-6;
};

struct ForestParams {
  std::size_t n_trees = 300;
  std::size_t max_depth = 6;
  std::size_t min_leaf = 1;
  std::size_t min_split = 2;
  std::size_t max_features = 0;  // 0 = floor(sqrt(p))
  bool bootstrap = true;
};

struct BoostingParams {
  std::size_t n_rounds = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  double min_child_weight = 1.0;
  double subsample = 1.0;
  double colsample = 1.0;
  double reg_lambda = 1.0;
};

struct KanParams {
  std::size_t grid_size = 5;
  std::size_t spline_order = 3;
  double learning_rate = 1e-2;
  double positive_class_weight = 1.0;
  std::size_t epochs = 60;
  std::size_t hidden_width = 8;
  std::size_t batch_size = 64;
};

using Hyperparams = std::variant<LogisticParams, ForestParams, BoostingParams, KanParams>;

ModelFamily family_of(const Hyperparams& h);
Hyperparams default_params(ModelFamily family);
/// Throws ValidationError on out-of-range values.
void validate(const Hyperparams& h);
nlohmann::json params_to_json(const Hyperparams& h);
/// Missing keys keep their defaults; unknown keys are rejected.
Hyperparams params_from_json(ModelFamily family, const nlohmann::json& j);

/// Fitted binary classifier. Immutable after construction, so predict_proba is
/// safe to call concurrently.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual ModelFamily family() const = 0;
  virtual std::size_t n_features() const = 0;
  /// Positive-class probability per row. Throws ValidationError on a column
  /// count mismatch.
  Vector predict_proba(const Matrix& X) const;
  virtual nlohmann::json to_json() const = 0;

 protected:
  virtual Vector predict_rows(const Matrix& X) const = 0;
};

using ClassifierPtr = std::shared_ptr<const Classifier>;

/// Rejects non-finite cells and non-binary labels, and requires both classes.
void check_training_data(const Matrix& X, const Labels& y, const char* what);

ClassifierPtr fit_model(const Matrix& X, const Labels& y, const Hyperparams& hyper, std::uint64_t seed);
/// Restores any classifier written by to_json(), including calibrated ensembles.
ClassifierPtr model_from_json(const nlohmann::json& j);

}  // namespace raretab
