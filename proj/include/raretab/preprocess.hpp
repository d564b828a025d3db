#pragma once

#include "raretab/common.hpp"
#include "raretab/data.hpp"

#include "json.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace raretab {

/// Columns whose missing count exceeds max_missing.
std::vector<std::size_t> sparse_columns(const Table& t, std::size_t max_missing);
Table drop_sparse_columns(const Table& t, std::size_t max_missing);

struct ImputeOptions {
  std::size_t rounds = 10;
  double tol = 1e-3;
  double ridge = 1e-3;
};

/// Chained-equation imputer. Categorical gaps take the training mode; numeric
/// gaps start at the training mean and are refined round by round with ridge
/// regressions on the other numeric columns. Every round's regressors are kept
/// so transform() replays the exact update sequence on new tables.
class Imputer {
 public:
  static Imputer fit(const Table& train, const ImputeOptions& options = {});

  Table transform(const Table& t) const;

  std::size_t rounds_run() const { return rounds_.size(); }
  /// Largest absolute change of any imputed training cell, per round.
  const std::vector<double>& max_changes() const { return max_changes_; }
  const std::vector<double>& fill_values() const { return fill_; }

  nlohmann::json to_json() const;
  static Imputer from_json(const nlohmann::json& j);

 private:
  struct Regressor {
    std::size_t column = 0;
    double intercept = 0.0;
    std::vector<double> coef;  // one per entry of numeric_, 0 for the target column
  };

  void apply_round(std::vector<std::vector<double>>& cols, const std::vector<std::vector<bool>>& missing,
                   const std::vector<Regressor>& round) const;

  std::vector<std::string> names_;
  std::vector<double> fill_;  // mode index or mean, per column
  std::vector<std::size_t> numeric_;
  std::vector<std::vector<Regressor>> rounds_;
  std::vector<double> max_changes_;
};

/// Fit-and-transform on one table.
Table impute(const Table& t, std::size_t rounds, double tol);

/// Slot layout of an encoded matrix: one slot per numeric column, one per
/// declared category of each categorical column, in schema order.
struct FeatureLayout {
  std::vector<std::string> slot_names;
  std::vector<std::size_t> slot_source;  // source column per slot
  std::vector<std::string> source_names;

  std::size_t width() const { return slot_names.size(); }
  /// Slot indices per source column (columns with no slots are omitted).
  std::vector<std::vector<std::size_t>> groups() const;
  FeatureLayout select(std::span<const std::size_t> slots) const;
};

FeatureLayout one_hot_layout(std::span<const ColumnSchema> schema);
/// Throws ValidationError on any missing cell.
Matrix one_hot_encode(const Table& t);

/// Population-std standardizer fitted on a training matrix.
struct Scaler {
  Vector mean;
  Vector scale;               // 1 where the fit column was constant
  std::vector<bool> constant;

  static Scaler fit(const Matrix& X);
  Matrix apply(const Matrix& X) const;
};

struct AnovaScore {
  std::size_t feature = 0;
  double f = 0.0;
  double ms_between = 0.0;
  double ms_within = 0.0;
  bool degenerate = false;  // ms_within == 0
};

/// Two-group one-way ANOVA F per column.
std::vector<AnovaScore> anova_f_scores(const Matrix& X, const Labels& y);
/// Indices of the k largest F values, descending, ties to the lower index.
std::vector<std::size_t> select_top_k(std::span<const AnovaScore> scores, std::size_t k);

struct PipelineOptions {
  std::optional<std::size_t> max_missing;         // absolute count
  std::optional<double> max_missing_fraction;     // of training rows
  ImputeOptions impute;
  std::optional<std::size_t> select_k;            // ANOVA selection; unset keeps every slot
};

/// Preprocessing fitted on a training table only. clean() drops sparse
/// columns and imputes (result stays in table space, which is where synthetic
/// generators operate); encode() one-hot encodes, scales and selects.
class FittedPipeline {
 public:
  static FittedPipeline fit(const Table& train, const PipelineOptions& options = {});

  Table clean(const Table& t) const;
  Matrix encode(const Table& cleaned) const;
  Matrix transform(const Table& t) const { return encode(clean(t)); }

  const std::vector<std::string>& kept_columns() const { return kept_; }
  const std::vector<ColumnSchema>& cleaned_schema() const { return cleaned_schema_; }
  const FeatureLayout& layout() const { return layout_; }
  const Scaler& scaler() const { return scaler_; }
  const std::vector<AnovaScore>& anova() const { return anova_; }
  const std::vector<std::size_t>& selected() const { return selected_; }
  const Imputer& imputer() const { return imputer_; }

  nlohmann::json to_json() const;
  static FittedPipeline from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> kept_;
  std::vector<ColumnSchema> cleaned_schema_;
  Imputer imputer_;
  Scaler scaler_;
  std::vector<AnovaScore> anova_;
  std::vector<std::size_t> selected_;
  FeatureLayout layout_;  // after selection
};

}  // namespace raretab
