#pragma once

#include "raretab/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace raretab {

enum class ColumnKind { numeric, categorical };

std::string_view to_string(ColumnKind kind);

/// Stress-cohort sampling distribution for one column: a normal for numeric
/// columns, a probability table over the declared categories otherwise.
struct EdgeDistribution {
  double mu = 0.0;
  double sigma = 0.0;
  std::vector<double> probs;
};

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::vector<std::string> categories;  // categorical only, in declared order
  std::string missing_token;            // empty string by default
  std::optional<EdgeDistribution> edge;

  bool is_categorical() const { return kind == ColumnKind::categorical; }
};

struct TargetSpec {
  std::string name = "target";
  std::string positive_token = "1";
  std::string negative_token = "0";
};

struct Schema {
  std::vector<ColumnSchema> columns;
  TargetSpec target;

  std::optional<std::size_t> find(std::string_view name) const;
  /// Throws ValidationError on duplicate names, empty category lists, or
  /// malformed edge distributions.
  void validate() const;
};

/// Per-column edge-case distributions keyed by column name.
struct EdgeCaseSpec {
  std::map<std::string, EdgeDistribution> columns;

  static EdgeCaseSpec from_columns(std::span<const ColumnSchema> columns);
  /// Every column must be covered with a distribution of the right shape.
  void validate_against(std::span<const ColumnSchema> columns) const;
};

/// Immutable rows x typed columns with a binary target.
///
/// Cells are stored as doubles: numeric values directly, categorical cells as
/// the index of the category in the column schema. Missing cells are NaN.
/// Row ids identify the source row; derived tables keep their parent's ids.
class Table {
 public:
  Table() = default;
  Table(std::vector<ColumnSchema> schema, std::vector<std::vector<double>> columns, Labels target,
        std::vector<std::uint64_t> row_ids = {});

  std::size_t n_rows() const { return target_.size(); }
  std::size_t n_cols() const { return schema_.size(); }
  const std::vector<ColumnSchema>& schema() const { return schema_; }
  const ColumnSchema& column_schema(std::size_t c) const { return schema_.at(c); }
  std::optional<std::size_t> find_column(std::string_view name) const;
  std::span<const double> column(std::size_t c) const { return columns_.at(c); }
  double at(std::size_t r, std::size_t c) const { return columns_[c][r]; }
  bool is_missing(std::size_t r, std::size_t c) const;
  std::vector<bool> missing_mask(std::size_t c) const;
  std::size_t missing_count(std::size_t c) const;
  std::size_t missing_total() const;
  const Labels& target() const { return target_; }
  const std::vector<std::uint64_t>& row_ids() const { return row_ids_; }
  std::size_t positives() const;
  double prevalence() const;

  /// Text form of a cell: the category label, a shortest round-trip number,
  /// or the column's missing token.
  std::string cell_text(std::size_t r, std::size_t c) const;

  Table select_rows(std::span<const std::size_t> rows) const;
  Table select_columns(std::span<const std::size_t> cols) const;
  Table select_columns(std::span<const std::string> names) const;
  Table with_column(std::size_t c, std::vector<double> values) const;
  Table with_target(Labels target) const;

  /// Row-wise concatenation; schemas must agree on names, kinds and categories.
  static Table concat(const Table& a, const Table& b);

  /// Hash of (row id, cell contents) for leakage checks.
  std::uint64_t fingerprint(std::size_t r) const;
  std::vector<std::uint64_t> fingerprints() const;

 private:
  std::vector<ColumnSchema> schema_;
  std::vector<std::vector<double>> columns_;
  Labels target_;
  std::vector<std::uint64_t> row_ids_;
};

/// Row ids at or above this value mark synthetic rows.
inline constexpr std::uint64_t kSyntheticRowIdBase = 1ULL << 62;

/// Checks kinds, category membership and finiteness; missing cells are
/// rejected unless allow_missing. Throws ValidationError naming the cell.
void validate_rows(const Table& t, bool allow_missing);

Table read_csv(std::istream& in, const Schema& schema);
Table load_csv(const std::string& path, const Schema& schema);
void write_csv(std::ostream& out, const Table& t, const TargetSpec& target = {});
void write_csv(const std::string& path, const Table& t, const TargetSpec& target = {});

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold index per row

  std::vector<std::size_t> eval_rows(std::size_t fold) const;
  std::vector<std::size_t> train_rows(std::size_t fold) const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified train/test partition of row indices (both sorted ascending).
SplitIndices stratified_split_indices(const Labels& y, double test_frac, std::uint64_t seed);
std::pair<Table, Table> stratified_split(const Table& t, double test_frac, std::uint64_t seed);

FoldPlan stratified_kfold(const Labels& y, std::size_t k, std::uint64_t seed);
FoldPlan stratified_kfold(const Table& t, std::size_t k, std::uint64_t seed);

}  // namespace raretab
