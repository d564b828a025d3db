#include "raretab/data.hpp"
#include "raretab/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace raretab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

bool same_columns(const ColumnSchema& a, const ColumnSchema& b) {
  return a.name == b.name && a.kind == b.kind && a.categories == b.categories;
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

// ---------------------------------------------------------------------------
// Schema

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].name == name) return c;
  }
  return std::nullopt;
}

void Schema::validate() const {
  std::set<std::string> seen;
  for (const auto& col : columns) {
    if (col.name.empty()) throw ValidationError("schema: column with empty name");
    if (!seen.insert(col.name).second) throw ValidationError("schema: duplicate column '" + col.name + "'");
    if (col.name == target.name) {
      throw ValidationError("schema: feature column '" + col.name + "' collides with the target");
    }
    if (col.is_categorical()) {
      if (col.categories.empty()) {
        throw ValidationError("schema: categorical column '" + col.name + "' has no categories");
      }
      std::set<std::string> cats(col.categories.begin(), col.categories.end());
      if (cats.size() != col.categories.size()) {
        throw ValidationError("schema: duplicate category in column '" + col.name + "'");
      }
    }
    if (col.edge) EdgeCaseSpec{{{col.name, *col.edge}}}.validate_against(std::span(&col, 1));
  }
  if (target.positive_token == target.negative_token) {
    throw ValidationError("schema: target tokens must differ");
  }
}

EdgeCaseSpec EdgeCaseSpec::from_columns(std::span<const ColumnSchema> columns) {
  EdgeCaseSpec spec;
  for (const auto& col : columns) {
    if (col.edge) spec.columns.emplace(col.name, *col.edge);
  }
  return spec;
}

void EdgeCaseSpec::validate_against(std::span<const ColumnSchema> schema) const {
  for (const auto& col : schema) {
    auto it = columns.find(col.name);
    if (it == columns.end()) throw ValidationError("edge spec: missing column '" + col.name + "'");
    const EdgeDistribution& d = it->second;
    if (col.is_categorical()) {
      if (d.probs.size() != col.categories.size()) {
        throw ValidationError("edge spec: column '" + col.name +
                              "' needs one probability per category");
      }
      double total = 0.0;
      for (double p : d.probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
          throw ValidationError("edge spec: negative probability in '" + col.name + "'");
        }
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-6) {
        throw ValidationError("edge spec: probabilities of '" + col.name + "' do not sum to 1");
      }
    } else {
      if (!std::isfinite(d.mu) || !(d.sigma >= 0.0) || !std::isfinite(d.sigma)) {
        throw ValidationError("edge spec: column '" + col.name + "' needs finite mu and sigma >= 0");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Table

Table::Table(std::vector<ColumnSchema> schema, std::vector<std::vector<double>> columns,
             Labels target, std::vector<std::uint64_t> row_ids)
    : schema_(std::move(schema)),
      columns_(std::move(columns)),
      target_(std::move(target)),
      row_ids_(std::move(row_ids)) {
  if (schema_.size() != columns_.size()) {
    throw ValidationError("table: schema and column count differ");
  }
  std::set<std::string> names;
  for (const auto& col : schema_) {
    if (!names.insert(col.name).second) throw ValidationError("table: duplicate column '" + col.name + "'");
  }
  const std::size_t n = target_.size();
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c].size() != n) {
      throw ValidationError("table: column '" + schema_[c].name + "' has wrong length");
    }
    if (schema_[c].is_categorical()) {
      const double levels = static_cast<double>(schema_[c].categories.size());
      for (double v : columns_[c]) {
        if (std::isnan(v)) continue;
        if (v < 0 || v >= levels || v != std::floor(v)) {
          throw ValidationError("table: invalid category code in column '" + schema_[c].name + "'");
        }
      }
    }
  }
  require_binary(target_, "table");
  if (row_ids_.empty()) {
    row_ids_.resize(n);
    std::iota(row_ids_.begin(), row_ids_.end(), std::uint64_t{0});
  } else if (row_ids_.size() != n) {
    throw ValidationError("table: row id count differs from row count");
  }
}

std::optional<std::size_t> Table::find_column(std::string_view name) const {
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].name == name) return c;
  }
  return std::nullopt;
}

bool Table::is_missing(std::size_t r, std::size_t c) const { return std::isnan(columns_[c][r]); }

std::vector<bool> Table::missing_mask(std::size_t c) const {
  std::vector<bool> mask(n_rows());
  for (std::size_t r = 0; r < n_rows(); ++r) mask[r] = is_missing(r, c);
  return mask;
}

std::size_t Table::missing_count(std::size_t c) const {
  const auto& col = columns_.at(c);
  return static_cast<std::size_t>(std::count_if(col.begin(), col.end(), [](double v) { return std::isnan(v); }));
}

std::size_t Table::missing_total() const {
  std::size_t total = 0;
  for (std::size_t c = 0; c < n_cols(); ++c) total += missing_count(c);
  return total;
}

std::size_t Table::positives() const { return count_positives(target_); }

double Table::prevalence() const {
  return n_rows() == 0 ? 0.0 : static_cast<double>(positives()) / static_cast<double>(n_rows());
}

std::string Table::cell_text(std::size_t r, std::size_t c) const {
  const double v = columns_[c][r];
  if (std::isnan(v)) return schema_[c].missing_token;
  if (schema_[c].is_categorical()) return schema_[c].categories[static_cast<std::size_t>(v)];
  return format_number(v);
}

Table Table::select_rows(std::span<const std::size_t> rows) const {
  std::vector<std::vector<double>> cols(n_cols());
  for (std::size_t c = 0; c < n_cols(); ++c) {
    cols[c].reserve(rows.size());
    for (std::size_t r : rows) cols[c].push_back(columns_[c].at(r));
  }
  Labels y;
  std::vector<std::uint64_t> ids;
  y.reserve(rows.size());
  ids.reserve(rows.size());
  for (std::size_t r : rows) {
    y.push_back(target_.at(r));
    ids.push_back(row_ids_.at(r));
  }
  return Table(schema_, std::move(cols), std::move(y), std::move(ids));
}

Table Table::select_columns(std::span<const std::size_t> cols) const {
  std::vector<ColumnSchema> schema;
  std::vector<std::vector<double>> values;
  for (std::size_t c : cols) {
    schema.push_back(schema_.at(c));
    values.push_back(columns_.at(c));
  }
  return Table(std::move(schema), std::move(values), target_, row_ids_);
}

Table Table::select_columns(std::span<const std::string> names) const {
  std::vector<std::size_t> idx;
  for (const auto& name : names) {
    auto c = find_column(name);
    if (!c) throw ValidationError("unknown column '" + name + "'");
    idx.push_back(*c);
  }
  return select_columns(idx);
}

Table Table::with_column(std::size_t c, std::vector<double> values) const {
  auto cols = columns_;
  cols.at(c) = std::move(values);
  return Table(schema_, std::move(cols), target_, row_ids_);
}

Table Table::with_target(Labels target) const { return Table(schema_, columns_, std::move(target), row_ids_); }

Table Table::concat(const Table& a, const Table& b) {
  if (a.n_cols() != b.n_cols()) throw ValidationError("concat: column counts differ");
  for (std::size_t c = 0; c < a.n_cols(); ++c) {
    if (!same_columns(a.schema_[c], b.schema_[c])) {
      throw ValidationError("concat: column '" + a.schema_[c].name + "' does not match");
    }
  }
  auto cols = a.columns_;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    cols[c].insert(cols[c].end(), b.columns_[c].begin(), b.columns_[c].end());
  }
  Labels y = a.target_;
  y.insert(y.end(), b.target_.begin(), b.target_.end());
  auto ids = a.row_ids_;
  ids.insert(ids.end(), b.row_ids_.begin(), b.row_ids_.end());
  return Table(a.schema_, std::move(cols), std::move(y), std::move(ids));
}

std::uint64_t Table::fingerprint(std::size_t r) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(row_ids_[r]);
  for (std::size_t c = 0; c < n_cols(); ++c) {
    const double v = columns_[c][r];
    std::uint64_t bits = 0;
    if (std::isnan(v)) {
      bits = 0x7ff8000000000001ULL;
    } else {
      std::memcpy(&bits, &v, sizeof bits);
    }
    mix(bits);
  }
  return h;
}

std::vector<std::uint64_t> Table::fingerprints() const {
  std::vector<std::uint64_t> out(n_rows());
  for (std::size_t r = 0; r < n_rows(); ++r) out[r] = fingerprint(r);
  return out;
}

void validate_rows(const Table& t, bool allow_missing) {
  for (std::size_t c = 0; c < t.n_cols(); ++c) {
    const auto& col = t.column_schema(c);
    for (std::size_t r = 0; r < t.n_rows(); ++r) {
      const double v = t.at(r, c);
      if (std::isnan(v)) {
        if (!allow_missing) {
          throw ValidationError("row " + std::to_string(r) + ": missing cell in '" + col.name + "'");
        }
        continue;
      }
      if (!std::isfinite(v)) {
        throw ValidationError("row " + std::to_string(r) + ": non-finite value in '" + col.name + "'");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Table read_csv(std::istream& in, const Schema& schema) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);

  // header position -> schema column (or target)
  constexpr std::size_t kTarget = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> slot(header.size());
  std::vector<bool> present(schema.columns.size(), false);
  bool has_target = false;
  for (std::size_t h = 0; h < header.size(); ++h) {
    if (header[h] == schema.target.name) {
      slot[h] = kTarget;
      has_target = true;
      continue;
    }
    auto c = schema.find(header[h]);
    if (!c) throw ValidationError("csv: unknown column '" + header[h] + "'");
    if (present[*c]) throw ValidationError("csv: duplicate column '" + header[h] + "'");
    present[*c] = true;
    slot[h] = *c;
  }
  if (!has_target) throw ValidationError("csv: target column '" + schema.target.name + "' not found");
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (!present[c]) throw ValidationError("csv: column '" + schema.columns[c].name + "' not found");
  }

  std::vector<std::vector<double>> cols(schema.columns.size());
  Labels y;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ValidationError("csv line " + std::to_string(line_no) + ": ragged row");
    }
    for (std::size_t h = 0; h < fields.size(); ++h) {
      const std::string& f = fields[h];
      if (slot[h] == kTarget) {
        if (f == schema.target.positive_token) {
          y.push_back(1);
        } else if (f == schema.target.negative_token) {
          y.push_back(0);
        } else {
          throw ValidationError("csv line " + std::to_string(line_no) + ": non-binary target '" + f + "'");
        }
        continue;
      }
      const ColumnSchema& col = schema.columns[slot[h]];
      if (f == col.missing_token) {
        cols[slot[h]].push_back(kNaN);
        continue;
      }
      if (col.is_categorical()) {
        auto it = std::find(col.categories.begin(), col.categories.end(), f);
        if (it == col.categories.end()) {
          throw ValidationError("csv line " + std::to_string(line_no) + ": unmapped categorical value '" +
                                f + "' in column '" + col.name + "'");
        }
        cols[slot[h]].push_back(static_cast<double>(it - col.categories.begin()));
      } else {
        double v = 0.0;
        const char* first = f.data();
        const char* last = f.data() + f.size();
        while (first < last && *first == ' ') ++first;
        if (first < last && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
          throw ValidationError("csv line " + std::to_string(line_no) + ": invalid numeric value '" + f +
                                "' in column '" + col.name + "'");
        }
        cols[slot[h]].push_back(v);
      }
    }
  }
  return Table(schema.columns, std::move(cols), std::move(y));
}

Table load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, schema);
}

void write_csv(std::ostream& out, const Table& t, const TargetSpec& target) {
  for (std::size_t c = 0; c < t.n_cols(); ++c) out << quote_field(t.column_schema(c).name) << ',';
  out << quote_field(target.name) << '\n';
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    for (std::size_t c = 0; c < t.n_cols(); ++c) out << quote_field(t.cell_text(r, c)) << ',';
    out << (t.target()[r] == 1 ? target.positive_token : target.negative_token) << '\n';
  }
}

void write_csv(const std::string& path, const Table& t, const TargetSpec& target) {
  std::ofstream out(path);
  if (!out) throw ComputeError("cannot write '" + path + "'");
  write_csv(out, t, target);
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<std::size_t> FoldPlan::eval_rows(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < assignments.size(); ++r) {
    if (assignments[r] == fold) rows.push_back(r);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < assignments.size(); ++r) {
    if (assignments[r] != fold) rows.push_back(r);
  }
  return rows;
}

SplitIndices stratified_split_indices(const Labels& y, double test_frac, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ValidationError("split: test_frac must be in (0, 1)");
  require_both_classes(y, "split");

  std::vector<std::size_t> pos, neg;
  for (std::size_t r = 0; r < y.size(); ++r) (y[r] == 1 ? pos : neg).push_back(r);
  const double n = static_cast<double>(y.size());
  const auto n_test = static_cast<std::size_t>(std::ceil(n * test_frac - 1e-9));

  // The smaller class gets floor(n_c * frac) test rows (remainder to train),
  // bumped by one only if that would leave its test share more than one row
  // below proportional. The larger class fills the rest of the test side.
  const bool pos_minor = pos.size() <= neg.size();
  auto& minor = pos_minor ? pos : neg;
  auto& major = pos_minor ? neg : pos;
  auto m = static_cast<std::size_t>(std::floor(static_cast<double>(minor.size()) * test_frac + 1e-9));
  const double proportional = static_cast<double>(minor.size()) / n * static_cast<double>(n_test);
  if (proportional - static_cast<double>(m) > 1.0) ++m;
  if (m == 0 || m >= minor.size() || n_test <= m || n_test - m >= major.size()) {
    throw ValidationError("split: a class would receive an empty side");
  }
  const std::size_t major_test = n_test - m;

  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  SplitIndices out;
  auto take = [&](const std::vector<std::size_t>& cls, std::size_t n_take) {
    out.test.insert(out.test.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_take));
    out.train.insert(out.train.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_take), cls.end());
  };
  take(minor, m);
  take(major, major_test);
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::pair<Table, Table> stratified_split(const Table& t, double test_frac, std::uint64_t seed) {
  const auto idx = stratified_split_indices(t.target(), test_frac, seed);
  return {t.select_rows(idx.train), t.select_rows(idx.test)};
}

FoldPlan stratified_kfold(const Labels& y, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("kfold: k must be at least 2");
  if (k > y.size()) throw ValidationError("kfold: k exceeds the number of rows");
  require_binary(y, "kfold");
  std::vector<std::size_t> pos, neg;
  for (std::size_t r = 0; r < y.size(); ++r) (y[r] == 1 ? pos : neg).push_back(r);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(pos));
  rng.shuffle(std::span<std::size_t>(neg));
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(y.size(), 0);
  // Deal each class round-robin, continuing the offset across classes so
  // overall fold sizes also differ by at most one.
  std::size_t offset = 0;
  for (const auto* cls : {&pos, &neg}) {
    for (std::size_t i = 0; i < cls->size(); ++i) plan.assignments[(*cls)[i]] = (offset + i) % k;
    offset += cls->size();
  }
  return plan;
}

FoldPlan stratified_kfold(const Table& t, std::size_t k, std::uint64_t seed) {
  return stratified_kfold(t.target(), k, seed);
}

}  // namespace raretab
