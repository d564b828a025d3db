#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "raretab/data.hpp"
#include "raretab/schema_json.hpp"
#include "support.hpp"

#include <set>
#include <sstream>

using namespace raretab;
using namespace raretab::testing;

namespace {

Schema one_numeric() {
  Schema s;
  s.columns = {numeric("x")};
  s.target = {"y", "1", "0"};
  return s;
}

Table read(const std::string& text, const Schema& schema) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

std::size_t count_in(const Labels& y, std::span<const std::size_t> rows) {
  std::size_t n = 0;
  for (auto r : rows) n += static_cast<std::size_t>(y[r]);
  return n;
}

}  // namespace

TEST_CASE("load_csv marks empty tokens missing and keeps row order") {
  const Table t = read("x,y\n1,0\n,1\n3,0\n", one_numeric());
  REQUIRE(t.n_rows() == 3);
  CHECK(t.missing_mask(0) == std::vector<bool>{false, true, false});
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(2, 0) == 3.0);
  CHECK(t.target() == Labels{0, 1, 0});
}

TEST_CASE("load_csv honours a custom missing token and column order") {
  Schema s;
  s.columns = {numeric("a"), categorical("c", {"A", "B"})};
  s.columns[0].missing_token = "NA";
  s.target = {"dead", "yes", "no"};
  const Table t = read("c,dead,a\nB,yes,NA\nA,no,2.5\n", s);
  CHECK(t.is_missing(0, 0));
  CHECK(t.at(1, 0) == 2.5);
  CHECK(t.at(0, 1) == 1.0);
  CHECK(t.target() == Labels{1, 0});
}

TEST_CASE("load_csv rejects malformed input") {
  Schema s;
  s.columns = {categorical("c", {"A", "B"})};
  s.target = {"y", "1", "0"};
  CHECK_THROWS_WITH_AS(read("c,y\nC,0\n", s), doctest::Contains("unmapped categorical value"), ValidationError);
  CHECK_THROWS_WITH_AS(read("c,y\nA,2\n", s), doctest::Contains("non-binary target"), ValidationError);
  CHECK_THROWS_WITH_AS(read("c,y\nA,0,3\n", s), doctest::Contains("ragged row"), ValidationError);
  CHECK_THROWS_WITH_AS(read("c,z,y\nA,1,0\n", s), doctest::Contains("unknown column"), ValidationError);
  CHECK_THROWS_WITH_AS(read("x,y\nabc,0\n", one_numeric()), doctest::Contains("invalid numeric"), ValidationError);
  CHECK_THROWS_AS(read("", s), ValidationError);
}

TEST_CASE("schema validation") {
  Schema s;
  s.columns = {numeric("a"), numeric("a")};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.columns = {categorical("c", {})};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.columns = {numeric("target")};
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("table invariants are enforced") {
  CHECK_THROWS_AS(make_table({numeric("a")}, {{1, 2}}, {0}), ValidationError);
  CHECK_THROWS_AS(make_table({categorical("c", {"A"})}, {{3}}, {0}), ValidationError);
  CHECK_THROWS_AS(make_table({numeric("a")}, {{1}}, {2}), ValidationError);
}

TEST_CASE("csv round trip preserves cells, missingness and labels") {
  Schema s;
  s.columns = {numeric("a"), categorical("c", {"no", "yes"})};
  s.target = {"y", "1", "0"};
  const Table t = make_table(s.columns, {{0.1, std::nan(""), 93.8, -2e-7}, {1, 0, std::nan(""), 1}}, {1, 0, 0, 1});
  std::ostringstream out;
  write_csv(out, t, s.target);
  const Table back = read(out.str(), s);
  REQUIRE(back.n_rows() == t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    for (std::size_t c = 0; c < t.n_cols(); ++c) {
      CHECK(back.is_missing(r, c) == t.is_missing(r, c));
      if (!t.is_missing(r, c)) CHECK(back.at(r, c) == t.at(r, c));
    }
  }
  CHECK(back.target() == t.target());
}

TEST_CASE("bundled benchmark has 2044 rows and 158 positives") {
  const Schema schema = load_schema(bench_dir() + "/schema.json");
  const Table t = load_csv(bench_dir() + "/benchmark.csv", schema);
  CHECK(t.n_rows() == 2044);
  CHECK(t.positives() == 158);
  CHECK(t.n_cols() == 21);
  CHECK(t.prevalence() == doctest::Approx(0.0773).epsilon(0.001));
}

TEST_CASE("stratified split reproduces the 1635/127 and 409/31 partition") {
  const Labels y = shuffled_labels(2044, 158, 3);
  const auto idx = stratified_split_indices(y, 0.2, 11);
  CHECK(idx.train.size() == 1635);
  CHECK(idx.test.size() == 409);
  CHECK(count_in(y, idx.train) == 127);
  CHECK(count_in(y, idx.test) == 31);
}

TEST_CASE("split of 10 rows with 5 positives at 0.5") {
  const Labels y = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  const auto idx = stratified_split_indices(y, 0.5, 1);
  CHECK(idx.train.size() == 5);
  CHECK(idx.test.size() == 5);
  const auto pt = count_in(y, idx.test), pr = count_in(y, idx.train);
  CHECK((pt == 2 || pt == 3));
  CHECK(pt + pr == 5);
}

TEST_CASE("split errors") {
  CHECK_THROWS_AS(stratified_split_indices(Labels(10, 0), 0.2, 1), ValidationError);
  CHECK_THROWS_AS(stratified_split_indices({0, 1, 0, 1}, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(stratified_split_indices({0, 1, 0, 1}, 1.0, 1), ValidationError);
}

TEST_CASE("split property: partition and prevalence bound") {
  Rng meta(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 20 + meta.index(400);
    const std::size_t pos = 2 + meta.index(n / 2);
    const double frac = 0.1 + 0.6 * meta.uniform();
    const Labels y = shuffled_labels(n, pos, meta.bits());
    SplitIndices idx;
    try {
      idx = stratified_split_indices(y, frac, meta.bits());
    } catch (const ValidationError&) {
      continue;
    }
    std::set<std::size_t> all(idx.train.begin(), idx.train.end());
    for (auto r : idx.test) CHECK(all.insert(r).second);
    CHECK(all.size() == n);
    const double prev = static_cast<double>(pos) / static_cast<double>(n);
    const double test_prev = static_cast<double>(count_in(y, idx.test)) / static_cast<double>(idx.test.size());
    CHECK(std::abs(test_prev - prev) <= 1.0 / static_cast<double>(idx.test.size()) + 1e-12);
  }
}

TEST_CASE("kfold: singleton folds") {
  const Labels y = {0, 1, 0, 1, 0, 0, 1, 0, 0, 0};
  const FoldPlan plan = stratified_kfold(y, 10, 5);
  std::vector<std::size_t> sorted = plan.assignments;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t f = 0; f < 10; ++f) CHECK(sorted[f] == f);
}

TEST_CASE("kfold: 127 positives over 10 folds gives 12 or 13 each") {
  const Labels y = shuffled_labels(1635, 127, 8);
  const FoldPlan plan = stratified_kfold(y, 10, 42);
  std::size_t with13 = 0;
  for (std::size_t f = 0; f < 10; ++f) {
    const auto rows = plan.eval_rows(f);
    const auto p = count_in(y, rows);
    CHECK((p == 12 || p == 13));
    with13 += p == 13;
  }
  CHECK(with13 == 7);
  CHECK(stratified_kfold(y, 10, 42).assignments == plan.assignments);
  CHECK(stratified_kfold(y, 10, 43).assignments != plan.assignments);
}

TEST_CASE("kfold errors") {
  CHECK_THROWS_AS(stratified_kfold(Labels{0, 1, 0}, 4, 1), ValidationError);
  CHECK_THROWS_AS(stratified_kfold(Labels{0, 1, 0}, 1, 1), ValidationError);
}

TEST_CASE("kfold property: fold sizes and positive counts differ by at most one") {
  Rng meta(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 10 + meta.index(300);
    const std::size_t pos = meta.index(n + 1);
    const std::size_t k = 2 + meta.index(std::min<std::size_t>(n - 1, 12));
    const Labels y = shuffled_labels(n, pos, meta.bits());
    const FoldPlan plan = stratified_kfold(y, k, meta.bits());
    std::vector<std::size_t> size(k, 0), p(k, 0);
    for (std::size_t r = 0; r < n; ++r) {
      REQUIRE(plan.assignments[r] < k);
      size[plan.assignments[r]]++;
      p[plan.assignments[r]] += static_cast<std::size_t>(y[r]);
    }
    CHECK(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()) <= 1);
    CHECK(*std::max_element(p.begin(), p.end()) - *std::min_element(p.begin(), p.end()) <= 1);
    std::size_t covered = 0;
    for (std::size_t f = 0; f < k; ++f) {
      covered += plan.eval_rows(f).size();
      CHECK(plan.eval_rows(f).size() + plan.train_rows(f).size() == n);
    }
    CHECK(covered == n);
  }
}

TEST_CASE("row selection keeps ids and fingerprints follow content") {
  const Table t = make_table({numeric("a")}, {{1, 2, 3, 4}}, {0, 1, 0, 1});
  const std::vector<std::size_t> rows = {3, 1};
  const Table s = t.select_rows(rows);
  CHECK(s.row_ids() == std::vector<std::uint64_t>{3, 1});
  CHECK(s.fingerprint(0) == t.fingerprint(3));
  CHECK(t.fingerprint(0) != t.fingerprint(1));
  const Table both = Table::concat(t, s);
  CHECK(both.n_rows() == 6);
  CHECK(both.fingerprint(4) == t.fingerprint(3));
}

TEST_CASE("schema json round trip with edge distributions") {
  Schema s;
  s.columns = {numeric("age"), categorical("anemia", {"no", "yes"})};
  s.columns[0].edge = EdgeDistribution{92.5, 4.33, {}};
  s.columns[1].edge = EdgeDistribution{0, 0, {0.1, 0.9}};
  s.target = {"cardiac_death", "1", "0"};
  const Schema back = schema_from_json(schema_to_json(s));
  REQUIRE(back.columns.size() == 2);
  CHECK(back.columns[0].edge->mu == 92.5);
  CHECK(back.columns[1].edge->probs == std::vector<double>{0.1, 0.9});
  CHECK(back.target.name == "cardiac_death");
  const EdgeCaseSpec spec = EdgeCaseSpec::from_columns(back.columns);
  CHECK_NOTHROW(spec.validate_against(back.columns));
  const EdgeCaseSpec again = edge_spec_from_json(edge_spec_to_json(spec, back.columns), back.columns);
  CHECK(again.columns.at("age").sigma == 4.33);
}
