#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "raretab/importance.hpp"
#include "raretab/logistic.hpp"
#include "support.hpp"

#include <numeric>

using namespace raretab;
using namespace raretab::testing;

namespace {

struct Planted {
  Matrix X;
  Labels y;
};

// Column 0 carries a logistic signal, the rest are noise.
Planted planted(std::size_t n, std::size_t noise, std::uint64_t seed) {
  Rng rng(seed);
  Planted d{Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(noise + 1)), Labels(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) d.X(r, c) = rng.normal();
    d.y[i] = rng.bernoulli(sigmoid(-1.5 + 1.5 * d.X(r, 0)));
  }
  return d;
}

// Sees only the one-hot block in slots 1..3 and fails if a row breaks it.
class BlockProbe final : public Classifier {
 public:
  ModelFamily family() const override { return ModelFamily::logistic; }
  std::size_t n_features() const override { return 4; }
  nlohmann::json to_json() const override { return {}; }

 protected:
  Vector predict_rows(const Matrix& X) const override {
    Vector p(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      REQUIRE(X(r, 1) + X(r, 2) + X(r, 3) == 1.0);
      p(r) = 0.2 * X(r, 2) + 0.9 * X(r, 3) + 0.05;
    }
    return p;
  }
};

ImportanceResult fake_result(std::string model, std::vector<std::pair<std::string, double>> values) {
  ImportanceResult r;
  r.model = std::move(model);
  for (auto& [name, v] : values) {
    FeatureImportance f;
    f.name = name;
    f.mean = v;
    f.deltas = {v};
    r.features.push_back(f);
  }
  return r;
}

}  // namespace

TEST_CASE("constant feature and zero coefficient give zero drop") {
  const Planted d = planted(500, 2, 1);
  Matrix X = d.X;
  X.col(2).setConstant(4.0);
  const auto lr = LogisticModel::fit(X, d.y, {});
  const auto r = permutation_importance(*lr, X, d.y, 10, 2);
  REQUIRE(r.features.size() == 3);
  for (double v : r.features[2].deltas) CHECK(v == 0.0);
  CHECK(r.features[2].repeats() == 10);

  Vector w(3);
  w << 1.2, 0.0, 0.0;
  const LogisticModel zero(w, -1.0);
  const auto z = permutation_importance(zero, d.X, d.y, 5, 3);
  for (std::size_t f = 1; f < 3; ++f) {
    for (double v : z.features[f].deltas) CHECK(v == 0.0);
  }
  CHECK(z.features[0].mean > 0.0);
}

TEST_CASE("planted feature ranks first in at least 9 of 10 seeds") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Planted d = planted(2000, 9, 100 + seed);
    const auto lr = LogisticModel::fit(d.X, d.y, {});
    const auto r = permutation_importance(*lr, d.X, d.y, 10, seed);
    std::vector<double> means;
    for (const auto& f : r.features) means.push_back(f.mean);
    wins += std::max_element(means.begin(), means.end()) == means.begin();
  }
  CHECK(wins >= 9);
}

TEST_CASE("drops are bounded by the baseline and deterministic per seed") {
  const Planted d = planted(300, 4, 4);
  const auto lr = LogisticModel::fit(d.X, d.y, {});
  const auto a = permutation_importance(*lr, d.X, d.y, 6, 5);
  const auto b = permutation_importance(*lr, d.X, d.y, 6, 5);
  const Vector p = lr->predict_proba(d.X);
  CHECK(a.baseline_auc == doctest::Approx(brute_auc({p.data(), p.data() + p.size()}, d.y)).epsilon(1e-12));
  for (std::size_t f = 0; f < a.features.size(); ++f) {
    CHECK(a.features[f].deltas == b.features[f].deltas);
    for (double v : a.features[f].deltas) {
      CHECK(v <= a.baseline_auc);
      CHECK(v >= a.baseline_auc - 1.0);
    }
  }
  CHECK(permutation_importance(*lr, d.X, d.y, 6, 6).features[0].deltas != a.features[0].deltas);
}

TEST_CASE("one-hot slots are permuted as a block") {
  Rng rng(7);
  const std::size_t n = 200;
  Matrix X = Matrix::Zero(static_cast<Eigen::Index>(n), 4);
  Labels y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = rng.normal();
    X(r, 1 + static_cast<Eigen::Index>(rng.index(3))) = 1.0;
    y[i] = rng.bernoulli(0.05 + 0.2 * X(r, 2) + 0.6 * X(r, 3));
  }
  FeatureLayout layout;
  layout.slot_names = {"x", "c=a", "c=b", "c=c"};
  layout.slot_source = {0, 1, 1, 1};
  layout.source_names = {"x", "c"};
  const auto r = permutation_importance(BlockProbe{}, X, y, layout, 5, 8);
  REQUIRE(r.features.size() == 2);
  CHECK(r.features[0].name == "x");
  CHECK(r.features[0].mean == 0.0);
  CHECK(r.features[1].name == "c");
  CHECK(r.features[1].mean > 0.0);
}

TEST_CASE("importance errors") {
  const Planted d = planted(100, 1, 9);
  const auto lr = LogisticModel::fit(d.X, d.y, {});
  CHECK_THROWS_AS(permutation_importance(*lr, d.X, Labels(100, 0), 3, 1), ValidationError);
  CHECK_THROWS_AS(permutation_importance(*lr, d.X, d.y, 0, 1), ValidationError);
}

TEST_CASE("descending ranks average ties") {
  CHECK(descending_ranks(std::vector<double>{0.3, 0.1, 0.2}) == std::vector<double>{1, 3, 2});
  CHECK(descending_ranks(std::vector<double>{0.5, 0.5, 0.1, 0.5}) == std::vector<double>{2, 2, 4, 2});
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng.index(5));
    const auto ranks = descending_ranks(v);
    const double sum = std::accumulate(ranks.begin(), ranks.end(), 0.0);
    CHECK(sum == static_cast<double>(n * (n + 1)) / 2.0);
    for (double r : ranks) CHECK(r >= 1.0);
  }
}

TEST_CASE("average ranks across models") {
  const std::vector<ImportanceResult> one = {fake_result("lr", {{"ef", 0.1}, {"age", 0.3}})};
  const RankTable single = average_ranks(one);
  CHECK(single.entries[0].mean_rank == 2.0);
  CHECK(single.entries[1].mean_rank == 1.0);

  const std::vector<ImportanceResult> two = {fake_result("lr", {{"ef", 0.1}, {"age", 0.3}}),
                                             fake_result("rf", {{"ef", 0.4}, {"age", 0.2}})};
  const RankTable avg = average_ranks(two);
  CHECK(avg.models == std::vector<std::string>{"lr", "rf"});
  CHECK(avg.entries[0].mean_rank == 1.5);
  CHECK(avg.entries[1].mean_rank == 1.5);
  CHECK(avg.entries[0].per_model == std::vector<double>{2, 1});

  const std::vector<ImportanceResult> mismatched = {fake_result("lr", {{"ef", 0.1}, {"age", 0.3}}),
                                                    fake_result("rf", {{"ef", 0.4}, {"pad", 0.2}})};
  CHECK_THROWS_AS(average_ranks(mismatched), ValidationError);
  CHECK_THROWS_AS(average_ranks(std::span<const ImportanceResult>{}), ValidationError);
}

TEST_CASE("importance json carries every repeat") {
  FeatureImportance f;
  f.name = "ef";
  f.deltas = {0.1, 0.3};
  ImportanceResult r;
  r.model = "lr";
  r.features = {f};
  CHECK(to_json(r).dump().find("0.3") != std::string::npos);
}
