#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "raretab/preprocess.hpp"
#include "raretab/schema_json.hpp"
#include "raretab/synthgen.hpp"
#include "support.hpp"

using namespace raretab;
using namespace raretab::testing;

namespace {

Table gaussian_pair(std::size_t n, double rho, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rho * a[i] + std::sqrt(1 - rho * rho) * rng.normal();
  }
  return make_table({numeric("a"), numeric("b")}, {a, b}, Labels(n, 1));
}

// Cleaned minority rows of the bundled benchmark.
Table bench_minority() {
  const Schema schema = load_schema(bench_dir() + "/schema.json");
  const Table t = load_csv(bench_dir() + "/benchmark.csv", schema);
  PipelineOptions opt;
  opt.max_missing = 500;
  const FittedPipeline pipe = FittedPipeline::fit(t, opt);
  const Table cleaned = pipe.clean(t);
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < cleaned.n_rows(); ++r) {
    if (cleaned.target()[r] == 1) rows.push_back(r);
  }
  return cleaned.select_rows(rows);
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-9, 0.001, 0.1, 0.5, 0.77, 0.999}) CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK_THROWS_AS(normal_quantile(0.0), ValidationError);
}

TEST_CASE("copula reproduces a skewed marginal") {
  Rng rng(1);
  std::vector<double> x(2000);
  for (auto& v : x) v = std::exp(rng.normal());
  const auto gen = fit_gaussian_copula(make_table({numeric("x")}, {x}, Labels(x.size(), 1)));
  const Table s = gen->sample(10000, 2);
  CHECK(ks_distance(x, column_values(s, 0)) < 0.05);
}

TEST_CASE("copula recovers a 0.8 correlation") {
  const auto gen = fit_gaussian_copula(gaussian_pair(2000, 0.8, 3));
  const Table s = gen->sample(10000, 4);
  CHECK(std::abs(pearson(column_values(s, 0), column_values(s, 1)) - 0.8) <= 0.05);
}

TEST_CASE("copula with identity correlation keeps marginals and drops dependence") {
  const Table t = gaussian_pair(2000, 0.8, 5);
  const auto gen = fit_gaussian_copula(t)->with_correlation(Matrix::Identity(2, 2));
  const Table s = gen->sample(10000, 6);
  CHECK(std::abs(pearson(column_values(s, 0), column_values(s, 1))) < 0.05);
  CHECK(ks_distance(column_values(t, 0), column_values(s, 0)) < 0.05);
  CHECK(ks_distance(column_values(t, 1), column_values(s, 1)) < 0.05);
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(fit_gaussian_copula(t)->with_correlation(bad), ValidationError);
}

TEST_CASE("copula on a single-level category always emits it") {
  const Table t = make_table({categorical("c", {"only"}), numeric("x")}, {std::vector<double>(30, 0.0), std::vector<double>(30, 1.5)},
                             Labels(30, 1));
  const Table s = fit_gaussian_copula(t)->sample(200, 7);
  for (std::size_t r = 0; r < s.n_rows(); ++r) {
    CHECK(s.at(r, 0) == 0.0);
    CHECK(s.at(r, 1) == 1.5);
  }
}

TEST_CASE("copula rejects too few or incomplete rows") {
  CHECK_THROWS_AS(fit_gaussian_copula(gaussian_pair(4, 0.0, 1)), ValidationError);
  const Table holes = make_table({numeric("a")}, {{1, std::nan(""), 3, 4, 5, 6}}, Labels(6, 1));
  CHECK_THROWS_AS(fit_gaussian_copula(holes), ValidationError);
}

TEST_CASE("nearest correlation gives unit diagonal and positive eigenvalues") {
  Matrix m(3, 3);
  m << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
  const Matrix c = nearest_correlation(m);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(c(i, i) == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  CHECK((c - c.transpose()).norm() < 1e-12);
}

TEST_CASE("arf on independent columns converges in the first round") {
  Rng rng(8);
  std::vector<double> a(400), b(400);
  for (std::size_t i = 0; i < 400; ++i) {
    a[i] = rng.normal();
    b[i] = rng.uniform();
  }
  const auto gen = fit_arf(make_table({numeric("a"), numeric("b")}, {a, b}, Labels(400, 1)), {}, 9);
  CHECK(gen->converged());
  CHECK(gen->oob_accuracy().size() == 1);
  CHECK(gen->oob_accuracy()[0] <= 0.5 + ArfOptions{}.delta);
}

TEST_CASE("arf keeps a correlated pair correlated") {
  const Table t = gaussian_pair(500, 0.9, 10);
  const Table s = fit_arf(t, {}, 11)->sample(5000, 12);
  CHECK(pearson(column_values(s, 0), column_values(s, 1)) > 0.5);

  std::vector<double> b = column_values(t, 1);
  Rng rng(13);
  rng.shuffle(std::span<double>(b));
  const Table perm = make_table({numeric("a"), numeric("b")}, {column_values(t, 0), b}, Labels(500, 1));
  const Table sp = fit_arf(perm, {}, 11)->sample(5000, 12);
  CHECK(std::abs(pearson(column_values(sp, 0), column_values(sp, 1))) < 0.1);
}

TEST_CASE("arf sampling edge cases") {
  const auto gen = fit_arf(gaussian_pair(100, 0.5, 14), {}, 15);
  CHECK(gen->sample(0, 1).n_rows() == 0);
  CHECK_THROWS_AS(fit_arf(gaussian_pair(19, 0.5, 14), {}, 15), ValidationError);
  ArfOptions bad;
  bad.n_trees = 0;
  CHECK_THROWS_AS(fit_arf(gaussian_pair(100, 0.5, 14), bad, 15), ValidationError);
}

TEST_CASE("tvae gradient matches finite differences to relative 1e-3") {
  const TvaeNetwork net(5, 2, {3}, 4, 2);
  std::vector<double> params(net.n_params());
  Rng rng(16);
  net.init(params, rng);
  for (auto& p : params) p += 0.1 * rng.normal();
  Matrix x(5, 6), eps(2, 6);
  for (Eigen::Index j = 0; j < 6; ++j) {
    x(0, j) = rng.normal();
    x(1, j) = rng.normal();
    x(2, j) = x(3, j) = x(4, j) = 0.0;
    x(2 + static_cast<Eigen::Index>(rng.index(3)), j) = 1.0;
    eps(0, j) = rng.normal();
    eps(1, j) = rng.normal();
  }
  std::vector<double> grad;
  net.loss_gradient(params, x, eps, &grad);
  REQUIRE(grad.size() == params.size());
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double> up = params, down = params;
    up[i] += h;
    down[i] -= h;
    const double fd = (net.loss_gradient(up, x, eps, nullptr) - net.loss_gradient(down, x, eps, nullptr)) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("tvae trains on benchmark minority rows") {
  const Table minority = bench_minority();
  REQUIRE(minority.positives() == 158);
  const auto gen = fit_tvae(minority, {}, 17);
  const auto& hist = gen->loss_history();
  REQUIRE(hist.size() >= 10);
  CHECK(hist[9] < hist[0]);

  const Table s = gen->sample(5000, 18);
  CHECK_NOTHROW(validate_rows(s, false));
  for (std::size_t c = 0; c < minority.n_cols(); ++c) {
    if (minority.schema()[c].is_categorical()) continue;
    const auto real = column_values(minority, c);
    CAPTURE(minority.schema()[c].name);
    CHECK(std::abs(mean(column_values(s, c)) - mean(real)) <= 0.5 * sd(real));
  }
  CHECK_THROWS_AS(fit_tvae(minority.select_rows(std::vector<std::size_t>{0, 1, 2}), {}, 1), ValidationError);
}

TEST_CASE("generator output is conformant, labelled and reproducible") {
  const Table minority = bench_minority();
  GeneratorOptions opt;
  opt.tvae.epochs = 20;
  for (auto kind : {GeneratorKind::copula, GeneratorKind::arf, GeneratorKind::tvae}) {
    CAPTURE(to_string(kind));
    const GeneratorPtr gen = fit_generator(kind, minority, opt, 19);
    const Table a = gen->sample(500, 20);
    REQUIRE(a.n_rows() == 500);
    CHECK(a.positives() == 500);
    CHECK_NOTHROW(validate_rows(a, false));
    for (auto id : a.row_ids()) CHECK(id >= kSyntheticRowIdBase);
    CHECK(a.n_cols() == minority.n_cols());

    const Table b = gen->sample(500, 20);
    for (std::size_t c = 0; c < a.n_cols(); ++c) CHECK(column_values(a, c) == column_values(b, c));
    CHECK(gen->sample(0, 20).n_rows() == 0);

    const GeneratorPtr back = generator_from_json(gen->to_json());
    const Table r = back->sample(500, 20);
    for (std::size_t c = 0; c < a.n_cols(); ++c) CHECK(column_values(a, c) == column_values(r, c));
    CHECK(back->training_fingerprints() == gen->training_fingerprints());
  }
}

TEST_CASE("edge cohort follows the declared distributions") {
  const Schema schema = load_schema(bench_dir() + "/schema.json");
  const EdgeCaseSpec spec = EdgeCaseSpec::from_columns(schema.columns);
  const Table t = sample_edge_cases(schema.columns, spec, 200, 21);
  REQUIRE(t.n_rows() == 200);
  CHECK(t.positives() == 200);
  const double age = mean(column_values(t, 0));
  CHECK(age >= 91.0);
  CHECK(age <= 94.0);
  const double anemia = mean(column_values(t, 1));
  CHECK(anemia >= 0.84);
  CHECK(anemia <= 0.96);
  CHECK_NOTHROW(validate_rows(t, false));
}

TEST_CASE("edge cohort degenerate distributions") {
  const std::vector<ColumnSchema> cols = {numeric("age"), categorical("anemia", {"no", "yes"})};
  EdgeCaseSpec spec;
  spec.columns["age"] = EdgeDistribution{80.0, 0.0, {}};
  spec.columns["anemia"] = EdgeDistribution{0, 0, {0.0, 1.0}};
  const Table t = sample_edge_cases(cols, spec, 50, 22);
  for (std::size_t r = 0; r < 50; ++r) {
    CHECK(t.at(r, 0) == 80.0);
    CHECK(t.at(r, 1) == 1.0);
  }
  spec.columns.erase("anemia");
  CHECK_THROWS_AS(sample_edge_cases(cols, spec, 5, 22), ValidationError);
}
