#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "raretab/calibration.hpp"
#include "raretab/eval.hpp"
#include "raretab/logistic.hpp"
#include "support.hpp"

using namespace raretab;
using namespace raretab::testing;

namespace {

struct Scores {
  std::vector<double> s;
  Labels y;
};

Scores simulate(std::size_t n, double slope, double intercept, std::uint64_t seed) {
  Rng rng(seed);
  Scores out;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 2.0 * rng.normal();
    out.s.push_back(s);
    out.y.push_back(rng.bernoulli(sigmoid(slope * s + intercept)));
  }
  return out;
}

// Overconfident stand-in: the true logit is x, the model reports 3x.
struct Overconfident {
  Matrix X;
  Labels y;
  ClassifierPtr model;
};

Overconfident overconfident(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Overconfident o{Matrix(static_cast<Eigen::Index>(n), 1), Labels(n), nullptr};
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal() - 1.0;
    o.X(static_cast<Eigen::Index>(i), 0) = x;
    o.y[i] = rng.bernoulli(sigmoid(x));
  }
  Vector w(1);
  w << 3.0;
  o.model = std::make_shared<LogisticModel>(w, 0.0);
  return o;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("platt recovers the identity on true logits") {
  const Scores d = simulate(10000, 1.0, 0.0, 1);
  const SigmoidCalibrator c = fit_platt(d.s, d.y);
  CHECK(c.a >= 0.9);
  CHECK(c.a <= 1.1);
  CHECK(c.b >= -0.1);
  CHECK(c.b <= 0.1);
}

TEST_CASE("platt recovers a shrunk slope") {
  const Scores d = simulate(10000, 0.5, 0.0, 2);
  const SigmoidCalibrator c = fit_platt(d.s, d.y);
  CHECK(std::abs(c.a - 0.5) <= 0.05);
}

TEST_CASE("platt on constant scores gives the smoothed prevalence") {
  const std::vector<double> s(40, 0.7);
  Labels y(40, 0);
  for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i)] = 1;
  const SigmoidCalibrator c = fit_platt(s, y);
  const double t_pos = 11.0 / 12.0, t_neg = 1.0 / 32.0;
  const double smoothed = (10 * t_pos + 30 * t_neg) / 40.0;
  CHECK(std::abs(c.a) < 1e-9);
  CHECK(c.apply(0.7) == doctest::Approx(smoothed).epsilon(1e-9));
}

TEST_CASE("platt rejects single-class input") {
  CHECK_THROWS_AS(fit_platt(std::vector<double>{0.1, 0.2}, Labels{1, 1}), ValidationError);
}

TEST_CASE("platt matches a brute-force grid on small instances") {
  Rng rng(3);
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 10 + rng.index(41);
    std::vector<double> s(n);
    Labels y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      y[i] = i < 2 ? static_cast<int>(i) : rng.bernoulli(sigmoid(1.2 * s[i] - 0.3));
    }
    const SigmoidCalibrator c = fit_platt(s, y);
    const double fitted = platt_objective(s, y, c.a, c.b);

    double best = std::numeric_limits<double>::infinity(), ba = 0, bb = 0;
    for (double a = -6; a <= 6; a += 0.05) {
      for (double b = -6; b <= 6; b += 0.05) {
        const double v = platt_objective(s, y, a, b);
        if (v < best) {
          best = v;
          ba = a;
          bb = b;
        }
      }
    }
    const double ca = ba, cb = bb;
    for (double a = ca - 0.1; a <= ca + 0.1; a += 0.001) {
      for (double b = cb - 0.1; b <= cb + 0.1; b += 0.001) best = std::min(best, platt_objective(s, y, a, b));
    }
    CHECK(fitted <= best + 1e-9);
    CHECK(best - fitted <= 1e-3);
  }
}

TEST_CASE("identical members average to a single member") {
  const Overconfident o = overconfident(200, 4);
  const SigmoidCalibrator c{0.4, -0.2, 0};
  const CalibratedModel ens({{o.model, c}, {o.model, c}});
  const Vector p = ens.predict_proba(o.X);
  const Vector raw = o.model->predict_proba(o.X);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(c.apply_proba(raw(i))).epsilon(1e-14));
}

TEST_CASE("cross-validated calibration halves the ECE of an overconfident model") {
  const Overconfident o = overconfident(5000, 5);
  const ModelFactory factory = [&](const Matrix&, const Labels&, std::uint64_t) { return o.model; };
  const auto cal = calibrate_cv(factory, o.X, o.y, 5, 11);
  const auto before = to_std(o.model->predict_proba(o.X));
  const auto after = to_std(cal->predict_proba(o.X));
  const double e0 = ece(before, o.y, 10), e1 = ece(after, o.y, 10);
  CHECK(e1 <= 0.5 * e0);
  for (double v : after) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  REQUIRE(cal->members().size() == 5);
  for (const auto& m : cal->members()) {
    CHECK(m.calibrator.a > 0.0);
    const auto raw = to_std(m.model->predict_proba(o.X));
    std::vector<double> calibrated;
    for (double v : raw) calibrated.push_back(m.calibrator.apply_proba(v));
    CHECK(std::abs(auc_roc(raw, o.y) - auc_roc(calibrated, o.y)) <= 1e-12);
  }
}

TEST_CASE("calibrate_cv with fitted members is deterministic and serializable") {
  const Overconfident o = overconfident(600, 6);
  LogisticParams lp;
  const auto a = calibrate_cv(Hyperparams{lp}, o.X, o.y, 3, 9);
  const auto b = calibrate_cv(Hyperparams{lp}, o.X, o.y, 3, 9);
  CHECK(a->predict_proba(o.X) == b->predict_proba(o.X));
  const ClassifierPtr back = model_from_json(a->to_json());
  CHECK(back->predict_proba(o.X) == a->predict_proba(o.X));
  CHECK_THROWS_AS(calibrate_cv(Hyperparams{lp}, o.X, o.y, 1, 9), ValidationError);
}
