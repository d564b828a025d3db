#include "raretab/calibration.hpp"
#include "raretab/data.hpp"
#include "raretab/parallel.hpp"
#include "raretab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace raretab {

using nlohmann::json;

namespace {

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Targets {
  double pos = 0.0;
  double neg = 0.0;
};

Targets smoothed_targets(const Labels& y) {
  const double np = static_cast<double>(count_positives(y));
  const double nn = static_cast<double>(y.size()) - np;
  return {(np + 1.0) / (np + 2.0), 1.0 / (nn + 2.0)};
}

double objective(std::span<const double> s, const Labels& y, const Targets& t, double a, double b) {
  double f = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double z = a * s[i] + b;
    const double ti = y[i] ? t.pos : t.neg;
    f += ti * softplus(-z) + (1.0 - ti) * softplus(z);
  }
  return f;
}

}  // namespace

double platt_objective(std::span<const double> scores, const Labels& y, double a, double b) {
  return objective(scores, y, smoothed_targets(y), a, b);
}

SigmoidCalibrator fit_platt(std::span<const double> scores, const Labels& y) {
  if (scores.size() != y.size()) throw ValidationError("platt: score and label counts differ");
  require_both_classes(y, "platt");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ValidationError("platt: non-finite score");
  }
  const Targets t = smoothed_targets(y);
  const double np = static_cast<double>(count_positives(y));
  const double nn = static_cast<double>(y.size()) - np;

  SigmoidCalibrator cal;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  if (*lo == *hi) {
    // Without spread the slope is not identifiable; the intercept alone
    // matches the smoothed prevalence.
    const double target = (np * t.pos + nn * t.neg) / (np + nn);
    cal.b = std::log(target) - std::log1p(-target);
    return cal;
  }

  double a = 0.0;
  double b = std::log((np + 1.0) / (nn + 1.0));
  double f = objective(scores, y, t, a, b);
  for (std::size_t it = 0; it < 200; ++it) {
    double ga = 0.0, gb = 0.0, haa = 1e-12, hab = 0.0, hbb = 1e-12;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double p = sigmoid(a * scores[i] + b);
      const double r = p - (y[i] ? t.pos : t.neg);
      const double w = p * (1.0 - p);
      ga += r * scores[i];
      gb += r;
      haa += w * scores[i] * scores[i];
      hab += w * scores[i];
      hbb += w;
    }
    cal.iterations = it;
    if (std::sqrt(ga * ga + gb * gb) < 1e-8) break;
    const double det = haa * hbb - hab * hab;
    double da = -(hbb * ga - hab * gb) / det;
    double db = -(haa * gb - hab * ga) / det;
    if (!std::isfinite(da) || !std::isfinite(db)) {
      da = -ga;
      db = -gb;
    }
    double step = 1.0;
    bool moved = false;
    for (int tries = 0; tries < 60; ++tries) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(scores, y, t, na, nb);
      if (nf <= f) {
        a = na;
        b = nb;
        f = nf;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  cal.a = a;
  cal.b = b;
  return cal;
}

CalibratedModel::CalibratedModel(std::vector<CalibratedMember> members) : members_(std::move(members)) {
  if (members_.empty()) throw ValidationError("calibration: no members");
  for (const auto& m : members_) {
    if (!m.model) throw ValidationError("calibration: null member model");
    if (m.model->n_features() != members_.front().model->n_features()) {
      throw ValidationError("calibration: members disagree on feature count");
    }
  }
}

Vector CalibratedModel::predict_rows(const Matrix& X) const {
  Vector out = Vector::Zero(X.rows());
  for (const auto& m : members_) {
    const Vector p = m.model->predict_proba(X);
    for (Eigen::Index i = 0; i < p.size(); ++i) out(i) += m.calibrator.apply_proba(p(i));
  }
  return out / static_cast<double>(members_.size());
}

json CalibratedModel::to_json() const {
  json members = json::array();
  for (const auto& m : members_) {
    members.push_back({{"model", m.model->to_json()}, {"a", m.calibrator.a}, {"b", m.calibrator.b}});
  }
  return {{"type", "calibrated"}, {"members", std::move(members)}};
}

std::shared_ptr<const CalibratedModel> CalibratedModel::from_json(const json& j) {
  std::vector<CalibratedMember> members;
  for (const auto& m : j.at("members")) {
    CalibratedMember cm;
    cm.model = model_from_json(m.at("model"));
    cm.calibrator.a = m.at("a").get<double>();
    cm.calibrator.b = m.at("b").get<double>();
    members.push_back(std::move(cm));
  }
  return std::make_shared<const CalibratedModel>(std::move(members));
}

std::shared_ptr<const CalibratedModel> calibrate_cv(const ModelFactory& factory, const Matrix& X, const Labels& y,
                                                    std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("calibration: k must be >= 2");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ValidationError("calibration: row count mismatch");
  require_both_classes(y, "calibration");
  if (count_positives(y) < k || y.size() - count_positives(y) < k) {
    throw ValidationError("calibration: each class needs at least k rows");
  }
  const FoldPlan plan = stratified_kfold(y, k, derive_seed(seed, "calibration-folds"));
  std::vector<CalibratedMember> members(k);
  parallel_for(k, [&](std::size_t f) {
    const auto train = plan.train_rows(f);
    const auto held = plan.eval_rows(f);
    ClassifierPtr model = factory(take_rows(X, train), take_labels(y, train), derive_seed(seed, "calibration-member", {f}));
    const Vector p = model->predict_proba(take_rows(X, held));
    std::vector<double> scores(static_cast<std::size_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) scores[static_cast<std::size_t>(i)] = clamped_logit(p(i));
    members[f] = CalibratedMember{std::move(model), fit_platt(scores, take_labels(y, held))};
  });
  return std::make_shared<const CalibratedModel>(std::move(members));
}

std::shared_ptr<const CalibratedModel> calibrate_cv(const Hyperparams& hyper, const Matrix& X, const Labels& y,
                                                    std::size_t k, std::uint64_t seed) {
  validate(hyper);
  return calibrate_cv(
      [&](const Matrix& Xt, const Labels& yt, std::uint64_t s) { return fit_model(Xt, yt, hyper, s); }, X, y, k,
      seed);
}

}  // namespace raretab
