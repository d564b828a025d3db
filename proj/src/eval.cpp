#include "raretab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace raretab {

namespace {

void check_pair(std::span<const double> p, const Labels& y, const char* what) {
  if (p.size() != y.size()) throw ValidationError(std::string(what) + ": probability and label counts differ");
  if (p.empty()) throw ValidationError(std::string(what) + ": empty input");
  require_binary(y, what);
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

bool correct(double p, int y, double threshold) { return (p >= threshold ? 1 : 0) == y; }

}  // namespace

ConfusionCounts confusion_at_threshold(std::span<const double> p, const Labels& y, double threshold) {
  check_pair(p, y, "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool pred = p[i] >= threshold;
    if (y[i] == 1) {
      pred ? ++c.tp : ++c.fn;
    } else {
      pred ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

ClassificationMetrics classification_metrics(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  ClassificationMetrics m;
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

double auc_roc(std::span<const double> p, const Labels& y) {
  check_pair(p, y, "auc");
  require_both_classes(y, "auc");
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  // Sum of tie-averaged ranks of the positives (Mann–Whitney U).
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && p[order[j]] == p[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y[order[k]] == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(count_positives(y));
  const double nn = static_cast<double>(y.size()) - np;
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double avg_confidence(std::span<const double> p) {
  if (p.empty()) throw ValidationError("confidence: empty input");
  double s = 0.0;
  for (double v : p) s += std::max(v, 1.0 - v);
  return s / static_cast<double>(p.size());
}

double avg_entropy(std::span<const double> p) {
  if (p.empty()) throw ValidationError("entropy: empty input");
  const auto term = [](double q) { return q > 0.0 ? -q * std::log(q) : 0.0; };
  double s = 0.0;
  for (double v : p) s += term(v) + term(1.0 - v);
  return s / static_cast<double>(p.size());
}

double brier(std::span<const double> p, const Labels& y) {
  check_pair(p, y, "brier");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - y[i];
    s += d * d;
  }
  return s / static_cast<double>(p.size());
}

double brier_two_class(std::span<const double> p, const Labels& y) {
  check_pair(p, y, "brier");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d1 = p[i] - y[i];
    const double d0 = (1.0 - p[i]) - (1 - y[i]);
    s += d1 * d1 + d0 * d0;
  }
  return s / static_cast<double>(p.size());
}

std::vector<CalibrationBin> calibration_bins(std::span<const double> p, const Labels& y, std::size_t m,
                                             double threshold) {
  check_pair(p, y, "ece");
  if (m < 1) throw ValidationError("ece: bin count must be >= 1");
  std::vector<CalibrationBin> bins(m);
  for (std::size_t b = 0; b < m; ++b) {
    bins[b].lower = static_cast<double>(b) / static_cast<double>(m);
    bins[b].upper = static_cast<double>(b + 1) / static_cast<double>(m);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double conf = std::max(p[i], 1.0 - p[i]);
    const auto b = std::min(m - 1, static_cast<std::size_t>(conf * static_cast<double>(m)));
    bins[b].count += 1;
    bins[b].confidence += conf;
    bins[b].accuracy += correct(p[i], y[i], threshold) ? 1.0 : 0.0;
  }
  for (auto& bin : bins) {
    if (bin.count == 0) continue;
    bin.confidence /= static_cast<double>(bin.count);
    bin.accuracy /= static_cast<double>(bin.count);
  }
  return bins;
}

double ece(std::span<const double> p, const Labels& y, std::size_t m, double threshold) {
  const auto bins = calibration_bins(p, y, m, threshold);
  double e = 0.0;
  for (const auto& bin : bins) {
    e += static_cast<double>(bin.count) / static_cast<double>(p.size()) * std::abs(bin.accuracy - bin.confidence);
  }
  return e;
}

RcCurve risk_coverage(std::span<const double> p, const Labels& y, double threshold) {
  check_pair(p, y, "risk_coverage");
  const std::size_t n = p.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::max(p[a], 1.0 - p[a]) > std::max(p[b], 1.0 - p[b]);
  });
  RcCurve curve;
  std::size_t errors = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!correct(p[order[k]], y[order[k]], threshold)) ++errors;
    curve.points.push_back({static_cast<double>(k + 1) / static_cast<double>(n),
                            static_cast<double>(errors) / static_cast<double>(k + 1)});
  }
  for (std::size_t k = 1; k < n; ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    curve.auc_rc += 0.5 * (a.risk + b.risk) * (b.coverage - a.coverage);
  }
  return curve;
}

double nearest_rank_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile: empty input");
  const double n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / n);
  return out;
}

CohortSummary cohort_summary(std::span<const double> p) {
  if (p.empty()) throw ValidationError("cohort summary: empty input");
  std::vector<double> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end());
  CohortSummary s;
  s.q0 = sorted.front();
  s.q50 = nearest_rank_quantile(sorted, 0.5);
  s.q99 = nearest_rank_quantile(sorted, 0.99);
  const MeanStd ms = mean_std(p);
  s.mean = ms.mean;
  s.std = ms.std;
  return s;
}

}  // namespace raretab
