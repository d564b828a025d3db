#pragma once

#include "raretab/common.hpp"

#include <span>
#include <vector>

namespace raretab {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
};

/// A row is predicted positive when p >= threshold.
ConfusionCounts confusion_at_threshold(std::span<const double> p, const Labels& y, double threshold = 0.5);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators yield 0.
ClassificationMetrics classification_metrics(const ConfusionCounts& c);

/// Probability that a random positive outranks a random negative, ties 1/2.
double auc_roc(std::span<const double> p, const Labels& y);

/// Mean of max(p, 1 - p).
double avg_confidence(std::span<const double> p);
/// Mean binary entropy in nats, with 0 ln 0 = 0.
double avg_entropy(std::span<const double> p);
/// Mean (p - y)^2.
double brier(std::span<const double> p, const Labels& y);
/// Two-class sum over both class columns: exactly twice the binary form.
double brier_two_class(std::span<const double> p, const Labels& y);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

/// M equal-width confidence bins over [0, 1]; the last bin is closed.
std::vector<CalibrationBin> calibration_bins(std::span<const double> p, const Labels& y, std::size_t m,
                                             double threshold = 0.5);
double ece(std::span<const double> p, const Labels& y, std::size_t m = 10, double threshold = 0.5);

struct RcPoint {
  double coverage = 0.0;
  double risk = 0.0;
};

struct RcCurve {
  std::vector<RcPoint> points;  // coverage k/n for k = 1..n
  double auc_rc = 0.0;          // trapezoid over the points
};

/// Rows ordered by confidence, most confident first (stable on ties); the
/// risk at coverage k/n is the error rate of the first k rows.
RcCurve risk_coverage(std::span<const double> p, const Labels& y, double threshold = 0.5);

struct CohortSummary {
  double q0 = 0.0;
  double q50 = 0.0;
  double q99 = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

/// Nearest-rank quantile: the ceil(q * n)-th smallest value (q = 0 gives the minimum).
double nearest_rank_quantile(std::span<const double> sorted, double q);
CohortSummary cohort_summary(std::span<const double> p);

/// Mean and population standard deviation.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};
MeanStd mean_std(std::span<const double> values);

}  // namespace raretab
