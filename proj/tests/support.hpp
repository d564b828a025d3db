#pragma once

#include "raretab/data.hpp"
#include "raretab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace raretab::testing {

inline ColumnSchema numeric(std::string name) {
  ColumnSchema c;
  c.name = std::move(name);
  return c;
}

inline ColumnSchema categorical(std::string name, std::vector<std::string> categories) {
  ColumnSchema c;
  c.name = std::move(name);
  c.kind = ColumnKind::categorical;
  c.categories = std::move(categories);
  return c;
}

inline Table make_table(std::vector<ColumnSchema> schema, std::vector<std::vector<double>> columns, Labels y) {
  return Table(std::move(schema), std::move(columns), std::move(y));
}

/// Labels with exactly `positives` ones in random positions.
inline Labels shuffled_labels(std::size_t n, std::size_t positives, std::uint64_t seed) {
  Labels y(n, 0);
  for (std::size_t i = 0; i < positives; ++i) y[i] = 1;
  Rng rng(seed);
  rng.shuffle(std::span<int>(y));
  return y;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> column_values(const Table& t, std::size_t c) {
  const auto s = t.column(c);
  return {s.begin(), s.end()};
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

/// Pairwise Mann-Whitney count, ties 1/2.
inline double brute_auc(const std::vector<double>& p, const Labels& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (p[i] > p[j]) wins += 1.0;
      else if (p[i] == p[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline std::string bench_dir() { return RARETAB_DATA_DIR; }

}  // namespace raretab::testing
