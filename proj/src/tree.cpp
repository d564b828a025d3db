#include "raretab/tree.hpp"

#include <algorithm>
#include <cmath>

namespace raretab {

using nlohmann::json;

BinnedMatrix BinnedMatrix::build(const Matrix& X, std::size_t max_bins) {
  if (max_bins < 2 || max_bins > 256) throw ValidationError("binning: max_bins must be in [2, 256]");
  BinnedMatrix bm;
  bm.n_rows_ = static_cast<std::size_t>(X.rows());
  const std::size_t p = static_cast<std::size_t>(X.cols());
  bm.cuts_.resize(p);
  bm.codes_.resize(p * bm.n_rows_);
  std::vector<double> sorted;
  for (std::size_t f = 0; f < p; ++f) {
    const auto col = X.col(static_cast<Eigen::Index>(f));
    sorted.assign(col.data(), col.data() + col.size());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    auto& cuts = bm.cuts_[f];
    if (sorted.size() <= max_bins) {
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) cuts.push_back(0.5 * (sorted[i] + sorted[i + 1]));
    } else {
      // Quantile cuts over the distinct values of the column.
      const std::size_t u = sorted.size();
      for (std::size_t b = 1; b < max_bins; ++b) {
        const std::size_t i = b * u / max_bins;
        const double c = 0.5 * (sorted[i - 1] + sorted[i]);
        if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
      }
    }
    for (std::size_t r = 0; r < bm.n_rows_; ++r) {
      const double x = col(static_cast<Eigen::Index>(r));
      bm.codes_[f * bm.n_rows_ + r] =
          static_cast<std::uint8_t>(std::lower_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
    }
  }
  return bm;
}

std::size_t Tree::leaf(const Matrix& X, Eigen::Index row) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(X(row, n.feature) <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::size_t Tree::n_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

json Tree::to_json() const {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, value;
  for (const auto& n : nodes_) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
}

Tree Tree::from_json(const json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const std::size_t n = feature.size();
  if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n) {
    throw ValidationError("tree: malformed node arrays");
  }
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i]};
    if (feature[i] >= 0) {
      const auto ok = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
      if (!ok(left[i]) || !ok(right[i])) throw ValidationError("tree: malformed child index");
    }
  }
  return Tree(std::move(nodes));
}

namespace {

struct Totals {
  double a = 0.0;
  double b = 0.0;
  std::size_t count = 0;
};

class Grower {
 public:
  Grower(const BinnedMatrix& data, std::span<const double> a, std::span<const double> b,
         std::span<const std::size_t> features, const GrowOptions& options, Rng& rng)
      : data_(data), a_(a), b_(b), features_(features.begin(), features.end()), opt_(options), rng_(rng) {}

  std::vector<TreeNode> grow(std::vector<std::size_t> rows) {
    nodes_.clear();
    build(rows, 0);
    return std::move(nodes_);
  }

 private:
  double score(double a, double b) const {
    if (opt_.criterion == SplitCriterion::gini) {
      if (a <= 0.0) return 0.0;
      return (b * b + (a - b) * (a - b)) / a;
    }
    return a * a / (b + opt_.lambda);
  }

  double leaf_value(const Totals& t) const {
    if (opt_.criterion == SplitCriterion::gini) return t.a > 0.0 ? t.b / t.a : 0.0;
    const double denom = t.b + opt_.lambda;
    return denom > 0.0 ? -t.a / denom : 0.0;
  }

  bool child_ok(const Totals& t) const {
    if (t.count < std::max<std::size_t>(opt_.min_leaf, 1)) return false;
    return opt_.criterion != SplitCriterion::newton || t.b >= opt_.min_child_weight;
  }

  double gain(const Totals& l, const Totals& r, const Totals& all) const {
    const double raw = score(l.a, l.b) + score(r.a, r.b) - score(all.a, all.b);
    if (opt_.criterion == SplitCriterion::gini) return raw;
    return 0.5 * raw - opt_.gamma;
  }

  std::vector<std::size_t> candidates() {
    std::vector<std::size_t> f = features_;
    const std::size_t m = opt_.max_features;
    if (m == 0 || m >= f.size()) return f;
    for (std::size_t i = 0; i < m; ++i) std::swap(f[i], f[i + rng_.index(f.size() - i)]);
    f.resize(m);
    return f;
  }

  int build(std::vector<std::size_t>& rows, std::size_t depth) {
    Totals all;
    for (std::size_t r : rows) {
      all.a += a_[r];
      all.b += b_[r];
    }
    all.count = rows.size();
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{-1, 0.0, -1, -1, leaf_value(all)});

    if (depth >= opt_.max_depth || rows.size() < std::max<std::size_t>(opt_.min_split, 2) ||
        rows.size() < 2 * std::max<std::size_t>(opt_.min_leaf, 1)) {
      return id;
    }
    if (opt_.criterion == SplitCriterion::gini && (all.b <= 0.0 || all.b >= all.a)) return id;

    // Newton trees accept zero-gain splits.
    double best_gain = opt_.criterion == SplitCriterion::newton ? -1e-12 : 1e-12;
    int best_feature = -1;
    std::size_t best_bin = 0;
    std::vector<Totals> hist;
    for (std::size_t f : candidates()) {
      const std::size_t n_bins = data_.cuts(f).size() + 1;
      if (n_bins < 2) continue;
      hist.assign(n_bins, Totals{});
      for (std::size_t r : rows) {
        Totals& h = hist[data_.code(r, f)];
        h.a += a_[r];
        h.b += b_[r];
        ++h.count;
      }
      Totals left;
      for (std::size_t bin = 0; bin + 1 < n_bins; ++bin) {
        left.a += hist[bin].a;
        left.b += hist[bin].b;
        left.count += hist[bin].count;
        if (hist[bin].count == 0) continue;
        const Totals right{all.a - left.a, all.b - left.b, all.count - left.count};
        if (right.count == 0) break;
        if (!child_ok(left) || !child_ok(right)) continue;
        const double g = gain(left, right, all);
        if (g > best_gain) {
          best_gain = g;
          best_feature = static_cast<int>(f);
          best_bin = bin;
        }
      }
    }
    if (best_feature < 0) return id;

    const auto f = static_cast<std::size_t>(best_feature);
    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) (data_.code(r, f) <= best_bin ? left_rows : right_rows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    const int l = build(left_rows, depth + 1);
    const int r = build(right_rows, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = data_.cuts(f)[best_bin];
    node.left = l;
    node.right = r;
    return id;
  }

  const BinnedMatrix& data_;
  std::span<const double> a_;
  std::span<const double> b_;
  std::vector<std::size_t> features_;
  const GrowOptions& opt_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

Tree grow_tree(const BinnedMatrix& data, std::span<const std::size_t> rows, std::span<const double> a,
               std::span<const double> b, std::span<const std::size_t> features, const GrowOptions& options,
               Rng& rng) {
  if (a.size() != data.n_rows() || b.size() != data.n_rows()) {
    throw ValidationError("grow_tree: stats length differs from row count");
  }
  if (rows.empty()) throw ValidationError("grow_tree: no rows");
  Grower g(data, a, b, features, options, rng);
  return Tree(g.grow(std::vector<std::size_t>(rows.begin(), rows.end())));
}

}  // namespace raretab
