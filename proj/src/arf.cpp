#include "raretab/forest.hpp"
#include "raretab/schema_json.hpp"
#include "raretab/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace raretab {

using nlohmann::json;

namespace {

Matrix table_matrix(const std::vector<std::vector<double>>& cols, std::size_t n) {
  Matrix X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t r = 0; r < n; ++r) X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cols[c][r];
  }
  return X;
}

/// Real-row membership of each leaf of one tree, keyed by node index.
struct LeafMembers {
  std::vector<std::size_t> node_of;  // per real row
  std::vector<std::vector<std::size_t>> rows;
};

LeafMembers leaf_members(const Tree& tree, const Matrix& real) {
  LeafMembers m;
  m.rows.resize(tree.nodes().size());
  for (Eigen::Index r = 0; r < real.rows(); ++r) {
    m.node_of.push_back(tree.leaf(real, r));
    m.rows[m.node_of.back()].push_back(static_cast<std::size_t>(r));
  }
  return m;
}

std::size_t draw_category(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    acc += probs[k];
    last = k;
    if (u < acc) return k;
  }
  return last;
}

/// Per-leaf box bounds (lo, hi] on every feature, keyed by node index.
void leaf_boxes(const Tree& tree, std::size_t d, std::vector<std::vector<std::pair<double, double>>>& boxes) {
  const auto& nodes = tree.nodes();
  boxes.assign(nodes.size(), {});
  boxes[0].assign(d, {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& n = nodes[i];
    if (n.feature < 0) continue;
    const auto f = static_cast<std::size_t>(n.feature);
    auto left = boxes[i], right = boxes[i];
    left[f].second = std::min(left[f].second, n.threshold);
    right[f].first = std::max(right[f].first, n.threshold);
    boxes[static_cast<std::size_t>(n.left)] = std::move(left);
    boxes[static_cast<std::size_t>(n.right)] = std::move(right);
  }
}

/// Draws from N(mean, sd) truncated to [lo, hi] by inverting the CDF.
double truncated_normal(double mean, double sd, double lo, double hi, Rng& rng) {
  if (!(sd > 0.0) || !(hi > lo)) return std::clamp(mean, lo, hi);
  const double a = normal_cdf((lo - mean) / sd);
  const double b = normal_cdf((hi - mean) / sd);
  const double u = a + rng.uniform() * (b - a);
  if (!(b - a > 1e-12) || !(u > 0.0 && u < 1.0)) return std::clamp(mean, lo, hi);
  return std::clamp(mean + sd * normal_quantile(u), lo, hi);
}

}  // namespace

ArfGenerator::ArfGenerator(std::vector<ColumnSchema> schema, std::vector<std::uint64_t> fingerprints,
                           std::vector<std::vector<Leaf>> trees, std::vector<double> oob_accuracy, bool converged,
                           std::vector<std::vector<double>> fallback_columns)
    : Generator(std::move(schema), std::move(fingerprints)),
      trees_(std::move(trees)),
      oob_(std::move(oob_accuracy)),
      converged_(converged),
      fallback_(std::move(fallback_columns)) {
  if (trees_.empty() && fallback_.empty()) throw ValidationError("arf: no leaves and no marginals");
}

std::size_t ArfGenerator::n_leaves() const {
  std::size_t s = 0;
  for (const auto& t : trees_) s += t.size();
  return s;
}

std::vector<std::vector<double>> ArfGenerator::sample_columns(std::size_t n, Rng& rng) const {
  const auto& sch = schema();
  std::vector<std::vector<double>> cols(sch.size(), std::vector<double>(n));
  if (!fallback_.empty()) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < sch.size(); ++c) cols[c][r] = fallback_[c][rng.index(fallback_[c].size())];
    }
    return cols;
  }
  for (std::size_t r = 0; r < n; ++r) {
    const auto& leaves = trees_[rng.index(trees_.size())];
    double u = rng.uniform();
    std::size_t li = 0;
    for (; li + 1 < leaves.size(); ++li) {
      u -= leaves[li].weight;
      if (u < 0.0) break;
    }
    const Leaf& leaf = leaves[li];
    for (std::size_t c = 0; c < sch.size(); ++c) {
      const LeafColumn& lc = leaf.columns[c];
      if (sch[c].is_categorical()) {
        cols[c][r] = static_cast<double>(draw_category(lc.probs, rng));
      } else {
        cols[c][r] = truncated_normal(lc.mean, lc.sd, lc.lo, lc.hi, rng);
      }
    }
  }
  return cols;
}

json ArfGenerator::to_json() const {
  json j = base_json();
  json trees = json::array();
  for (const auto& t : trees_) {
    json leaves = json::array();
    for (const auto& leaf : t) {
      json cols = json::array();
      for (const auto& c : leaf.columns) {
        if (c.probs.empty()) {
          cols.push_back({{"mean", c.mean}, {"sd", c.sd}, {"lo", c.lo}, {"hi", c.hi}});
        } else {
          cols.push_back({{"probs", c.probs}});
        }
      }
      leaves.push_back({{"weight", leaf.weight}, {"columns", std::move(cols)}});
    }
    trees.push_back(std::move(leaves));
  }
  j["trees"] = std::move(trees);
  j["oob_accuracy"] = oob_;
  j["converged"] = converged_;
  j["fallback"] = fallback_;
  return j;
}

std::shared_ptr<const ArfGenerator> ArfGenerator::from_json(const json& j) {
  std::vector<std::vector<Leaf>> trees;
  for (const auto& t : j.at("trees")) {
    std::vector<Leaf> leaves;
    for (const auto& l : t) {
      Leaf leaf;
      leaf.weight = l.at("weight").get<double>();
      for (const auto& c : l.at("columns")) {
        LeafColumn lc;
        if (c.contains("probs")) {
          lc.probs = c.at("probs").get<std::vector<double>>();
        } else {
          lc.mean = c.at("mean").get<double>();
          lc.sd = c.at("sd").get<double>();
          lc.lo = c.at("lo").get<double>();
          lc.hi = c.at("hi").get<double>();
        }
        leaf.columns.push_back(std::move(lc));
      }
      leaves.push_back(std::move(leaf));
    }
    trees.push_back(std::move(leaves));
  }
  return std::make_shared<const ArfGenerator>(
      columns_from_json(j.at("columns")), j.at("training_fingerprints").get<std::vector<std::uint64_t>>(),
      std::move(trees), j.at("oob_accuracy").get<std::vector<double>>(), j.at("converged").get<bool>(),
      j.at("fallback").get<std::vector<std::vector<double>>>());
}

std::shared_ptr<const ArfGenerator> fit_arf(const Table& rows, const ArfOptions& options, std::uint64_t seed) {
  if (rows.n_rows() < 20) throw ValidationError("arf: need at least 20 rows to fit");
  if (options.n_trees < 1 || options.min_leaf < 1 || options.max_rounds < 1 || !(options.delta >= 0.0)) {
    throw ValidationError("arf: invalid options");
  }
  validate_rows(rows, false);
  const std::size_t n = rows.n_rows(), d = rows.n_cols();
  const auto& sch = rows.schema();
  std::vector<std::vector<double>> real_cols(d);
  for (std::size_t c = 0; c < d; ++c) real_cols[c].assign(rows.column(c).begin(), rows.column(c).end());
  const Matrix real = table_matrix(real_cols, n);
  std::vector<double> col_min(d), col_max(d);
  for (std::size_t c = 0; c < d; ++c) {
    col_min[c] = real.col(static_cast<Eigen::Index>(c)).minCoeff();
    col_max[c] = real.col(static_cast<Eigen::Index>(c)).maxCoeff();
  }

  Rng rng(derive_seed(seed, "arf"));
  // Round-zero synthetic data: every column permuted independently.
  std::vector<std::vector<double>> synth = real_cols;
  for (auto& col : synth) rng.shuffle(std::span<double>(col));

  ForestParams fp;
  fp.n_trees = options.n_trees;
  fp.max_depth = options.max_depth;
  fp.min_leaf = options.min_leaf;
  fp.min_split = 2 * options.min_leaf;
  fp.bootstrap = true;

  Labels y(2 * n, 0);
  std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), 1);
  std::vector<double> oob;
  bool converged = false;
  std::shared_ptr<const RandomForest> forest;
  for (std::size_t round = 0; round < options.max_rounds; ++round) {
    Matrix X(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(d));
    X.topRows(static_cast<Eigen::Index>(n)) = real;
    X.bottomRows(static_cast<Eigen::Index>(n)) = table_matrix(synth, n);
    forest = RandomForest::fit(X, y, fp, derive_seed(seed, "arf-discriminator", {round}), true);
    const Vector p = forest->oob_proba(X);
    double hits = 0.0, counted = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (std::isnan(p(i))) continue;
      counted += 1.0;
      if ((p(i) >= 0.5 ? 1 : 0) == y[static_cast<std::size_t>(i)]) hits += 1.0;
    }
    oob.push_back(counted > 0 ? hits / counted : 0.5);
    if (oob.back() <= 0.5 + options.delta) {
      converged = true;
      break;
    }
    if (round + 1 == options.max_rounds) break;
    // Resample: a leaf chosen by real coverage, each column from a random
    // real row of that leaf.
    std::vector<LeafMembers> members;
    for (const auto& t : forest->trees()) members.push_back(leaf_members(t, real));
    for (std::size_t r = 0; r < n; ++r) {
      const LeafMembers& tm = members[rng.index(members.size())];
      // The leaf holding a uniformly drawn real row is a coverage-weighted leaf.
      const auto& leaf = tm.rows[tm.node_of[rng.index(n)]];
      for (std::size_t c = 0; c < d; ++c) synth[c][r] = real_cols[c][leaf[rng.index(leaf.size())]];
    }
  }

  bool all_stumps = true;
  for (const auto& t : forest->trees()) all_stumps = all_stumps && t.nodes().size() == 1;
  if (all_stumps) {
    std::cerr << "warning: arf discriminator has no splits; sampling independent marginals\n";
    return std::make_shared<const ArfGenerator>(sch, rows.fingerprints(), std::vector<std::vector<ArfGenerator::Leaf>>{},
                                                std::move(oob), converged, real_cols);
  }

  std::vector<std::vector<ArfGenerator::Leaf>> trees;
  std::vector<std::vector<std::pair<double, double>>> boxes;
  for (const auto& t : forest->trees()) {
    const LeafMembers members = leaf_members(t, real);
    leaf_boxes(t, d, boxes);
    std::vector<ArfGenerator::Leaf> leaves;
    for (std::size_t node = 0; node < members.rows.size(); ++node) {
      const auto& m = members.rows[node];
      if (t.nodes()[node].feature >= 0 || m.empty()) continue;
      ArfGenerator::Leaf leaf;
      leaf.weight = static_cast<double>(m.size()) / static_cast<double>(n);
      for (std::size_t c = 0; c < d; ++c) {
        ArfGenerator::LeafColumn lc;
        if (sch[c].is_categorical()) {
          lc.probs.assign(sch[c].categories.size(), 0.0);
          for (std::size_t r : m) lc.probs[static_cast<std::size_t>(real_cols[c][r])] += 1.0 / static_cast<double>(m.size());
        } else {
          double s = 0.0, ss = 0.0;
          for (std::size_t r : m) s += real_cols[c][r];
          lc.mean = s / static_cast<double>(m.size());
          for (std::size_t r : m) ss += (real_cols[c][r] - lc.mean) * (real_cols[c][r] - lc.mean);
          lc.sd = m.size() > 1 ? std::sqrt(ss / static_cast<double>(m.size() - 1)) : 0.0;
          lc.lo = std::max(boxes[node][c].first, col_min[c]);
          lc.hi = std::min(boxes[node][c].second, col_max[c]);
        }
        leaf.columns.push_back(std::move(lc));
      }
      leaves.push_back(std::move(leaf));
    }
    trees.push_back(std::move(leaves));
  }
  return std::make_shared<const ArfGenerator>(sch, rows.fingerprints(), std::move(trees), std::move(oob), converged,
                                              std::vector<std::vector<double>>{});
}

}  // namespace raretab
