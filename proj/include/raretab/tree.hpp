#pragma once

#include "raretab/common.hpp"
#include "raretab/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace raretab {

/// Feature matrix quantized to at most max_bins codes per column. Cut points
/// sit halfway between neighbouring distinct values (or between quantiles when
/// a column has more distinct values than bins), so that
/// x <= cuts[f][b]  <=>  code(x) <= b.
class BinnedMatrix {
 public:
  static BinnedMatrix build(const Matrix& X, std::size_t max_bins = 255);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return cuts_.size(); }
  std::uint8_t code(std::size_t r, std::size_t f) const { return codes_[f * n_rows_ + r]; }
  const std::vector<double>& cuts(std::size_t f) const { return cuts_[f]; }

 private:
  std::size_t n_rows_ = 0;
  std::vector<std::vector<double>> cuts_;
  std::vector<std::uint8_t> codes_;  // column-major
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

/// Binary tree over raw feature values: x[feature] <= threshold goes left.
class Tree {
 public:
  Tree() = default;
  explicit Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t leaf(const Matrix& X, Eigen::Index row) const;
  double predict(const Matrix& X, Eigen::Index row) const { return nodes_[leaf(X, row)].value; }
  std::size_t depth() const;
  std::size_t n_leaves() const;

  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& j);

 private:
  std::vector<TreeNode> nodes_;
};

enum class SplitCriterion {
  gini,    // stats: (weight, weight * label); leaf = positive fraction
  newton,  // stats: (gradient, hessian); leaf = -G / (H + lambda)
};

struct GrowOptions {
  SplitCriterion criterion = SplitCriterion::gini;
  std::size_t max_depth = 6;
  std::size_t min_leaf = 1;
  std::size_t min_split = 2;
  double min_child_weight = 0.0;  // newton: minimum hessian sum per child
  double lambda = 0.0;
  double gamma = 0.0;
  std::size_t max_features = 0;  // candidates drawn per node; 0 uses every allowed feature
};

/// Grows one tree. rows may repeat (bootstrap); a and b are per-row stats
/// indexed by row number; features lists the columns the tree may split on.
Tree grow_tree(const BinnedMatrix& data, std::span<const std::size_t> rows, std::span<const double> a,
               std::span<const double> b, std::span<const std::size_t> features, const GrowOptions& options,
               Rng& rng);

}  // namespace raretab
