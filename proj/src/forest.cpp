#include "raretab/forest.hpp"
#include "raretab/parallel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace raretab {

using nlohmann::json;

std::shared_ptr<const RandomForest> RandomForest::fit(const Matrix& X, const Labels& y, const ForestParams& p,
                                                      std::uint64_t seed, bool keep_inbag) {
  check_training_data(X, y, "random_forest");
  validate(p);
  const std::size_t n = y.size();
  const std::size_t d = static_cast<std::size_t>(X.cols());
  const BinnedMatrix data = BinnedMatrix::build(X);
  std::vector<double> weight(n, 1.0), label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = y[i];
  std::vector<std::size_t> features(d);
  std::iota(features.begin(), features.end(), std::size_t{0});

  GrowOptions opt;
  opt.criterion = SplitCriterion::gini;
  opt.max_depth = p.max_depth;
  opt.min_leaf = p.min_leaf;
  opt.min_split = p.min_split;
  opt.max_features = p.max_features > 0
                         ? p.max_features
                         : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

  std::vector<Tree> trees(p.n_trees);
  std::vector<std::vector<std::uint16_t>> inbag(keep_inbag ? p.n_trees : 0);
  parallel_for(p.n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(seed, "forest-tree", {t}));
    std::vector<std::size_t> rows(n);
    if (p.bootstrap) {
      for (auto& r : rows) r = rng.index(n);
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    if (keep_inbag) {
      inbag[t].assign(n, 0);
      for (std::size_t r : rows) ++inbag[t][r];
    }
    trees[t] = grow_tree(data, rows, weight, label, features, opt, rng);
  });
  auto forest = std::make_shared<RandomForest>(d, std::move(trees));
  forest->inbag_ = std::move(inbag);
  return forest;
}

Vector RandomForest::predict_rows(const Matrix& X) const {
  Vector out = Vector::Zero(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    double s = 0.0;
    for (const auto& t : trees_) s += t.predict(X, r);
    out(r) = s / static_cast<double>(trees_.size());
  }
  return out;
}

Vector RandomForest::oob_proba(const Matrix& X) const {
  if (inbag_.empty()) throw ValidationError("random_forest: in-bag counts were not kept");
  const std::size_t n = inbag_.front().size();
  if (static_cast<std::size_t>(X.rows()) != n) throw ValidationError("random_forest: oob needs the training matrix");
  Vector out(X.rows());
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    std::size_t m = 0;
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      if (inbag_[t][r] != 0) continue;
      s += trees_[t].predict(X, static_cast<Eigen::Index>(r));
      ++m;
    }
    out(static_cast<Eigen::Index>(r)) = m > 0 ? s / static_cast<double>(m) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

json RandomForest::to_json() const {
  json trees = json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"type", "random_forest"}, {"n_features", n_features_}, {"trees", std::move(trees)}};
}

std::shared_ptr<const RandomForest> RandomForest::from_json(const json& j) {
  std::vector<Tree> trees;
  for (const auto& t : j.at("trees")) trees.push_back(Tree::from_json(t));
  if (trees.empty()) throw ValidationError("random_forest: no trees");
  return std::make_shared<const RandomForest>(j.at("n_features").get<std::size_t>(), std::move(trees));
}

}  // namespace raretab
