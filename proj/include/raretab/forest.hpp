#pragma once

#include "raretab/models.hpp"
#include "raretab/tree.hpp"

#include <cstdint>
#include <vector>

namespace raretab {

/// Random forest of Gini CART trees; the probability is the mean of leaf
/// positive fractions.
class RandomForest final : public Classifier {
 public:
  RandomForest(std::size_t n_features, std::vector<Tree> trees)
      : n_features_(n_features), trees_(std::move(trees)) {}

  /// With keep_inbag, per-tree bootstrap multiplicities are retained for
  /// out-of-bag estimates.
  static std::shared_ptr<const RandomForest> fit(const Matrix& X, const Labels& y, const ForestParams& p,
                                                 std::uint64_t seed, bool keep_inbag = false);

  ModelFamily family() const override { return ModelFamily::random_forest; }
  std::size_t n_features() const override { return n_features_; }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const RandomForest> from_json(const nlohmann::json& j);

  const std::vector<Tree>& trees() const { return trees_; }
  /// inbag()[t][r] = times row r was drawn for tree t (empty unless kept).
  const std::vector<std::vector<std::uint16_t>>& inbag() const { return inbag_; }
  /// Mean out-of-bag probability per training row; NaN where a row was in
  /// every bootstrap sample.
  Vector oob_proba(const Matrix& X) const;

 protected:
  Vector predict_rows(const Matrix& X) const override;

 private:
  std::size_t n_features_;
  std::vector<Tree> trees_;
  std::vector<std::vector<std::uint16_t>> inbag_;
};

}  // namespace raretab
