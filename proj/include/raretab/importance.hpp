#pragma once

#include "raretab/common.hpp"
#include "raretab/models.hpp"
#include "raretab/preprocess.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace raretab {

struct FeatureImportance {
  std::string name;
  double mean = 0.0;  // mean AUC drop over repeats
  double std = 0.0;   // population std over repeats
  std::vector<double> deltas;

  std::size_t repeats() const { return deltas.size(); }
};

struct ImportanceResult {
  std::string model;
  double baseline_auc = 0.0;
  std::vector<FeatureImportance> features;
};

/// Mean drop in AUC when a feature's values are shuffled across rows of the
/// evaluation matrix. Slots that share a source column in the layout move
/// together. Each (feature, repeat) task draws its permutation from
/// derive_seed(seed, "importance", {feature, repeat}); identity draws are
/// redrawn.
ImportanceResult permutation_importance(const Classifier& model, const Matrix& X, const Labels& y,
                                        const FeatureLayout& layout, std::size_t repeats, std::uint64_t seed);
/// One feature per column, named x0, x1, ...
ImportanceResult permutation_importance(const Classifier& model, const Matrix& X, const Labels& y,
                                        std::size_t repeats, std::uint64_t seed);

/// 1-based ranks by descending value, ties share their average rank.
std::vector<double> descending_ranks(std::span<const double> values);

struct RankEntry {
  std::string name;
  double mean_rank = 0.0;
  std::vector<double> per_model;
};

struct RankTable {
  std::vector<std::string> models;
  std::vector<RankEntry> entries;  // in feature order of the inputs
};

RankTable average_ranks(std::span<const ImportanceResult> results);

nlohmann::json to_json(const ImportanceResult& r);
nlohmann::json to_json(const RankTable& t);

}  // namespace raretab
