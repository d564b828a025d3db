#include "raretab/importance.hpp"

#include "raretab/eval.hpp"
#include "raretab/parallel.hpp"
#include "raretab/rng.hpp"

#include <algorithm>
#include <numeric>

namespace raretab {

using nlohmann::json;

ImportanceResult permutation_importance(const Classifier& model, const Matrix& X, const Labels& y,
                                        const FeatureLayout& layout, std::size_t repeats, std::uint64_t seed) {
  require_both_classes(y, "importance");
  if (repeats < 1) throw ValidationError("importance: repeats must be >= 1");
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw ValidationError("importance: row count mismatch");
  if (layout.width() != static_cast<std::size_t>(X.cols())) {
    throw ValidationError("importance: layout width does not match the matrix");
  }
  const std::size_t n = y.size();
  const Vector base = model.predict_proba(X);
  ImportanceResult out;
  out.baseline_auc = auc_roc(std::span<const double>(base.data(), n), y);

  const auto groups = layout.groups();
  out.features.resize(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    out.features[g].name = layout.source_names[layout.slot_source[groups[g].front()]];
    out.features[g].deltas.resize(repeats);
  }
  parallel_for(groups.size() * repeats, [&](std::size_t task) {
    const std::size_t g = task / repeats, r = task % repeats;
    Rng rng(derive_seed(seed, "importance", {g, r}));
    std::vector<std::size_t> perm = rng.permutation(n);
    while (n > 1 && std::is_sorted(perm.begin(), perm.end())) perm = rng.permutation(n);
    Matrix shuffled = X;
    for (std::size_t s : groups[g]) {
      const auto col = static_cast<Eigen::Index>(s);
      for (std::size_t i = 0; i < n; ++i) {
        shuffled(static_cast<Eigen::Index>(i), col) = X(static_cast<Eigen::Index>(perm[i]), col);
      }
    }
    const Vector p = model.predict_proba(shuffled);
    out.features[g].deltas[r] = out.baseline_auc - auc_roc(std::span<const double>(p.data(), n), y);
  });
  for (auto& f : out.features) {
    const MeanStd ms = mean_std(f.deltas);
    f.mean = ms.mean;
    f.std = ms.std;
  }
  return out;
}

ImportanceResult permutation_importance(const Classifier& model, const Matrix& X, const Labels& y,
                                        std::size_t repeats, std::uint64_t seed) {
  FeatureLayout layout;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const std::string name = "x" + std::to_string(c);
    layout.slot_names.push_back(name);
    layout.source_names.push_back(name);
    layout.slot_source.push_back(static_cast<std::size_t>(c));
  }
  return permutation_importance(model, X, y, layout, repeats, seed);
}

std::vector<double> descending_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

RankTable average_ranks(std::span<const ImportanceResult> results) {
  if (results.empty()) throw ValidationError("average_ranks: no results");
  RankTable table;
  const auto& first = results.front().features;
  for (const auto& f : first) table.entries.push_back(RankEntry{f.name, 0.0, {}});
  for (const auto& r : results) {
    if (r.features.size() != first.size()) throw ValidationError("average_ranks: feature sets differ");
    std::vector<double> means;
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (r.features[i].name != first[i].name) throw ValidationError("average_ranks: feature sets differ");
      means.push_back(r.features[i].mean);
    }
    const auto ranks = descending_ranks(means);
    for (std::size_t i = 0; i < ranks.size(); ++i) table.entries[i].per_model.push_back(ranks[i]);
    table.models.push_back(r.model);
  }
  for (auto& e : table.entries) {
    e.mean_rank = std::accumulate(e.per_model.begin(), e.per_model.end(), 0.0) / static_cast<double>(results.size());
  }
  return table;
}

json to_json(const ImportanceResult& r) {
  json features = json::array();
  for (const auto& f : r.features) {
    features.push_back({{"name", f.name}, {"mean", f.mean}, {"std", f.std}, {"repeats", f.repeats()},
                        {"deltas", f.deltas}});
  }
  return {{"model", r.model}, {"baseline_auc", r.baseline_auc}, {"features", features}};
}

json to_json(const RankTable& t) {
  json entries = json::array();
  for (const auto& e : t.entries) {
    entries.push_back({{"name", e.name}, {"mean_rank", e.mean_rank}, {"per_model", e.per_model}});
  }
  return {{"models", t.models}, {"entries", entries}};
}

}  // namespace raretab
