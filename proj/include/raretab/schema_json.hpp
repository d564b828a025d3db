#pragma once

#include "raretab/data.hpp"

#include "json.hpp"

#include <span>
#include <string>
#include <vector>

namespace raretab {

// Schema document:
//   {"target": {"name": "cardiac_death", "positive": "1", "negative": "0"},
//    "columns": [{"name": "Age", "kind": "numeric", "missing_token": "",
//                 "edge": {"mu": 92.5, "sigma": 4.33}},
//                {"name": "Anemia", "kind": "categorical", "categories": ["no", "yes"],
//                 "edge": {"probs": {"no": 0.1, "yes": 0.9}}}]}
// "probs" may also be an array aligned with "categories".

nlohmann::json columns_to_json(std::span<const ColumnSchema> columns);
std::vector<ColumnSchema> columns_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const Schema& schema);
Schema schema_from_json(const nlohmann::json& j);
Schema load_schema(const std::string& path);

/// Edge distributions keyed by column name, {"Age": {"mu": .., "sigma": ..}, ...},
/// or a schema document whose columns carry "edge" entries. Categories are
/// resolved against schema.
EdgeCaseSpec edge_spec_from_json(const nlohmann::json& j, std::span<const ColumnSchema> schema);
EdgeCaseSpec load_edge_spec(const std::string& path, std::span<const ColumnSchema> schema);
nlohmann::json edge_spec_to_json(const EdgeCaseSpec& spec, std::span<const ColumnSchema> schema);

}  // namespace raretab
