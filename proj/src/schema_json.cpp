#include "raretab/schema_json.hpp"

#include <algorithm>
#include <fstream>

namespace raretab {

using nlohmann::json;

namespace {

json edge_to_json(const ColumnSchema& col) {
  const EdgeDistribution& d = *col.edge;
  if (!col.is_categorical()) return {{"mu", d.mu}, {"sigma", d.sigma}};
  json probs = json::object();
  for (std::size_t i = 0; i < col.categories.size(); ++i) probs[col.categories[i]] = d.probs.at(i);
  return {{"probs", std::move(probs)}};
}

EdgeDistribution edge_from_json(const json& j, const ColumnSchema& col) {
  EdgeDistribution d;
  if (col.is_categorical()) {
    if (!j.contains("probs")) throw ValidationError("schema: edge of '" + col.name + "' needs probs");
    const json& p = j.at("probs");
    if (p.is_array()) {
      d.probs = p.get<std::vector<double>>();
    } else if (p.is_object()) {
      d.probs.assign(col.categories.size(), 0.0);
      for (auto it = p.begin(); it != p.end(); ++it) {
        auto pos = std::find(col.categories.begin(), col.categories.end(), it.key());
        if (pos == col.categories.end()) {
          throw ValidationError("schema: edge of '" + col.name + "' names unknown category '" + it.key() + "'");
        }
        d.probs[static_cast<std::size_t>(pos - col.categories.begin())] = it.value().get<double>();
      }
    } else {
      throw ValidationError("schema: edge probs of '" + col.name + "' must be an array or object");
    }
  } else {
    if (!j.contains("mu") || !j.contains("sigma")) {
      throw ValidationError("schema: edge of '" + col.name + "' needs mu and sigma");
    }
    d.mu = j.at("mu").get<double>();
    d.sigma = j.at("sigma").get<double>();
  }
  return d;
}

}  // namespace

json columns_to_json(std::span<const ColumnSchema> columns) {
  json out = json::array();
  for (const auto& col : columns) {
    json c = {{"name", col.name}, {"kind", std::string(to_string(col.kind))}};
    if (col.is_categorical()) c["categories"] = col.categories;
    c["missing_token"] = col.missing_token;
    if (col.edge) c["edge"] = edge_to_json(col);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ColumnSchema> columns_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("schema: columns must be an array");
  std::vector<ColumnSchema> out;
  for (const auto& c : j) {
    try {
      ColumnSchema col;
      col.name = c.at("name").get<std::string>();
      const std::string kind = c.at("kind").get<std::string>();
      if (kind == "numeric") {
        col.kind = ColumnKind::numeric;
      } else if (kind == "categorical") {
        col.kind = ColumnKind::categorical;
        col.categories = c.at("categories").get<std::vector<std::string>>();
      } else {
        throw ValidationError("schema: column '" + col.name + "' has unknown kind '" + kind + "'");
      }
      if (c.contains("missing_token")) col.missing_token = c.at("missing_token").get<std::string>();
      if (c.contains("edge") && !c.at("edge").is_null()) col.edge = edge_from_json(c.at("edge"), col);
      out.push_back(std::move(col));
    } catch (const json::exception& e) {
      throw ValidationError(std::string("schema: malformed column entry: ") + e.what());
    }
  }
  return out;
}

json schema_to_json(const Schema& schema) {
  return {{"target",
           {{"name", schema.target.name},
            {"positive", schema.target.positive_token},
            {"negative", schema.target.negative_token}}},
          {"columns", columns_to_json(schema.columns)}};
}

Schema schema_from_json(const json& j) {
  Schema s;
  try {
    if (j.contains("target")) {
      const json& t = j.at("target");
      if (t.is_string()) {
        s.target.name = t.get<std::string>();
      } else {
        s.target.name = t.value("name", s.target.name);
        s.target.positive_token = t.value("positive", s.target.positive_token);
        s.target.negative_token = t.value("negative", s.target.negative_token);
      }
    }
    s.columns = columns_from_json(j.at("columns"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("schema: ") + e.what());
  }
  s.validate();
  return s;
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("schema: file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("schema: " + path + ": " + e.what());
  }
  return schema_from_json(j);
}

EdgeCaseSpec edge_spec_from_json(const json& j, std::span<const ColumnSchema> schema) {
  const auto column = [&](const std::string& name) -> const ColumnSchema& {
    for (const auto& c : schema) {
      if (c.name == name) return c;
    }
    throw ValidationError("edge spec: unknown column '" + name + "'");
  };
  EdgeCaseSpec spec;
  try {
    if (j.contains("columns") && j.at("columns").is_array()) {
      for (const auto& c : j.at("columns")) {
        if (!c.contains("edge") || c.at("edge").is_null()) continue;
        const std::string name = c.at("name").get<std::string>();
        spec.columns[name] = edge_from_json(c.at("edge"), column(name));
      }
    } else if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it) spec.columns[it.key()] = edge_from_json(it.value(), column(it.key()));
    } else {
      throw ValidationError("edge spec: expected an object");
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("edge spec: ") + e.what());
  }
  return spec;
}

EdgeCaseSpec load_edge_spec(const std::string& path, std::span<const ColumnSchema> schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("edge spec: file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("edge spec: " + path + ": " + e.what());
  }
  return edge_spec_from_json(j, schema);
}

json edge_spec_to_json(const EdgeCaseSpec& spec, std::span<const ColumnSchema> schema) {
  json out = json::object();
  for (const auto& col : schema) {
    auto it = spec.columns.find(col.name);
    if (it == spec.columns.end()) continue;
    ColumnSchema c = col;
    c.edge = it->second;
    out[col.name] = edge_to_json(c);
  }
  return out;
}

}  // namespace raretab
