#pragma once

// JSON model file. Field order is fixed (ordered_json) and documented here:
//
//   format    "fairsynth-model"
//   version   1
//   schema    {columns: [{name, kind, role, positive_class?, n_bins}]}
//   encoder   {columns: [{kind, has_missing, categories | edges}]}
//   heads     [{column, type: "zero_input", logits}
//              | {column, type: "dense", input_dim, hidden_dim, output_dim, w1, b1, w2, b2}]
//             in generation order; w1 is input-major [input_dim x hidden_dim],
//             w2 row-major [output_dim x hidden_dim]
//   metadata  free-form object written by the caller (training provenance)
//
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

#include <fstream>
#include <string>

#include <json.hpp>

#include "fairsynth/error.hpp"
#include "fairsynth/model.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth {

using Json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

inline Json schema_to_json(const Schema& schema) {
  Json columns = Json::array();
  for (const auto& c : schema.columns()) {
    Json col;
    col["name"] = c.name;
    col["kind"] = std::string(to_string(c.kind));
    col["role"] = std::string(to_string(c.role));
    if (c.positive_class) col["positive_class"] = *c.positive_class;
    col["n_bins"] = c.n_bins;
    columns.push_back(std::move(col));
  }
  Json out;
  out["columns"] = std::move(columns);
  return out;
}

inline Schema schema_from_json(const Json& j) {
  std::vector<ColumnSpec> columns;
  for (const auto& col : j.at("columns")) {
    ColumnSpec c;
    c.name = col.at("name").get<std::string>();
    c.kind = parse_column_kind(col.at("kind").get<std::string>());
    c.role = parse_column_role(col.at("role").get<std::string>());
    if (col.contains("positive_class")) c.positive_class = col.at("positive_class").get<std::string>();
    c.n_bins = col.at("n_bins").get<int>();
    columns.push_back(std::move(c));
  }
  return Schema(std::move(columns));
}

inline Json encoder_to_json(const Encoder& encoder) {
  Json columns = Json::array();
  for (const auto& c : encoder.columns()) {
    Json col;
    col["kind"] = std::string(to_string(c.kind));
    col["has_missing"] = c.has_missing;
    if (c.kind == ColumnKind::categorical) {
      col["categories"] = c.categories;
    } else {
      col["edges"] = c.edges;
    }
    columns.push_back(std::move(col));
  }
  Json out;
  out["columns"] = std::move(columns);
  return out;
}

inline Encoder encoder_from_json(const Json& j) {
  std::vector<ColumnCoding> columns;
  for (const auto& col : j.at("columns")) {
    ColumnCoding c;
    c.kind = parse_column_kind(col.at("kind").get<std::string>());
    c.has_missing = col.at("has_missing").get<bool>();
    if (c.kind == ColumnKind::categorical) {
      c.categories = col.at("categories").get<std::vector<std::string>>();
    } else {
      c.edges = col.at("edges").get<std::vector<double>>();
      if (c.edges.empty()) throw ValidationError("numeric column without bin edges");
    }
    columns.push_back(std::move(c));
  }
  return Encoder(std::move(columns));
}

inline Json model_to_json(const GenerativeModel& m, const Json& metadata = Json::object()) {
  Json out;
  out["format"] = "fairsynth-model";
  out["version"] = kModelFormatVersion;
  out["schema"] = schema_to_json(m.schema);
  out["encoder"] = encoder_to_json(m.encoder);
  Json heads = Json::array();
  for (std::size_t k = 0; k < m.params.heads.size(); ++k) {
    Json h;
    h["column"] = m.schema.column(m.layout.order[k]).name;
    if (const auto* z = std::get_if<ZeroInputHead>(&m.params.heads[k])) {
      h["type"] = "zero_input";
      h["logits"] = z->logits;
    } else {
      const auto& d = std::get<DenseHead>(m.params.heads[k]);
      h["type"] = "dense";
      h["input_dim"] = d.input_dim;
      h["hidden_dim"] = d.hidden_dim;
      h["output_dim"] = d.output_dim;
      h["w1"] = d.w1;
      h["b1"] = d.b1;
      h["w2"] = d.w2;
      h["b2"] = d.b2;
    }
    heads.push_back(std::move(h));
  }
  out["heads"] = std::move(heads);
  out["metadata"] = metadata;
  return out;
}

struct LoadedModel {
  GenerativeModel model;
  Json metadata;
};

inline LoadedModel model_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "fairsynth-model") throw ValidationError("not a fairsynth model file");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ValidationError("unsupported model file version " + j.at("version").dump());
    GenerativeModel m;
    m.schema = schema_from_json(j.at("schema"));
    m.encoder = encoder_from_json(j.at("encoder"));
    m.layout = ModelLayout(m.schema, m.encoder);
    const auto& heads = j.at("heads");
    if (heads.size() != m.layout.positions()) throw ValidationError("model file has the wrong number of heads");
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const auto& h = heads[k];
      if (h.at("column").get<std::string>() != m.schema.column(m.layout.order[k]).name)
        throw ValidationError("head " + std::to_string(k) + " is for the wrong column");
      const std::size_t K = m.layout.cardinality[k];
      if (k == 0) {
        if (h.at("type") != "zero_input") throw ValidationError("first head must be zero_input");
        ZeroInputHead z{h.at("logits").get<std::vector<double>>()};
        if (z.logits.size() != K) throw ValidationError("head 0 has the wrong output size");
        m.params.heads.emplace_back(std::move(z));
      } else {
        if (h.at("type") != "dense") throw ValidationError("head " + std::to_string(k) + " must be dense");
        DenseHead d;
        d.input_dim = h.at("input_dim").get<std::size_t>();
        d.hidden_dim = h.at("hidden_dim").get<std::size_t>();
        d.output_dim = h.at("output_dim").get<std::size_t>();
        d.w1 = h.at("w1").get<std::vector<double>>();
        d.b1 = h.at("b1").get<std::vector<double>>();
        d.w2 = h.at("w2").get<std::vector<double>>();
        d.b2 = h.at("b2").get<std::vector<double>>();
        if (d.input_dim != m.layout.input_dim(k) || d.output_dim != K || d.w1.size() != d.input_dim * d.hidden_dim ||
            d.b1.size() != d.hidden_dim || d.w2.size() != K * d.hidden_dim || d.b2.size() != K)
          throw ValidationError("head " + std::to_string(k) + " has inconsistent shapes");
        m.params.heads.emplace_back(std::move(d));
      }
    }
    if (!all_finite(m.params)) throw ValidationError("model file contains non-finite parameters");
    return {std::move(m), j.value("metadata", Json::object())};
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("corrupt model file: ") + e.what());
  }
}

inline void save_model(const GenerativeModel& m, const std::string& path, const Json& metadata = Json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << model_to_json(m, metadata).dump(1) << '\n';
}

inline LoadedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError("corrupt model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace fairsynth
