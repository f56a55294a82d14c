#pragma once

// Schema, CSV ingestion, discrete encoding of mixed-type tables and the
// proxy-attribute injection used by the proxy experiment.
//
// Every column ends up categorical after encoding: categorical columns keep
// their labels (plus a trailing "?" category when missing values were seen),
// numeric columns are cut into empirical-quantile bins.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "fairsynth/error.hpp"
#include "fairsynth/random.hpp"

namespace fairsynth {

inline constexpr std::string_view kMissingToken = "?";

enum class ColumnKind { categorical, numeric };
enum class ColumnRole { plain, protected_attribute, target };

inline std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

inline std::string_view to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::protected_attribute: return "protected";
    case ColumnRole::target: return "target";
    default: return "plain";
  }
}

inline ColumnKind parse_column_kind(std::string_view text) {
  if (text == "categorical") return ColumnKind::categorical;
  if (text == "numeric") return ColumnKind::numeric;
  throw ValidationError("unknown column kind '" + std::string(text) + "'");
}

inline ColumnRole parse_column_role(std::string_view text) {
  if (text == "plain") return ColumnRole::plain;
  if (text == "protected") return ColumnRole::protected_attribute;
  if (text == "target") return ColumnRole::target;
  throw ValidationError("unknown column role '" + std::string(text) + "'");
}

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::categorical;
  ColumnRole role = ColumnRole::plain;
  std::optional<std::string> positive_class;  // target column only
  int n_bins = 10;                            // numeric columns only

  bool operator==(const ColumnSpec&) const = default;
};

/// Ordered column metadata plus the autoregressive generation order:
/// protected columns first (schema order), then the plain columns (schema
/// order), then the target.
class Schema {
 public:
  Schema() = default;

  explicit Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
    std::set<std::string_view> names;
    std::optional<std::size_t> target;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const ColumnSpec& c = columns_[j];
      if (c.name.empty()) throw ValidationError("column " + std::to_string(j) + " has an empty name");
      if (!names.insert(c.name).second) throw ValidationError("duplicate column name '" + c.name + "'");
      if (c.kind == ColumnKind::numeric && c.n_bins < 1)
        throw ValidationError("column '" + c.name + "': n_bins must be positive");
      switch (c.role) {
        case ColumnRole::target:
          if (target) throw ValidationError("more than one target column ('" + columns_[*target].name + "', '" + c.name + "')");
          if (c.kind != ColumnKind::categorical) throw ValidationError("target column '" + c.name + "' must be categorical");
          if (!c.positive_class || c.positive_class->empty())
            throw ValidationError("target column '" + c.name + "' needs a positive_class");
          target = j;
          break;
        case ColumnRole::protected_attribute:
          if (c.kind != ColumnKind::categorical)
            throw ValidationError("protected column '" + c.name + "' must be categorical");
          protected_.push_back(j);
          break;
        case ColumnRole::plain:
          break;
      }
      if (c.role != ColumnRole::target && c.positive_class)
        throw ValidationError("column '" + c.name + "': positive_class is only valid on the target");
    }
    if (!target) throw ValidationError("schema has no target column");
    target_ = *target;

    order_ = protected_;
    for (std::size_t j = 0; j < columns_.size(); ++j)
      if (columns_[j].role == ColumnRole::plain) order_.push_back(j);
    order_.push_back(target_);
  }

  std::size_t size() const { return columns_.size(); }
  const std::vector<ColumnSpec>& columns() const { return columns_; }
  const ColumnSpec& column(std::size_t j) const { return columns_.at(j); }
  const std::vector<std::size_t>& generation_order() const { return order_; }
  const std::vector<std::size_t>& protected_columns() const { return protected_; }
  std::size_t target() const { return target_; }
  const std::string& positive_class() const { return *columns_.at(target_).positive_class; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t j = 0; j < columns_.size(); ++j)
      if (columns_[j].name == name) return j;
    return std::nullopt;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto j = find(name)) return *j;
    throw ValidationError("unknown column '" + std::string(name) + "'");
  }

  bool operator==(const Schema& other) const { return columns_ == other.columns_; }

 private:
  std::vector<ColumnSpec> columns_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> protected_;
  std::size_t target_ = 0;
};

/// Raw cell: missing, categorical label or numeric value.
using Cell = std::variant<std::monostate, std::string, double>;

inline bool is_missing(const Cell& cell) { return std::holds_alternative<std::monostate>(cell); }

struct Dataset {
  Schema schema;
  std::vector<std::vector<Cell>> rows;

  std::size_t size() const { return rows.size(); }
  bool operator==(const Dataset&) const = default;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::string(trim(field)));
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  fields.push_back(std::string(trim(field)));
  return fields;
}

inline std::optional<double> parse_number(std::string_view text) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

inline std::string quote_csv(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_number(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, ptr);
}

inline Dataset read_csv(std::istream& in, const Schema& schema, std::string_view source = "<csv>") {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(std::string(source) + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_csv_line(line);
  std::vector<std::size_t> source_column(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto it = std::find(header.begin(), header.end(), schema.column(j).name);
    if (it == header.end())
      throw ValidationError(std::string(source) + ": header lacks schema column '" + schema.column(j).name + "'");
    source_column[j] = static_cast<std::size_t>(std::distance(header.begin(), it));
  }

  Dataset data{schema, {}};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError(std::string(source) + ": line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, header has " + std::to_string(header.size()));
    std::vector<Cell> row(schema.size());
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const std::string& text = fields[source_column[j]];
      if (text == kMissingToken) continue;
      if (schema.column(j).kind == ColumnKind::numeric) {
        const auto value = detail::parse_number(text);
        if (!value)
          throw ValidationError(std::string(source) + ": line " + std::to_string(line_no) + ", column '" +
                                schema.column(j).name + "': cannot parse '" + text + "' as a number");
        row[j] = *value;
      } else {
        row[j] = text;
      }
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in, schema, path);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  for (std::size_t j = 0; j < data.schema.size(); ++j)
    out << (j ? "," : "") << detail::quote_csv(data.schema.column(j).name);
  out << '\n';
  for (const auto& row : data.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      if (const auto* label = std::get_if<std::string>(&row[j])) {
        out << detail::quote_csv(*label);
      } else if (const auto* value = std::get_if<double>(&row[j])) {
        out << format_number(*value);
      } else {
        out << kMissingToken;
      }
    }
    out << '\n';
  }
}

inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  write_csv(out, data);
}

// ---------------------------------------------------------------------------
// Encoding

/// Empirical quantile of sorted data with linear interpolation between order
/// statistics (position q * (n - 1)).
inline double empirical_quantile(std::span<const double> sorted, double q) {
  const double position = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(position));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = position - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline std::vector<double> quantile_edges(std::vector<double> values, int n_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> edges;
  edges.reserve(static_cast<std::size_t>(n_bins) + 1);
  edges.push_back(values.front());
  for (int k = 1; k < n_bins; ++k)
    edges.push_back(empirical_quantile(values, static_cast<double>(k) / n_bins));
  edges.push_back(values.back());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

struct ColumnCoding {
  ColumnKind kind = ColumnKind::categorical;
  std::vector<std::string> categories;  // categorical: labels; "?" last when has_missing
  std::vector<double> edges;            // numeric: strictly increasing bin edges
  bool has_missing = false;

  /// Number of value bins of a numeric column; a constant column has one.
  std::size_t bins() const { return edges.size() > 1 ? edges.size() - 1 : 1; }

  std::size_t cardinality() const {
    if (kind == ColumnKind::categorical) return categories.size();
    return bins() + (has_missing ? 1 : 0);
  }

  std::optional<std::size_t> missing_index() const {
    if (!has_missing) return std::nullopt;
    return cardinality() - 1;
  }

  /// Bin i holds edge[i] <= v < edge[i+1]; the last bin is closed above.
  /// Values outside [min, max] clamp to the outermost bins.
  std::size_t bin_of(double value) const {
    if (edges.size() < 2) return 0;
    const auto it = std::upper_bound(edges.begin(), edges.end(), value);
    const auto i = static_cast<std::ptrdiff_t>(std::distance(edges.begin(), it)) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(bins()) - 1));
  }

  bool operator==(const ColumnCoding&) const = default;
};

class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(std::vector<ColumnCoding> columns) : columns_(std::move(columns)) {
    lookup_.resize(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      const auto& c = columns_[j];
      auto& lookup = lookup_[j];
      for (std::size_t k = 0; k < c.categories.size(); ++k) lookup.emplace(c.categories[k], k);
    }
  }

  std::size_t size() const { return columns_.size(); }
  const std::vector<ColumnCoding>& columns() const { return columns_; }
  const ColumnCoding& column(std::size_t j) const { return columns_.at(j); }
  std::size_t cardinality(std::size_t j) const { return columns_.at(j).cardinality(); }

  std::vector<std::size_t> cardinalities() const {
    std::vector<std::size_t> out;
    for (const auto& c : columns_) out.push_back(c.cardinality());
    return out;
  }

  std::optional<std::size_t> category_index(std::size_t j, std::string_view label) const {
    const ColumnCoding& c = columns_.at(j);
    if (c.kind != ColumnKind::categorical) return std::nullopt;
    const auto& lookup = lookup_[j];
    const auto it = lookup.find(std::string(label));
    if (it == lookup.end()) return std::nullopt;
    return it->second;
  }

  std::int32_t encode_cell(std::size_t j, const Cell& cell) const {
    const ColumnCoding& c = columns_.at(j);
    if (is_missing(cell)) {
      if (const auto m = c.missing_index()) return static_cast<std::int32_t>(*m);
      throw ValidationError("column " + std::to_string(j) + ": missing value was not seen when fitting");
    }
    if (c.kind == ColumnKind::numeric) {
      const auto* value = std::get_if<double>(&cell);
      if (!value) throw ValidationError("column " + std::to_string(j) + ": expected a number");
      return static_cast<std::int32_t>(c.bin_of(*value));
    }
    const auto* label = std::get_if<std::string>(&cell);
    if (!label) throw ValidationError("column " + std::to_string(j) + ": expected a label");
    const auto k = category_index(j, *label);
    if (!k) throw ValidationError("column " + std::to_string(j) + ": unseen category '" + *label + "'");
    return static_cast<std::int32_t>(*k);
  }

  bool operator==(const Encoder& other) const { return columns_ == other.columns_; }

 private:
  std::vector<ColumnCoding> columns_;
  std::vector<std::unordered_map<std::string, std::size_t>> lookup_;
};

/// Rows as per-column category indices, stored row-major.
struct EncodedDataset {
  Schema schema;
  Encoder encoder;
  std::size_t n_rows = 0;
  std::vector<std::int32_t> cells;

  std::size_t n_cols() const { return schema.size(); }
  std::span<const std::int32_t> row(std::size_t i) const { return {cells.data() + i * n_cols(), n_cols()}; }
  std::int32_t at(std::size_t i, std::size_t j) const { return cells[i * n_cols() + j]; }

  bool operator==(const EncodedDataset&) const = default;
};

inline Encoder fit_encoder(const Dataset& data) {
  if (data.rows.empty()) throw ValidationError("cannot fit an encoder on an empty dataset");
  std::vector<ColumnCoding> columns;
  for (std::size_t j = 0; j < data.schema.size(); ++j) {
    const ColumnSpec& spec = data.schema.column(j);
    ColumnCoding coding;
    coding.kind = spec.kind;
    if (spec.kind == ColumnKind::categorical) {
      std::set<std::string_view> seen;
      for (const auto& row : data.rows) {
        if (is_missing(row[j])) {
          coding.has_missing = true;
        } else if (const auto* label = std::get_if<std::string>(&row[j])) {
          if (seen.insert(*label).second) coding.categories.push_back(*label);
        } else {
          throw ValidationError("column '" + spec.name + "': numeric cell in a categorical column");
        }
      }
      if (coding.has_missing) coding.categories.emplace_back(kMissingToken);
    } else {
      std::vector<double> values;
      values.reserve(data.rows.size());
      for (const auto& row : data.rows) {
        if (is_missing(row[j])) {
          coding.has_missing = true;
        } else if (const auto* value = std::get_if<double>(&row[j])) {
          values.push_back(*value);
        } else {
          throw ValidationError("column '" + spec.name + "': label in a numeric column");
        }
      }
      if (values.empty()) throw ValidationError("numeric column '" + spec.name + "' has no observed values");
      coding.edges = quantile_edges(std::move(values), spec.n_bins);
    }
    columns.push_back(std::move(coding));
  }
  return Encoder(std::move(columns));
}

inline EncodedDataset encode(const Dataset& data, const Encoder& encoder) {
  if (encoder.size() != data.schema.size())
    throw ValidationError("encoder has " + std::to_string(encoder.size()) + " columns, dataset has " +
                          std::to_string(data.schema.size()));
  for (std::size_t j = 0; j < data.schema.size(); ++j)
    if (encoder.column(j).kind != data.schema.column(j).kind)
      throw ValidationError("column '" + data.schema.column(j).name + "': kind differs from the encoder");

  EncodedDataset out{data.schema, encoder, data.rows.size(), {}};
  out.cells.reserve(data.rows.size() * data.schema.size());
  for (std::size_t i = 0; i < data.rows.size(); ++i) {
    const auto& row = data.rows[i];
    if (row.size() != data.schema.size()) throw ValidationError("row " + std::to_string(i) + " has the wrong width");
    for (std::size_t j = 0; j < row.size(); ++j) {
      try {
        out.cells.push_back(encoder.encode_cell(j, row[j]));
      } catch (const ValidationError& e) {
        throw ValidationError("row " + std::to_string(i) + ", column '" + data.schema.column(j).name + "': " + e.what());
      }
    }
  }
  return out;
}

/// Labels back from indices; a numeric bin becomes a uniform draw inside it.
/// Row i draws from its own stream item_seed(seed, i).
inline Dataset decode(const EncodedDataset& data, std::uint64_t seed) {
  Dataset out{data.schema, {}};
  out.rows.reserve(data.n_rows);
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    SplitMix64 rng(item_seed(seed, i));
    std::vector<Cell> row(data.n_cols());
    for (std::size_t j = 0; j < data.n_cols(); ++j) {
      const ColumnCoding& c = data.encoder.column(j);
      const auto index = data.at(i, j);
      if (index < 0 || static_cast<std::size_t>(index) >= c.cardinality())
        throw ValidationError("row " + std::to_string(i) + ", column " + std::to_string(j) + ": index " +
                              std::to_string(index) + " out of range");
      const auto k = static_cast<std::size_t>(index);
      if (c.missing_index() == k) continue;
      if (c.kind == ColumnKind::categorical) {
        row[j] = c.categories[k];
      } else if (c.edges.size() < 2) {
        row[j] = c.edges.front();
      } else {
        const double lo = c.edges[k];
        const double hi = c.edges[k + 1];
        double value = lo + rng.uniform() * (hi - lo);
        if (value >= hi) value = std::nextafter(hi, lo);
        row[j] = value;
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset transforms

/// Appends a categorical column "proxy" in {"0","1"}: "1" with probability p
/// for rows whose protected value equals reference_value, 1 - p otherwise.
inline Dataset inject_proxy(const Dataset& data, std::string_view protected_col, std::string_view reference_value,
                            double p, std::uint64_t seed) {
  if (data.schema.find("proxy")) throw ValidationError("dataset already has a column named 'proxy'");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("proxy probability must lie in [0, 1]");
  const std::size_t col = data.schema.index_of(protected_col);
  if (data.schema.column(col).kind != ColumnKind::categorical)
    throw ValidationError("proxy source column '" + std::string(protected_col) + "' must be categorical");
  const bool known = std::any_of(data.rows.begin(), data.rows.end(), [&](const auto& row) {
    const auto* label = std::get_if<std::string>(&row[col]);
    return label && *label == reference_value;
  });
  if (!known)
    throw ValidationError("value '" + std::string(reference_value) + "' never occurs in column '" +
                          std::string(protected_col) + "'");

  auto columns = data.schema.columns();
  columns.push_back(ColumnSpec{"proxy", ColumnKind::categorical, ColumnRole::plain, std::nullopt, 10});
  Dataset out{Schema(std::move(columns)), data.rows};
  SplitMix64 rng(seed);
  for (auto& row : out.rows) {
    const auto* label = std::get_if<std::string>(&row[col]);
    const double p_one = (label && *label == reference_value) ? p : 1.0 - p;
    row.emplace_back(std::string(rng.uniform() < p_one ? "1" : "0"));
  }
  return out;
}

/// Keeps rows whose label in `column` is one of `allowed`.
inline Dataset filter_rows(const Dataset& data, std::string_view column, const std::vector<std::string>& allowed) {
  const std::size_t col = data.schema.index_of(column);
  if (data.schema.column(col).kind != ColumnKind::categorical)
    throw ValidationError("row filter column '" + std::string(column) + "' must be categorical");
  Dataset out{data.schema, {}};
  for (const auto& row : data.rows) {
    const auto* label = std::get_if<std::string>(&row[col]);
    if (label && std::find(allowed.begin(), allowed.end(), *label) != allowed.end()) out.rows.push_back(row);
  }
  return out;
}

/// Same rows under a schema with identical column names and kinds (roles may differ).
inline Dataset with_schema(Dataset data, const Schema& schema) {
  if (schema.size() != data.schema.size()) throw ValidationError("schema width mismatch");
  for (std::size_t j = 0; j < schema.size(); ++j)
    if (schema.column(j).name != data.schema.column(j).name || schema.column(j).kind != data.schema.column(j).kind)
      throw ValidationError("schema mismatch at column '" + schema.column(j).name + "'");
  data.schema = schema;
  return data;
}

}  // namespace fairsynth
