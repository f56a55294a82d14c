#pragma once

// Group positive rates over the joint values of protected columns, parity
// difference and disparate impact (min rate / max rate, four-fifths rule).

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsynth/error.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth {

inline constexpr double kFourFifths = 0.8;

/// (column name, category label) for every protected column, in schema order.
using GroupKey = std::vector<std::pair<std::string, std::string>>;

struct GroupStat {
  std::size_t count = 0;
  std::size_t positives = 0;
  double positive_rate = 0.0;
};

using GroupRates = std::map<GroupKey, GroupStat>;

inline std::string group_label(const GroupKey& key) {
  std::string out;
  for (const auto& [column, value] : key) {
    if (!out.empty()) out += " & ";
    out += column + "=" + value;
  }
  return out;
}

/// Positive-class rate of the target per observed combination of `columns`.
/// Rows with a missing value in any of those columns are left out; empty
/// combinations never appear.
inline GroupRates group_positive_rates(const Dataset& data, const std::vector<std::size_t>& columns) {
  if (columns.empty()) throw ValidationError("group rates need at least one protected column");
  const std::size_t target = data.schema.target();
  const std::string& positive = data.schema.positive_class();
  GroupRates rates;
  GroupKey key(columns.size());
  for (const auto& row : data.rows) {
    bool observed = true;
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto* label = std::get_if<std::string>(&row[columns[c]]);
      if (!label) {
        observed = false;
        break;
      }
      key[c] = {data.schema.column(columns[c]).name, *label};
    }
    if (!observed) continue;
    GroupStat& stat = rates[key];
    ++stat.count;
    const auto* y = std::get_if<std::string>(&row[target]);
    if (y && *y == positive) ++stat.positives;
  }
  for (auto& [key, stat] : rates) stat.positive_rate = static_cast<double>(stat.positives) / static_cast<double>(stat.count);
  return rates;
}

/// Joint groups over all protected columns of the schema.
inline GroupRates group_positive_rates(const Dataset& data) {
  if (data.schema.protected_columns().empty()) throw ValidationError("schema has no protected columns");
  return group_positive_rates(data, data.schema.protected_columns());
}

/// Max rate minus min rate.
inline double parity_difference(const GroupRates& rates) {
  if (rates.size() < 2) throw ValidationError("parity difference needs at least two groups");
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end(), [](const auto& a, const auto& b) {
    return a.second.positive_rate < b.second.positive_rate;
  });
  return hi->second.positive_rate - lo->second.positive_rate;
}

struct DisparateImpact {
  std::optional<double> value;  // empty when every group has rate 0
  bool four_fifths_pass = false;
};

/// min rate / max rate; passes the four-fifths rule at >= 0.8.
inline DisparateImpact disparate_impact(const GroupRates& rates) {
  if (rates.size() < 2) throw ValidationError("disparate impact needs at least two groups");
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& [key, stat] : rates) {
    lo = std::min(lo, stat.positive_rate);
    hi = std::max(hi, stat.positive_rate);
  }
  if (hi <= 0.0) return {};
  const double di = lo / hi;
  return {di, di >= kFourFifths};
}

struct FairnessReport {
  GroupRates rates;
  double parity_difference = 0.0;
  DisparateImpact disparate_impact;
};

inline FairnessReport fairness_report(const Dataset& data) {
  FairnessReport r;
  r.rates = group_positive_rates(data);
  r.parity_difference = parity_difference(r.rates);
  r.disparate_impact = disparate_impact(r.rates);
  return r;
}

inline nlohmann::ordered_json to_json(const FairnessReport& r) {
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& [key, stat] : r.rates) {
    nlohmann::ordered_json g;
    nlohmann::ordered_json k = nlohmann::ordered_json::object();
    for (const auto& [column, value] : key) k[column] = value;
    g["group"] = std::move(k);
    g["count"] = stat.count;
    g["positives"] = stat.positives;
    g["positive_rate"] = stat.positive_rate;
    groups.push_back(std::move(g));
  }
  nlohmann::ordered_json out;
  out["groups"] = std::move(groups);
  out["parity_difference"] = r.parity_difference;
  if (r.disparate_impact.value) {
    out["disparate_impact"] = *r.disparate_impact.value;
  } else {
    out["disparate_impact"] = "undefined";
  }
  out["four_fifths_pass"] = r.disparate_impact.four_fifths_pass;
  return out;
}

}  // namespace fairsynth
