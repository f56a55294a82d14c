#pragma once

// Toy schemas and datasets shared by the unit tests and the acceptance run.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairsynth/random.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth::testing {

inline ColumnSpec categorical(std::string name, ColumnRole role = ColumnRole::plain) {
  ColumnSpec c;
  c.name = std::move(name);
  c.role = role;
  return c;
}

inline ColumnSpec numeric(std::string name, int n_bins = 10) {
  ColumnSpec c;
  c.name = std::move(name);
  c.kind = ColumnKind::numeric;
  c.n_bins = n_bins;
  return c;
}

inline ColumnSpec target(std::string name, std::string positive) {
  ColumnSpec c = categorical(std::move(name), ColumnRole::target);
  c.positive_class = std::move(positive);
  return c;
}

/// g (protected, a/b), x (plain, p/q/r), v (numeric, 3 bins), y (target, "1").
inline Schema toy_schema() {
  return Schema({categorical("g", ColumnRole::protected_attribute), categorical("x"), numeric("v", 3), target("y", "1")});
}

/// Rows of toy_schema() where y = 1 is far more likely for g = "a".
inline Dataset toy_data(std::size_t n, std::uint64_t seed, double rate_a = 0.7, double rate_b = 0.2) {
  Dataset d{toy_schema(), {}};
  SplitMix64 rng(seed);
  static const char* xs[] = {"p", "q", "r"};
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = rng.uniform() < 0.5;
    const std::string x = xs[rng.below(3)];
    const double v = 10.0 * rng.uniform() + (x == "p" ? 5.0 : 0.0);
    const double rate = a ? rate_a : rate_b;
    d.rows.push_back({std::string(a ? "a" : "b"), x, v, std::string(rng.uniform() < rate ? "1" : "0")});
  }
  return d;
}

/// Every (sex, race) cell listed with its size and number of positives.
struct GroupCell {
  std::string sex;
  std::string race;
  std::size_t count;
  std::size_t positives;
};

inline Dataset dataset_from_cells(const std::vector<GroupCell>& cells) {
  Dataset d{Schema({categorical("sex", ColumnRole::protected_attribute),
                    categorical("race", ColumnRole::protected_attribute), target("y", "1")}),
            {}};
  for (const auto& c : cells)
    for (std::size_t i = 0; i < c.count; ++i) d.rows.push_back({c.sex, c.race, std::string(i < c.positives ? "1" : "0")});
  return d;
}

/// Fair on sex alone and on race alone, unfair on the joint groups:
/// rates 0.5/0.3/0.3/0.5 for (M,W)/(M,B)/(F,W)/(F,B) with equal cell sizes.
inline Dataset gerrymandered_dataset() {
  return dataset_from_cells({{"M", "W", 100, 50}, {"M", "B", 100, 30}, {"F", "W", 100, 30}, {"F", "B", 100, 50}});
}

inline Dataset with_roles(const Dataset& data, std::initializer_list<std::pair<const char*, ColumnRole>> roles) {
  auto columns = data.schema.columns();
  for (const auto& [name, role] : roles) columns[data.schema.index_of(name)].role = role;
  return with_schema(data, Schema(std::move(columns)));
}

}  // namespace fairsynth::testing
