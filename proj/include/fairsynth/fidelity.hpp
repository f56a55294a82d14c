#pragma once

// Representativeness of synthetic data: total-variation distance between
// binned marginals and Cramer's V drift between pairwise contingency tables.
// Numeric columns are always binned with the encoder fitted on the original data.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairsynth/error.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth {

inline constexpr double kDefaultDriftThreshold = 0.1;

/// 0.5 * sum |p_k - q_k|; the shorter vector is zero-padded (union support).
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  double sp = 0.0, sq = 0.0;
  for (double v : p) sp += v;
  for (double v : q) sq += v;
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw ValidationError("tv_distance needs normalized distributions");
  double total = 0.0;
  for (std::size_t k = 0; k < std::max(p.size(), q.size()); ++k) {
    const double a = k < p.size() ? p[k] : 0.0;
    const double b = k < q.size() ? q[k] : 0.0;
    total += std::abs(a - b);
  }
  return std::min(1.0, 0.5 * total);
}

/// Empirical distribution of encoded column j.
inline std::vector<double> marginal(const EncodedDataset& data, std::size_t j) {
  std::vector<double> p(data.encoder.cardinality(j), 0.0);
  if (data.n_rows == 0) return p;
  for (std::size_t i = 0; i < data.n_rows; ++i) p[static_cast<std::size_t>(data.at(i, j))] += 1.0;
  for (double& v : p) v /= static_cast<double>(data.n_rows);
  return p;
}

using ContingencyTable = std::vector<std::vector<double>>;

inline ContingencyTable contingency_table(const EncodedDataset& data, std::size_t a, std::size_t b) {
  ContingencyTable t(data.encoder.cardinality(a), std::vector<double>(data.encoder.cardinality(b), 0.0));
  for (std::size_t i = 0; i < data.n_rows; ++i)
    t[static_cast<std::size_t>(data.at(i, a))][static_cast<std::size_t>(data.at(i, b))] += 1.0;
  return t;
}

struct CramersV {
  double value = 0.0;
  bool degenerate = false;  // fewer than two observed categories on a side
};

/// V = sqrt(chi2 / (n * (min(r, c) - 1))) over the observed (non-empty) rows
/// and columns of the table, clamped to [0, 1].
inline CramersV cramers_v(const ContingencyTable& table) {
  const std::size_t R = table.size();
  const std::size_t C = R ? table[0].size() : 0;
  std::vector<double> row_sum(R, 0.0), col_sum(C, 0.0);
  double n = 0.0;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      row_sum[r] += table[r][c];
      col_sum[c] += table[r][c];
      n += table[r][c];
    }
  const auto observed_rows = static_cast<std::size_t>(std::count_if(row_sum.begin(), row_sum.end(), [](double s) { return s > 0; }));
  const auto observed_cols = static_cast<std::size_t>(std::count_if(col_sum.begin(), col_sum.end(), [](double s) { return s > 0; }));
  const std::size_t k = std::min(observed_rows, observed_cols);
  if (n <= 0.0 || k < 2) return {0.0, true};

  double chi2 = 0.0;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) {
      const double expected = row_sum[r] * col_sum[c] / n;
      if (expected <= 0.0) continue;
      const double d = table[r][c] - expected;
      chi2 += d * d / expected;
    }
  const double v = std::sqrt(chi2 / (n * static_cast<double>(k - 1)));
  return {std::clamp(v, 0.0, 1.0), false};
}

inline CramersV cramers_v(const EncodedDataset& data, std::size_t a, std::size_t b) {
  return cramers_v(contingency_table(data, a, b));
}

inline CramersV cramers_v(const Dataset& data, std::string_view a, std::string_view b, const Encoder& encoder) {
  const EncodedDataset encoded = encode(data, encoder);
  return cramers_v(encoded, data.schema.index_of(a), data.schema.index_of(b));
}

struct PairDrift {
  std::string a;
  std::string b;
  double v_original = 0.0;
  double v_synthetic = 0.0;
  double abs_delta = 0.0;
  bool degenerate = false;
  bool flagged = false;         // abs_delta > drift threshold
  bool expected_drift = false;  // target paired with a protected or declared proxy column
};

struct FidelityReport {
  std::vector<std::string> columns;
  std::vector<double> tv;  // per column
  std::vector<PairDrift> pairs;
  double drift_threshold = kDefaultDriftThreshold;

  const PairDrift& pair(std::string_view a, std::string_view b) const {
    for (const auto& p : pairs)
      if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return p;
    throw ValidationError("no pair " + std::string(a) + " x " + std::string(b) + " in the report");
  }

  double tv_of(std::string_view column) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == column) return tv[j];
    throw ValidationError("no column '" + std::string(column) + "' in the report");
  }
};

/// Compares marginals and pairwise association of synthetic data with the
/// original. Pairs of the target with a protected column or with one of
/// `proxies` are annotated as expected to drift.
inline FidelityReport fidelity_report(const Dataset& original, const Dataset& synthetic, const Encoder& encoder,
                                      const Schema& schema, const std::vector<std::string>& proxies = {},
                                      double drift_threshold = kDefaultDriftThreshold) {
  auto same_columns = [&](const Schema& s) {
    if (s.size() != schema.size()) return false;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (s.column(j).name != schema.column(j).name || s.column(j).kind != schema.column(j).kind) return false;
    return true;
  };
  if (!same_columns(original.schema) || !same_columns(synthetic.schema))
    throw ValidationError("original and synthetic data must share the schema");

  const EncodedDataset orig = encode(original, encoder);
  const EncodedDataset synth = encode(synthetic, encoder);

  FidelityReport report;
  report.drift_threshold = drift_threshold;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    report.columns.push_back(schema.column(j).name);
    report.tv.push_back(synth.n_rows ? tv_distance(marginal(orig, j), marginal(synth, j)) : 1.0);
  }

  auto drift_prone = [&](std::size_t j) {
    if (schema.column(j).role == ColumnRole::protected_attribute) return true;
    return std::find(proxies.begin(), proxies.end(), schema.column(j).name) != proxies.end();
  };
  const std::size_t target = schema.target();
  for (std::size_t a = 0; a < schema.size(); ++a)
    for (std::size_t b = a + 1; b < schema.size(); ++b) {
      PairDrift p;
      p.a = schema.column(a).name;
      p.b = schema.column(b).name;
      const CramersV vo = cramers_v(orig, a, b);
      const CramersV vs = cramers_v(synth, a, b);
      p.v_original = vo.value;
      p.v_synthetic = vs.value;
      p.degenerate = vo.degenerate || vs.degenerate;
      p.abs_delta = std::abs(vo.value - vs.value);
      p.flagged = p.abs_delta > drift_threshold;
      p.expected_drift = (a == target && drift_prone(b)) || (b == target && drift_prone(a));
      report.pairs.push_back(std::move(p));
    }
  return report;
}

inline nlohmann::ordered_json to_json(const FidelityReport& r) {
  nlohmann::ordered_json out;
  out["drift_threshold"] = r.drift_threshold;
  nlohmann::ordered_json tv = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < r.columns.size(); ++j) tv.push_back({{"column", r.columns[j]}, {"tv", r.tv[j]}});
  out["univariate"] = std::move(tv);
  nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"a", p.a},
                     {"b", p.b},
                     {"v_original", p.v_original},
                     {"v_synthetic", p.v_synthetic},
                     {"abs_delta", p.abs_delta},
                     {"degenerate", p.degenerate},
                     {"flagged", p.flagged},
                     {"expected_drift", p.expected_drift}});
  }
  out["bivariate"] = std::move(pairs);
  return out;
}

inline void write_tv_csv(std::ostream& out, const FidelityReport& r) {
  out << "column,tv\n";
  for (std::size_t j = 0; j < r.columns.size(); ++j)
    out << detail::quote_csv(r.columns[j]) << ',' << format_number(r.tv[j]) << '\n';
}

/// Long-form pairwise V table (both orientations, for heat-map rendering).
inline void write_cramers_v_csv(std::ostream& out, const FidelityReport& r) {
  out << "column_a,column_b,v_original,v_synthetic,abs_delta,flagged,expected_drift\n";
  auto line = [&](const std::string& a, const std::string& b, const PairDrift& p) {
    out << detail::quote_csv(a) << ',' << detail::quote_csv(b) << ',' << format_number(p.v_original) << ','
        << format_number(p.v_synthetic) << ',' << format_number(p.abs_delta) << ',' << (p.flagged ? 1 : 0) << ','
        << (p.expected_drift ? 1 : 0) << '\n';
  };
  for (const auto& p : r.pairs) {
    line(p.a, p.b, p);
    line(p.b, p.a, p);
  }
}

}  // namespace fairsynth
