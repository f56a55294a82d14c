#pragma once

// Downstream audit: logistic-regression income classifiers fitted on original
// and on synthetic data, both scored on the same original holdout, plus the
// per-group propensity comparison. The classifier has no fairness treatment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fairsynth/error.hpp"
#include "fairsynth/model.hpp"
#include "fairsynth/nn.hpp"
#include "fairsynth/random.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth {

/// Seeded shuffle split into (train, holdout); both keep file order.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("holdout fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  SplitMix64 rng(seed);
  shuffle(std::span<std::size_t>(idx), rng);
  const auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  std::vector<bool> in_holdout(data.size(), false);
  for (std::size_t i = 0; i < n_hold; ++i) in_holdout[idx[i]] = true;
  Dataset train{data.schema, {}}, holdout{data.schema, {}};
  for (std::size_t i = 0; i < data.size(); ++i) (in_holdout[i] ? holdout : train).rows.push_back(data.rows[i]);
  return {std::move(train), std::move(holdout)};
}

// ---------------------------------------------------------------------------
// Features

/// One-hot blocks for categorical columns, standardized values for numeric
/// ones; every non-target column is a predictor, protected columns included.
struct FeatureBlock {
  std::size_t column = 0;
  ColumnKind kind = ColumnKind::categorical;
  std::vector<std::string> categories;  // training categories; missing is "?"
  double mean = 0.0;
  double sd = 1.0;
  std::size_t offset = 0;
};

struct FeatureMap {
  std::vector<FeatureBlock> blocks;
  std::size_t dim = 0;
};

using SparseRow = std::vector<std::pair<std::size_t, double>>;

inline FeatureMap fit_feature_map(const Dataset& train) {
  if (train.rows.empty()) throw ValidationError("cannot build features from an empty training set");
  FeatureMap map;
  for (std::size_t j = 0; j < train.schema.size(); ++j) {
    if (j == train.schema.target()) continue;
    FeatureBlock block;
    block.column = j;
    block.kind = train.schema.column(j).kind;
    block.offset = map.dim;
    if (block.kind == ColumnKind::categorical) {
      std::unordered_map<std::string, bool> seen;
      for (const auto& row : train.rows) {
        const auto* label = std::get_if<std::string>(&row[j]);
        const std::string key = label ? *label : std::string(kMissingToken);
        if (seen.emplace(key, true).second) block.categories.push_back(key);
      }
      map.dim += block.categories.size();
    } else {
      double sum = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (const auto& row : train.rows)
        if (const auto* v = std::get_if<double>(&row[j])) {
          sum += *v;
          ++n;
        }
      block.mean = n ? sum / static_cast<double>(n) : 0.0;
      for (const auto& row : train.rows)
        if (const auto* v = std::get_if<double>(&row[j])) sq += (*v - block.mean) * (*v - block.mean);
      const double sd = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
      block.sd = sd > 0.0 ? sd : 1.0;
      map.dim += 1;
    }
    map.blocks.push_back(std::move(block));
  }
  return map;
}

/// Unseen categories map to an all-zero block; a missing numeric value maps to 0.
inline SparseRow featurize(const FeatureMap& map, const std::vector<Cell>& row) {
  SparseRow out;
  for (const auto& block : map.blocks) {
    const Cell& cell = row[block.column];
    if (block.kind == ColumnKind::categorical) {
      const auto* label = std::get_if<std::string>(&cell);
      const std::string_view key = label ? std::string_view(*label) : kMissingToken;
      const auto it = std::find(block.categories.begin(), block.categories.end(), key);
      if (it != block.categories.end())
        out.emplace_back(block.offset + static_cast<std::size_t>(it - block.categories.begin()), 1.0);
    } else if (const auto* v = std::get_if<double>(&cell)) {
      out.emplace_back(block.offset, (*v - block.mean) / block.sd);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegConfig {
  double learning_rate = 0.1;
  int epochs = 300;
  double l2 = 1e-4;
};

struct LogRegModel {
  FeatureMap features;
  std::vector<double> weights;
  double bias = 0.0;

  template <class F>
  void visit_tensors(F&& f) {
    f("weights", std::span<double>(weights));
    f("bias", std::span<double>(&bias, 1));
  }
  template <class F>
  void visit_tensors(F&& f) const {
    f("weights", std::span<const double>(weights));
    f("bias", std::span<const double>(&bias, 1));
  }
};

struct LabeledRows {
  std::vector<SparseRow> x;
  std::vector<double> y;  // 1 for the positive class
};

inline LabeledRows labeled_rows(const FeatureMap& map, const Dataset& data) {
  LabeledRows out;
  const std::size_t target = data.schema.target();
  const std::string& positive = data.schema.positive_class();
  for (const auto& row : data.rows) {
    out.x.push_back(featurize(map, row));
    const auto* y = std::get_if<std::string>(&row[target]);
    out.y.push_back(y && *y == positive ? 1.0 : 0.0);
  }
  return out;
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double linear_score(const LogRegModel& m, const SparseRow& x) {
  double z = m.bias;
  for (const auto& [i, v] : x) z += m.weights[i] * v;
  return z;
}

/// Mean log-loss + (l2 / 2) * |w|^2; gradient accumulated into *grad.
inline double logreg_loss(const LogRegModel& m, const LabeledRows& data, double l2, LogRegModel* grad = nullptr) {
  const double n = static_cast<double>(data.x.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < data.x.size(); ++r) {
    const double z = linear_score(m, data.x[r]);
    // log(1 + exp(-z)) for y = 1, log(1 + exp(z)) for y = 0, computed stably
    const double s = data.y[r] > 0.5 ? -z : z;
    loss += (s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)));
    if (grad) {
      const double g = (sigmoid(z) - data.y[r]) / n;
      grad->bias += g;
      for (const auto& [i, v] : data.x[r]) grad->weights[i] += g * v;
    }
  }
  loss /= n;
  double sq = 0.0;
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    sq += m.weights[i] * m.weights[i];
    if (grad) grad->weights[i] += l2 * m.weights[i];
  }
  return loss + 0.5 * l2 * sq;
}

/// Full-batch Adam on the regularized log-loss from zero weights; deterministic.
inline LogRegModel fit_logreg(const Dataset& train, const LogRegConfig& cfg = {}) {
  if (cfg.epochs < 1 || !(cfg.learning_rate > 0.0) || !(cfg.l2 >= 0.0))
    throw ValidationError("invalid logistic regression configuration");
  LogRegModel m;
  m.features = fit_feature_map(train);
  m.weights.assign(m.features.dim, 0.0);
  const LabeledRows data = labeled_rows(m.features, train);
  OptimizerState opt(AdamConfig{cfg.learning_rate}, parameter_count(m));
  const LogRegModel zero = zeros_like(m);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    LogRegModel grad = zero;
    const double loss = logreg_loss(m, data, cfg.l2, &grad);
    if (!std::isfinite(loss)) throw NumericError("logistic regression diverged at epoch " + std::to_string(epoch + 1));
    adam_step(m, grad, opt);
  }
  return m;
}

inline double predict_proba(const LogRegModel& m, const std::vector<Cell>& row) {
  return sigmoid(linear_score(m, featurize(m.features, row)));
}

// ---------------------------------------------------------------------------
// Metrics

/// Rank-statistic AUC with midranks for ties (the Mann-Whitney probability).
/// Empty when only one class is present.
inline std::optional<double> auc_score(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1) {
        positive_rank_sum += midrank;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

struct ClassificationMetrics {
  double accuracy = 0.0;
  std::optional<double> auc;
  double f1 = 0.0;
};

/// Accuracy and F1 at threshold 0.5 for the positive class, plus AUC.
inline ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels) {
  if (scores.empty()) throw ValidationError("cannot evaluate on an empty holdout");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= 0.5;
    const bool actual = labels[i] == 1;
    if (predicted == actual) ++correct;
    if (predicted && actual) ++tp;
    if (predicted && !actual) ++fp;
    if (!predicted && actual) ++fn;
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(scores.size());
  const std::size_t denom = 2 * tp + fp + fn;
  m.f1 = denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : 0.0;
  m.auc = auc_score(scores, labels);
  return m;
}

inline ClassificationMetrics evaluate(const LogRegModel& model, const Dataset& holdout) {
  std::vector<double> scores;
  std::vector<int> labels;
  const std::size_t target = holdout.schema.target();
  for (const auto& row : holdout.rows) {
    scores.push_back(predict_proba(model, row));
    const auto* y = std::get_if<std::string>(&row[target]);
    labels.push_back(y && *y == holdout.schema.positive_class() ? 1 : 0);
  }
  return classification_metrics(scores, labels);
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(a.size()) -
                             static_cast<double>(j) / static_cast<double>(b.size())));
  }
  return d;
}

inline constexpr std::size_t kPropensityBins = 50;

struct GroupPropensity {
  std::string label;
  std::size_t count = 0;
  double mean = 0.0;
  std::vector<std::size_t> histogram;  // kPropensityBins equal bins over [0, 1]
};

struct PropensityAudit {
  std::string column;
  std::vector<GroupPropensity> groups;  // descending count
  double mean_gap = 0.0;                // |mean difference| of the two largest groups
  double ks = 0.0;                      // KS statistic of the two largest groups
};

inline PropensityAudit propensity_audit(const LogRegModel& model, const Dataset& holdout, std::string_view column) {
  const std::size_t col = holdout.schema.index_of(column);
  if (holdout.schema.column(col).kind != ColumnKind::categorical)
    throw ValidationError("propensity audit column '" + std::string(column) + "' must be categorical");
  std::vector<std::string> labels;
  std::vector<std::vector<double>> scores;
  for (const auto& row : holdout.rows) {
    const auto* label = std::get_if<std::string>(&row[col]);
    if (!label) continue;
    auto it = std::find(labels.begin(), labels.end(), *label);
    if (it == labels.end()) {
      labels.push_back(*label);
      scores.emplace_back();
      it = labels.end() - 1;
    }
    scores[static_cast<std::size_t>(it - labels.begin())].push_back(predict_proba(model, row));
  }

  PropensityAudit out;
  out.column = std::string(column);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a].size() > scores[b].size();
  });
  for (std::size_t g : order) {
    GroupPropensity gp;
    gp.label = labels[g];
    gp.count = scores[g].size();
    gp.histogram.assign(kPropensityBins, 0);
    double sum = 0.0;
    for (double p : scores[g]) {
      sum += p;
      const auto bin = std::min(kPropensityBins - 1, static_cast<std::size_t>(p * static_cast<double>(kPropensityBins)));
      ++gp.histogram[bin];
    }
    gp.mean = sum / static_cast<double>(gp.count);
    out.groups.push_back(std::move(gp));
  }
  if (order.size() >= 2) {
    out.mean_gap = std::abs(out.groups[0].mean - out.groups[1].mean);
    out.ks = ks_statistic(scores[order[0]], scores[order[1]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Audit

struct AuditConfig {
  double holdout_fraction = 0.2;
  int reps = 5;
  std::uint64_t split_seed = 0;  // must match the split the generative model was trained on
  std::uint64_t seed = 0;        // synthetic sample streams
  LogRegConfig logreg;
  std::string protected_column;  // empty: first protected column of the schema
};

struct AuditRun {
  std::string source;  // "original" or "synthetic"
  int rep = 0;
  ClassificationMetrics metrics;
  PropensityAudit propensity;
};

struct SourceSummary {
  std::size_t runs = 0;
  double accuracy_mean = 0.0, auc_mean = 0.0, f1_mean = 0.0, mean_gap_mean = 0.0;
  double accuracy_median = 0.0, auc_median = 0.0, f1_median = 0.0, mean_gap_median = 0.0;
};

struct AuditReport {
  std::vector<AuditRun> runs;
  std::size_t train_rows = 0;
  std::size_t holdout_rows = 0;

  SourceSummary summary(std::string_view source) const {
    std::vector<double> acc, auc, f1, gap;
    for (const auto& r : runs) {
      if (r.source != source) continue;
      acc.push_back(r.metrics.accuracy);
      if (r.metrics.auc) auc.push_back(*r.metrics.auc);
      f1.push_back(r.metrics.f1);
      gap.push_back(r.propensity.mean_gap);
    }
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    auto median = [](std::vector<double> v) {
      if (v.empty()) return 0.0;
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    SourceSummary s;
    s.runs = acc.size();
    s.accuracy_mean = mean(acc);
    s.auc_mean = mean(auc);
    s.f1_mean = mean(f1);
    s.mean_gap_mean = mean(gap);
    s.accuracy_median = median(acc);
    s.auc_median = median(auc);
    s.f1_median = median(f1);
    s.mean_gap_median = median(gap);
    return s;
  }
};

/// Fits on the original train split (rep 0 only) and on synthesize(rep) for
/// every rep; all models are scored on the same holdout.
inline AuditReport run_audit(const Dataset& train, const Dataset& holdout,
                             const std::function<Dataset(int)>& synthesize, const AuditConfig& cfg) {
  if (cfg.reps < 1) throw ValidationError("audit needs at least one repetition");
  std::string column = cfg.protected_column;
  if (column.empty()) {
    if (holdout.schema.protected_columns().empty()) throw ValidationError("audit needs a protected column");
    column = holdout.schema.column(holdout.schema.protected_columns().front()).name;
  }
  AuditReport report;
  report.train_rows = train.size();
  report.holdout_rows = holdout.size();
  {
    const LogRegModel m = fit_logreg(train, cfg.logreg);
    report.runs.push_back({"original", 0, evaluate(m, holdout), propensity_audit(m, holdout, column)});
  }
  for (int rep = 0; rep < cfg.reps; ++rep) {
    const Dataset synthetic = synthesize(rep);
    const LogRegModel m = fit_logreg(synthetic, cfg.logreg);
    report.runs.push_back({"synthetic", rep, evaluate(m, holdout), propensity_audit(m, holdout, column)});
  }
  return report;
}

/// Re-derives the train/holdout split, then audits fresh synthetic samples
/// of train size drawn from `model`.
inline AuditReport audit(const Dataset& original, const GenerativeModel& model, const AuditConfig& cfg) {
  auto [train, holdout] = split_holdout(original, cfg.holdout_fraction, cfg.split_seed);
  const std::size_t n = train.size();
  auto synthesize = [&](int rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    return decode(sample(model, n, derive_seed(cfg.seed, SeedStream::sample, r)),
                  derive_seed(cfg.seed, SeedStream::decode, r));
  };
  return run_audit(train, holdout, synthesize, cfg);
}

inline nlohmann::ordered_json to_json(const AuditReport& r) {
  using J = nlohmann::ordered_json;
  J out;
  out["train_rows"] = r.train_rows;
  out["holdout_rows"] = r.holdout_rows;
  J table = J::object();
  for (const char* source : {"original", "synthetic"}) {
    const SourceSummary s = r.summary(source);
    table[source] = {{"runs", s.runs},
                     {"accuracy_mean", s.accuracy_mean},
                     {"auc_mean", s.auc_mean},
                     {"f1_mean", s.f1_mean},
                     {"accuracy_median", s.accuracy_median},
                     {"auc_median", s.auc_median},
                     {"f1_median", s.f1_median},
                     {"propensity_mean_gap_mean", s.mean_gap_mean},
                     {"propensity_mean_gap_median", s.mean_gap_median}};
  }
  out["summary"] = std::move(table);
  J runs = J::array();
  for (const auto& run : r.runs) {
    J groups = J::array();
    for (const auto& g : run.propensity.groups)
      groups.push_back({{"group", g.label}, {"count", g.count}, {"mean_propensity", g.mean}, {"histogram", g.histogram}});
    J auc = run.metrics.auc ? J(*run.metrics.auc) : J("undefined");
    runs.push_back({{"source", run.source},
                    {"rep", run.rep},
                    {"accuracy", run.metrics.accuracy},
                    {"auc", std::move(auc)},
                    {"f1", run.metrics.f1},
                    {"propensity",
                     {{"column", run.propensity.column},
                      {"groups", std::move(groups)},
                      {"mean_gap", run.propensity.mean_gap},
                      {"ks", run.propensity.ks}}}});
  }
  out["runs"] = std::move(runs);
  return out;
}

/// Long-form histograms: source,rep,group,bin_low,bin_high,count.
inline void write_propensity_csv(std::ostream& out, const AuditReport& r) {
  out << "source,rep,group,bin_low,bin_high,count\n";
  for (const auto& run : r.runs)
    for (const auto& g : run.propensity.groups)
      for (std::size_t b = 0; b < g.histogram.size(); ++b) {
        const double lo = static_cast<double>(b) / static_cast<double>(kPropensityBins);
        const double hi = static_cast<double>(b + 1) / static_cast<double>(kPropensityBins);
        out << run.source << ',' << run.rep << ',' << detail::quote_csv(g.label) << ',' << format_number(lo) << ','
            << format_number(hi) << ',' << g.histogram[b] << '\n';
      }
}

}  // namespace fairsynth
