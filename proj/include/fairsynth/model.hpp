#pragma once

// Autoregressive generative model over encoded columns, trained on
//
//   L = L_acc + lambda * L_fair
//
// L_acc is the mean teacher-forced negative log-likelihood over rows and
// columns. L_fair is the mean squared pairwise difference between the group
// means of P(target = positive | other columns), with groups formed by the
// joint values of all protected columns and evaluated on the real batch rows.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fairsynth/error.hpp"
#include "fairsynth/nn.hpp"
#include "fairsynth/random.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth {

struct TrainConfig {
  double lambda = 0.0;
  int epochs = 50;
  int batch_size = 512;
  double learning_rate = 1e-3;
  int hidden_dim = 32;
  std::uint64_t seed = 0;
  int min_group_count = 8;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite value >= 0");
    if (epochs < 1) throw ValidationError("epochs must be positive");
    if (batch_size < 1) throw ValidationError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (hidden_dim < 1) throw ValidationError("hidden_dim must be positive");
    if (min_group_count < 1) throw ValidationError("min_group_count must be positive");
  }
};

using Head = std::variant<ZeroInputHead, DenseHead>;

/// Per-position heads; heads[k] generates column generation_order()[k].
struct ModelParams {
  std::vector<Head> heads;

  template <class F>
  void visit_tensors(F&& f) {
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const std::string prefix = "head" + std::to_string(k) + ".";
      std::visit([&](auto& h) { h.visit_tensors([&](std::string_view n, std::span<double> t) { f(prefix + std::string(n), t); }); },
                 heads[k]);
    }
  }
  template <class F>
  void visit_tensors(F&& f) const {
    for (std::size_t k = 0; k < heads.size(); ++k) {
      const std::string prefix = "head" + std::to_string(k) + ".";
      std::visit(
          [&](const auto& h) {
            h.visit_tensors([&](std::string_view n, std::span<const double> t) { f(prefix + std::string(n), t); });
          },
          heads[k]);
    }
  }

  bool operator==(const ModelParams&) const = default;
};

/// Column layout in generation order, derived from schema and encoder.
struct ModelLayout {
  std::vector<std::size_t> order;        // schema column at position k
  std::vector<std::size_t> cardinality;  // K at position k
  std::vector<std::size_t> offset;       // one-hot offset of position k in later heads' inputs
  std::size_t positive_index = 0;        // category index of the positive target class

  ModelLayout() = default;
  ModelLayout(const Schema& schema, const Encoder& encoder) : order(schema.generation_order()) {
    if (encoder.size() != schema.size()) throw ValidationError("encoder does not match the schema");
    std::size_t running = 0;
    for (std::size_t j : order) {
      cardinality.push_back(encoder.cardinality(j));
      offset.push_back(running);
      running += encoder.cardinality(j);
    }
    const auto pos = encoder.category_index(schema.target(), schema.positive_class());
    if (!pos)
      throw ValidationError("positive class '" + schema.positive_class() + "' does not occur in target column '" +
                            schema.column(schema.target()).name + "'");
    positive_index = *pos;
  }

  std::size_t positions() const { return order.size(); }
  std::size_t input_dim(std::size_t k) const { return offset[k]; }
};

struct GenerativeModel {
  Schema schema;
  Encoder encoder;
  ModelLayout layout;
  ModelParams params;
};

inline GenerativeModel init_model(const Encoder& encoder, const Schema& schema, const TrainConfig& cfg) {
  cfg.validate();
  GenerativeModel m{schema, encoder, ModelLayout(schema, encoder), {}};
  SplitMix64 rng(cfg.seed);
  for (std::size_t k = 0; k < m.layout.positions(); ++k) {
    const std::size_t K = m.layout.cardinality[k];
    if (k == 0) {
      m.params.heads.emplace_back(ZeroInputHead{std::vector<double>(K, 0.0)});
    } else {
      m.params.heads.emplace_back(
          make_dense_head(m.layout.input_dim(k), static_cast<std::size_t>(cfg.hidden_dim), K, rng));
    }
  }
  return m;
}

/// Group id per dataset row from the joint values of all protected columns
/// (mixed radix over their category indices); -1 when a protected value is
/// missing or there are no protected columns.
struct GroupAssignment {
  std::vector<std::int32_t> ids;
  std::size_t n_groups = 0;
};

inline GroupAssignment assign_groups(const EncodedDataset& data) {
  GroupAssignment out;
  const auto& prot = data.schema.protected_columns();
  out.ids.assign(data.n_rows, -1);
  if (prot.empty()) return out;
  std::size_t n = 1;
  for (std::size_t j : prot) n *= data.encoder.cardinality(j);
  out.n_groups = n;
  for (std::size_t i = 0; i < data.n_rows; ++i) {
    std::int64_t id = 0;
    bool observed = true;
    for (std::size_t j : prot) {
      const auto k = data.at(i, j);
      if (data.encoder.column(j).missing_index() == static_cast<std::size_t>(k)) observed = false;
      id = id * static_cast<std::int64_t>(data.encoder.cardinality(j)) + k;
    }
    if (observed) out.ids[i] = static_cast<std::int32_t>(id);
  }
  return out;
}

/// Mean over unordered pairs of squared differences of group means; 0 for fewer than two groups.
inline double parity_penalty(std::span<const double> group_means) {
  const std::size_t G = group_means.size();
  if (G < 2) return 0.0;
  double total = 0.0;
  for (std::size_t a = 0; a < G; ++a)
    for (std::size_t b = a + 1; b < G; ++b) {
      const double d = group_means[a] - group_means[b];
      total += d * d;
    }
  return total / static_cast<double>(G * (G - 1) / 2);
}

struct BatchLoss {
  double accuracy = 0.0;
  double fairness = 0.0;
  double combined = 0.0;
  std::size_t groups_used = 0;
  std::size_t groups_skipped = 0;  // present in the batch but below min_group_count
};

namespace detail {

inline HeadActivation forward_position(const ModelParams& params, std::size_t k, std::span<const std::size_t> active) {
  if (k == 0) return forward(std::get<ZeroInputHead>(params.heads[0]));
  return forward_active(std::get<DenseHead>(params.heads[k]), active);
}

inline void backward_position(const ModelParams& params, std::size_t k, const HeadActivation& act,
                              std::span<const double> dlogits, std::span<const std::size_t> active, ModelParams& grad) {
  if (k == 0) {
    backward(std::get<ZeroInputHead>(params.heads[0]), dlogits, std::get<ZeroInputHead>(grad.heads[0]));
  } else {
    backward_active(std::get<DenseHead>(params.heads[k]), act, dlogits, active, std::get<DenseHead>(grad.heads[k]));
  }
}

}  // namespace detail

/// Loss (and optionally its exact gradient, accumulated into *grad) over the
/// given rows. `groups` is indexed by dataset row. With lambda == 0 the group
/// assignment only feeds the reported fairness value, never the gradient.
inline BatchLoss combined_loss(const GenerativeModel& m, const EncodedDataset& data, std::span<const std::size_t> rows,
                               std::span<const std::int32_t> groups, double lambda, int min_group_count,
                               ModelParams* grad = nullptr) {
  const ModelLayout& L = m.layout;
  const std::size_t C = L.positions();
  const std::size_t B = rows.size();
  BatchLoss out;
  if (B == 0) return out;
  const double scale = 1.0 / static_cast<double>(B * C);
  const std::size_t last = C - 1;

  std::vector<HeadActivation> target_acts(B);
  std::vector<std::size_t> active;
  active.reserve(C);
  std::vector<double> dlogits;
  double nll = 0.0;

  for (std::size_t b = 0; b < B; ++b) {
    const auto row = data.row(rows[b]);
    active.clear();
    for (std::size_t k = 0; k < C; ++k) {
      const auto y = static_cast<std::size_t>(row[L.order[k]]);
      HeadActivation act = detail::forward_position(m.params, k, active);
      nll -= act.log_probs[y];
      if (k == last) {
        target_acts[b] = std::move(act);
      } else {
        if (grad) {
          dlogits.assign(act.probs.begin(), act.probs.end());
          dlogits[y] -= 1.0;
          for (double& g : dlogits) g *= scale;
          detail::backward_position(m.params, k, act, dlogits, active, *grad);
        }
        active.push_back(L.offset[k] + y);
      }
    }
  }
  out.accuracy = nll * scale;

  // group means of the positive-class conditional
  const std::size_t pos = L.positive_index;
  std::vector<std::size_t> slot_of_group;
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  std::vector<std::int32_t> slot_of_row(B, -1);
  {
    std::vector<std::int32_t> seen;
    for (std::size_t b = 0; b < B; ++b) {
      const std::int32_t g = groups.empty() ? -1 : groups[rows[b]];
      if (g < 0) continue;
      auto it = std::find(seen.begin(), seen.end(), g);
      std::size_t slot;
      if (it == seen.end()) {
        seen.push_back(g);
        sums.push_back(0.0);
        counts.push_back(0);
        slot = seen.size() - 1;
      } else {
        slot = static_cast<std::size_t>(it - seen.begin());
      }
      sums[slot] += target_acts[b].probs[pos];
      ++counts[slot];
      slot_of_row[b] = static_cast<std::int32_t>(slot);
    }
  }
  std::vector<double> means;
  std::vector<std::int32_t> used_index(sums.size(), -1);
  for (std::size_t s = 0; s < sums.size(); ++s) {
    if (counts[s] >= static_cast<std::size_t>(min_group_count)) {
      used_index[s] = static_cast<std::int32_t>(means.size());
      means.push_back(sums[s] / static_cast<double>(counts[s]));
    } else {
      ++out.groups_skipped;
    }
  }
  out.groups_used = means.size();
  out.fairness = parity_penalty(means);
  out.combined = out.accuracy + lambda * out.fairness;

  if (!grad) return out;

  // dL_fair/dmu_g = (2 / P) * (G * mu_g - sum_h mu_h), P = G(G-1)/2 pairs
  std::vector<double> dmean(means.size(), 0.0);
  if (lambda != 0.0 && means.size() >= 2) {
    const double G = static_cast<double>(means.size());
    const double pairs = G * (G - 1.0) / 2.0;
    const double total = std::accumulate(means.begin(), means.end(), 0.0);
    for (std::size_t g = 0; g < means.size(); ++g) dmean[g] = 2.0 / pairs * (G * means[g] - total);
  }

  for (std::size_t b = 0; b < B; ++b) {
    const auto row = data.row(rows[b]);
    active.clear();
    for (std::size_t k = 0; k < last; ++k) active.push_back(L.offset[k] + static_cast<std::size_t>(row[L.order[k]]));
    const HeadActivation& act = target_acts[b];
    const auto y = static_cast<std::size_t>(row[L.order[last]]);
    dlogits.assign(act.probs.begin(), act.probs.end());
    dlogits[y] -= 1.0;
    for (double& g : dlogits) g *= scale;
    if (lambda != 0.0 && slot_of_row[b] >= 0) {
      const std::int32_t u = used_index[static_cast<std::size_t>(slot_of_row[b])];
      if (u >= 0) {
        const auto us = static_cast<std::size_t>(u);
        // d p_pos / d logit_k = p_pos * (delta_{k,pos} - p_k)
        const double coef = lambda * dmean[us] / static_cast<double>(counts[static_cast<std::size_t>(slot_of_row[b])]);
        const double p_pos = act.probs[pos];
        for (std::size_t k = 0; k < dlogits.size(); ++k)
          dlogits[k] += coef * p_pos * ((k == pos ? 1.0 : 0.0) - act.probs[k]);
      }
    }
    detail::backward_position(m.params, last, act, dlogits, active, *grad);
  }
  return out;
}

inline std::vector<std::size_t> all_rows(const EncodedDataset& data) {
  std::vector<std::size_t> rows(data.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

/// Mean teacher-forced NLL over rows and columns.
inline double accuracy_loss(const GenerativeModel& m, const EncodedDataset& batch) {
  if (batch.n_rows == 0) throw ValidationError("accuracy_loss needs a non-empty batch");
  return combined_loss(m, batch, all_rows(batch), {}, 0.0, 1).accuracy;
}

inline double fairness_loss(const GenerativeModel& m, const EncodedDataset& batch, const GroupAssignment& groups,
                            const TrainConfig& cfg) {
  return combined_loss(m, batch, all_rows(batch), groups.ids, cfg.lambda, cfg.min_group_count).fairness;
}

/// Distribution of the column at generation position k given a full row
/// (only the columns at positions < k are read).
inline std::vector<double> conditional_probs(const GenerativeModel& m, std::span<const std::int32_t> row,
                                             std::size_t k) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < k; ++i) active.push_back(m.layout.offset[i] + static_cast<std::size_t>(row[m.layout.order[i]]));
  return detail::forward_position(m.params, k, active).probs;
}

/// P(target = positive class | all non-target cells) per row.
inline std::vector<double> conditional_target_probs(const GenerativeModel& m, const EncodedDataset& rows) {
  std::vector<double> out;
  out.reserve(rows.n_rows);
  const std::size_t last = m.layout.positions() - 1;
  for (std::size_t i = 0; i < rows.n_rows; ++i) out.push_back(conditional_probs(m, rows.row(i), last)[m.layout.positive_index]);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  int epoch = 0;
  double accuracy_loss = 0.0;
  double fairness_loss = 0.0;
  double combined_loss = 0.0;
  std::size_t skipped_groups = 0;  // summed over the epoch's batches
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  GenerativeModel model;
  TrainHistory history;
};

/// Minibatch Adam on L_acc + lambda * L_fair with a fresh seeded shuffle each epoch.
inline TrainResult train(GenerativeModel m, const EncodedDataset& data, const GroupAssignment& groups,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (!(data.schema == m.schema) || !(data.encoder == m.encoder))
    throw ValidationError("training data was not encoded with the model's schema and encoder");
  if (data.n_rows == 0) throw ValidationError("cannot train on an empty dataset");
  if (groups.ids.size() != data.n_rows) throw ValidationError("group assignment does not cover the dataset");

  TrainHistory history;
  OptimizerState opt(AdamConfig{cfg.learning_rate}, parameter_count(m.params));
  std::vector<std::size_t> order = all_rows(data);
  const ModelParams zero = zeros_like(m.params);
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(item_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::size_t>(order), rng);

    EpochStats stats;
    stats.epoch = epoch + 1;
    std::size_t n_batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      ModelParams grad = zero;
      const BatchLoss loss = combined_loss(m, data, batch, groups.ids, cfg.lambda, cfg.min_group_count, &grad);
      if (!std::isfinite(loss.combined))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(n_batches + 1) + "; lower the learning rate or lambda");
      try {
        adam_step(m.params, grad, opt);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(n_batches + 1) + ": " +
                           e.what());
      }
      stats.accuracy_loss += loss.accuracy;
      stats.fairness_loss += loss.fairness;
      stats.combined_loss += loss.combined;
      stats.skipped_groups += loss.groups_skipped;
      ++n_batches;
    }
    stats.accuracy_loss /= static_cast<double>(n_batches);
    stats.fairness_loss /= static_cast<double>(n_batches);
    stats.combined_loss /= static_cast<double>(n_batches);
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.epochs.push_back(stats);
  }
  return {std::move(m), std::move(history)};
}

inline TrainResult train(GenerativeModel m, const EncodedDataset& data, const TrainConfig& cfg) {
  const GroupAssignment groups = assign_groups(data);
  return train(std::move(m), data, groups, cfg);
}

// ---------------------------------------------------------------------------
// Sampling

/// Ancestral sampling in generation order; row i draws from its own stream
/// item_seed(seed, i), so output is independent of how rows are scheduled.
inline EncodedDataset sample(const GenerativeModel& m, std::size_t n, std::uint64_t seed) {
  const ModelLayout& L = m.layout;
  EncodedDataset out{m.schema, m.encoder, n, std::vector<std::int32_t>(n * m.schema.size(), 0)};
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    SplitMix64 rng(item_seed(seed, i));
    std::int32_t* row = out.cells.data() + i * m.schema.size();
    active.clear();
    for (std::size_t k = 0; k < L.positions(); ++k) {
      const HeadActivation act = detail::forward_position(m.params, k, active);
      const std::size_t y = draw_categorical(act.probs, rng.uniform());
      row[L.order[k]] = static_cast<std::int32_t>(y);
      active.push_back(L.offset[k] + y);
    }
  }
  return out;
}

}  // namespace fairsynth
