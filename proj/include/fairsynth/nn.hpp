#pragma once

// Dense softmax heads with hand-written reverse-mode gradients, an Adam
// optimizer over any parameter set, and a central-difference gradient check.
//
// A parameter set is any type with visit_tensors(f) overloads (const and
// non-const) that call f(name, span) for every tensor in a fixed order.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fairsynth/error.hpp"
#include "fairsynth/random.hpp"

namespace fairsynth {

template <class P>
concept ParameterSet = requires(P& p, const P& cp) {
  p.visit_tensors([](std::string_view, std::span<double>) {});
  cp.visit_tensors([](std::string_view, std::span<const double>) {});
};

/// Stable log-softmax (max subtracted before exponentiating).
inline void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double log_total = peak + std::log(total);
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - log_total;
}

inline void softmax(std::span<const double> logits, std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  for (double& p : out) p /= total;
}

/// Head for the first generated column: a free logit vector.
struct ZeroInputHead {
  std::vector<double> logits;

  std::size_t output_dim() const { return logits.size(); }

  template <class F>
  void visit_tensors(F&& f) {
    f("logits", std::span<double>(logits));
  }
  template <class F>
  void visit_tensors(F&& f) const {
    f("logits", std::span<const double>(logits));
  }

  bool operator==(const ZeroInputHead&) const = default;
};

/// probs = softmax(W2 * tanh(W1 * x + b1) + b2).
///
/// w1 is stored input-major (w1[d * H + h] = W1[h][d]) so a one-hot input
/// selects a contiguous H-vector.
struct DenseHead {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::vector<double> w1;  // [D_in x H], input-major
  std::vector<double> b1;  // [H]
  std::vector<double> w2;  // [K x H], row-major
  std::vector<double> b2;  // [K]

  DenseHead() = default;
  DenseHead(std::size_t d_in, std::size_t hidden, std::size_t k)
      : input_dim(d_in), hidden_dim(hidden), output_dim(k),
        w1(d_in * hidden, 0.0), b1(hidden, 0.0), w2(k * hidden, 0.0), b2(k, 0.0) {}

  double& weight1(std::size_t h, std::size_t d) { return w1[d * hidden_dim + h]; }
  double weight1(std::size_t h, std::size_t d) const { return w1[d * hidden_dim + h]; }

  template <class F>
  void visit_tensors(F&& f) {
    f("w1", std::span<double>(w1));
    f("b1", std::span<double>(b1));
    f("w2", std::span<double>(w2));
    f("b2", std::span<double>(b2));
  }
  template <class F>
  void visit_tensors(F&& f) const {
    f("w1", std::span<const double>(w1));
    f("b1", std::span<const double>(b1));
    f("w2", std::span<const double>(w2));
    f("b2", std::span<const double>(b2));
  }

  bool operator==(const DenseHead&) const = default;
};

/// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)); biases zero.
inline DenseHead make_dense_head(std::size_t d_in, std::size_t hidden, std::size_t k, SplitMix64& rng) {
  DenseHead head(d_in, hidden, k);
  const double s1 = std::sqrt(6.0 / static_cast<double>(d_in + hidden));
  for (double& w : head.w1) w = (2.0 * rng.uniform() - 1.0) * s1;
  const double s2 = std::sqrt(6.0 / static_cast<double>(hidden + k));
  for (double& w : head.w2) w = (2.0 * rng.uniform() - 1.0) * s2;
  return head;
}

/// Forward activations kept for the backward pass.
struct HeadActivation {
  std::vector<double> hidden;  // tanh output, empty for a ZeroInputHead
  std::vector<double> log_probs;
  std::vector<double> probs;
};

namespace detail {

inline void finish_softmax(std::span<const double> logits, HeadActivation& act) {
  act.log_probs.resize(logits.size());
  log_softmax(logits, act.log_probs);
  act.probs.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) act.probs[k] = std::exp(act.log_probs[k]);
}

inline void output_layer(const DenseHead& head, HeadActivation& act) {
  const std::size_t H = head.hidden_dim;
  std::vector<double> logits(head.b2);
  for (std::size_t k = 0; k < head.output_dim; ++k) {
    const double* row = head.w2.data() + k * H;
    double z = 0.0;
    for (std::size_t h = 0; h < H; ++h) z += row[h] * act.hidden[h];
    logits[k] += z;
  }
  finish_softmax(logits, act);
}

}  // namespace detail

inline HeadActivation forward(const ZeroInputHead& head) {
  HeadActivation act;
  detail::finish_softmax(head.logits, act);
  return act;
}

/// Forward pass for an input that is a sum of one-hot blocks: x[d] = 1 for d in active.
inline HeadActivation forward_active(const DenseHead& head, std::span<const std::size_t> active) {
  const std::size_t H = head.hidden_dim;
  HeadActivation act;
  act.hidden = head.b1;
  for (std::size_t d : active) {
    const double* col = head.w1.data() + d * H;
    for (std::size_t h = 0; h < H; ++h) act.hidden[h] += col[h];
  }
  for (double& a : act.hidden) a = std::tanh(a);
  detail::output_layer(head, act);
  return act;
}

inline HeadActivation forward_dense(const DenseHead& head, std::span<const double> x) {
  if (x.size() != head.input_dim)
    throw ValidationError("head input has " + std::to_string(x.size()) + " entries, expected " +
                          std::to_string(head.input_dim));
  const std::size_t H = head.hidden_dim;
  HeadActivation act;
  act.hidden = head.b1;
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (x[d] == 0.0) continue;
    const double* col = head.w1.data() + d * H;
    for (std::size_t h = 0; h < H; ++h) act.hidden[h] += col[h] * x[d];
  }
  for (double& a : act.hidden) a = std::tanh(a);
  detail::output_layer(head, act);
  return act;
}

/// Class probabilities of a head for input x.
inline std::vector<double> head_forward(const DenseHead& head, std::span<const double> x) {
  return forward_dense(head, x).probs;
}

inline std::vector<double> head_forward(const ZeroInputHead& head, std::span<const double> x = {}) {
  if (!x.empty()) throw ValidationError("a zero-input head takes no input");
  return forward(head).probs;
}

/// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
inline void backward(const ZeroInputHead&, std::span<const double> dlogits, ZeroInputHead& grad) {
  for (std::size_t k = 0; k < dlogits.size(); ++k) grad.logits[k] += dlogits[k];
}

inline void backward_active(const DenseHead& head, const HeadActivation& act, std::span<const double> dlogits,
                            std::span<const std::size_t> active, DenseHead& grad) {
  const std::size_t H = head.hidden_dim;
  std::vector<double> dz(H, 0.0);
  for (std::size_t k = 0; k < head.output_dim; ++k) {
    const double g = dlogits[k];
    if (g == 0.0) continue;
    grad.b2[k] += g;
    const double* w_row = head.w2.data() + k * H;
    double* g_row = grad.w2.data() + k * H;
    for (std::size_t h = 0; h < H; ++h) {
      g_row[h] += g * act.hidden[h];
      dz[h] += g * w_row[h];
    }
  }
  for (std::size_t h = 0; h < H; ++h) {
    dz[h] *= 1.0 - act.hidden[h] * act.hidden[h];
    grad.b1[h] += dz[h];
  }
  for (std::size_t d : active) {
    double* g_col = grad.w1.data() + d * H;
    for (std::size_t h = 0; h < H; ++h) g_col[h] += dz[h];
  }
}

inline void backward_dense(const DenseHead& head, const HeadActivation& act, std::span<const double> dlogits,
                           std::span<const double> x, DenseHead& grad) {
  const std::size_t H = head.hidden_dim;
  std::vector<double> dz(H, 0.0);
  for (std::size_t k = 0; k < head.output_dim; ++k) {
    const double g = dlogits[k];
    grad.b2[k] += g;
    for (std::size_t h = 0; h < H; ++h) {
      grad.w2[k * H + h] += g * act.hidden[h];
      dz[h] += g * head.w2[k * H + h];
    }
  }
  for (std::size_t h = 0; h < H; ++h) {
    dz[h] *= 1.0 - act.hidden[h] * act.hidden[h];
    grad.b1[h] += dz[h];
  }
  for (std::size_t d = 0; d < x.size(); ++d)
    for (std::size_t h = 0; h < H; ++h) grad.w1[d * H + h] += dz[h] * x[d];
}

// ---------------------------------------------------------------------------
// Parameter-set utilities

template <ParameterSet P>
std::size_t parameter_count(const P& params) {
  std::size_t n = 0;
  params.visit_tensors([&](std::string_view, std::span<const double> t) { n += t.size(); });
  return n;
}

template <ParameterSet P>
std::vector<double> flatten(const P& params) {
  std::vector<double> out;
  params.visit_tensors([&](std::string_view, std::span<const double> t) { out.insert(out.end(), t.begin(), t.end()); });
  return out;
}

template <ParameterSet P>
void unflatten(P& params, std::span<const double> values) {
  std::size_t offset = 0;
  params.visit_tensors([&](std::string_view, std::span<double> t) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
    offset += t.size();
  });
}

template <ParameterSet P>
P zeros_like(P params) {
  params.visit_tensors([](std::string_view, std::span<double> t) { std::fill(t.begin(), t.end(), 0.0); });
  return params;
}

template <ParameterSet P>
bool all_finite(const P& params) {
  bool ok = true;
  params.visit_tensors([&](std::string_view, std::span<const double> t) {
    for (double v : t) ok = ok && std::isfinite(v);
  });
  return ok;
}

/// Human-readable name of flat coordinate `index`, e.g. "w1[17]".
template <ParameterSet P>
std::string coordinate_name(const P& params, std::size_t index) {
  std::string name;
  std::size_t offset = 0;
  params.visit_tensors([&](std::string_view tensor, std::span<const double> t) {
    if (name.empty() && index < offset + t.size())
      name = std::string(tensor) + "[" + std::to_string(index - offset) + "]";
    offset += t.size();
  });
  return name;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  OptimizerState() = default;
  OptimizerState(AdamConfig cfg, std::size_t n_params)
      : config(cfg), first_moment(n_params, 0.0), second_moment(n_params, 0.0) {}
};

/// One bias-corrected Adam update. Throws NumericError on a non-finite
/// gradient or a non-finite parameter after the update.
template <ParameterSet P>
void adam_step(P& params, const P& grads, OptimizerState& state) {
  const std::vector<double> g = flatten(grads);
  std::vector<double> theta = flatten(params);
  if (g.size() != theta.size() || state.first_moment.size() != theta.size())
    throw ValidationError("optimizer state does not match the parameter shapes");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i])) throw NumericError("non-finite gradient at " + coordinate_name(grads, i));

  ++state.step;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g[i];
    v = c.beta2 * v + (1.0 - c.beta2) * g[i] * g[i];
    theta[i] -= c.learning_rate * (m / correction1) / (std::sqrt(v / correction2) + c.epsilon);
    if (!std::isfinite(theta[i])) throw NumericError("non-finite parameter at " + coordinate_name(params, i));
  }
  unflatten(params, theta);
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckReport {
  bool passed = true;
  std::size_t coordinates = 0;
  std::size_t worst_index = 0;
  std::string worst_name;
  double worst_relative_error = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients against central differences coordinate by
/// coordinate; relative error = |a - n| / max(1e-8, |a| + |n|).
template <ParameterSet P, class LossFn>
  requires std::invocable<LossFn&, const P&>
GradCheckReport grad_check(LossFn&& loss, const P& params, const P& analytic, double step = 1e-4,
                           double tolerance = 1e-4) {
  std::vector<double> theta = flatten(params);
  const std::vector<double> a = flatten(analytic);
  P probe = params;
  GradCheckReport report;
  report.coordinates = theta.size();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    unflatten(probe, theta);
    const double up = loss(std::as_const(probe));
    theta[i] = saved - step;
    unflatten(probe, theta);
    const double down = loss(std::as_const(probe));
    theta[i] = saved;

    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(a[i] - numeric) / std::max(1e-8, std::abs(a[i]) + std::abs(numeric));
    if (i == 0 || rel > report.worst_relative_error) {
      report.worst_index = i;
      report.worst_relative_error = rel;
      report.worst_analytic = a[i];
      report.worst_numeric = numeric;
    }
  }
  report.passed = report.worst_relative_error <= tolerance;
  report.worst_name = coordinate_name(params, report.worst_index);
  return report;
}

}  // namespace fairsynth
