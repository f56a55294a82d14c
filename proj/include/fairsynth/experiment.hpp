#pragma once

// Experiment configuration and the end-to-end procedures behind the CLI:
// fit, lambda sweep with calibration, and the proxy experiment.
//
// Config grammar (one assignment per line, '#' starts a comment):
//
//   line    := key '=' value
//   key     := [A-Za-z0-9_.-]+
//   value   := number | string | 'true' | 'false' | '[' [value {',' value}] ']'
//   string  := '"' { char | '\"' | '\\' } '"'
//
// Keys (defaults in parentheses):
//   data.path                     CSV path, relative to the config file
//   output.dir ("out")            relative to the working directory
//   seed (0)                      master seed; every sub-seed derives from it
//   column.<name>.kind            "categorical" | "numeric"; columns keep first-mention order
//   column.<name>.role ("plain")  "plain" | "protected" | "target"
//   column.<name>.positive_class  target only
//   column.<name>.n_bins (10)     numeric only
//   filter.<name>                 list of labels to keep
//   train.lambda (0) train.epochs (50) train.batch_size (512)
//   train.learning_rate (0.001) train.hidden_dim (32) train.min_group_count (8)
//   audit.holdout_fraction (0.2) audit.reps (5) audit.protected_column ("")
//   audit.logreg.learning_rate (0.1) audit.logreg.epochs (300) audit.logreg.l2 (0.0001)
//   proxy.column proxy.reference_value proxy.p (0.9)
//   sweep.lambdas ([0]) sweep.seeds ([1, 2, 3, 4, 5]) sweep.target_di (0.8)
//   evaluate.drift_threshold (0.1) evaluate.proxies ([])
//   sample.n (0 = as many rows as the training split)

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fairsynth/audit.hpp"
#include "fairsynth/error.hpp"
#include "fairsynth/fairness.hpp"
#include "fairsynth/fidelity.hpp"
#include "fairsynth/model.hpp"
#include "fairsynth/random.hpp"
#include "fairsynth/serialization.hpp"
#include "fairsynth/tabular.hpp"

namespace fairsynth {

// ---------------------------------------------------------------------------
// Config values

struct ConfigValue;
using ConfigList = std::vector<ConfigValue>;

struct ConfigValue {
  std::variant<double, std::string, bool, ConfigList> value;
  bool integral = false;  // number written without '.', 'e' or 'E'
};

struct ConfigEntry {
  std::string key;
  ConfigValue value;
  std::size_t line = 0;
};

namespace detail {

class ConfigLexer {
 public:
  ConfigLexer(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  ConfigValue value() {
    skip_space();
    if (at_end()) fail("missing value");
    const char ch = text_[pos_];
    if (ch == '"') return {string(), false};
    if (ch == '[') return list();
    const std::size_t start = pos_;
    while (!at_end() && text_[pos_] != ',' && text_[pos_] != ']' && !std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    const std::string_view word = text_.substr(start, pos_ - start);
    if (word == "true") return {true, false};
    if (word == "false") return {false, false};
    const auto number = parse_number(word);
    if (!number) fail("cannot parse value '" + std::string(word) + "' (strings must be quoted)");
    return {*number, word.find_first_of(".eE") == std::string_view::npos};
  }

  void expect_end() {
    skip_space();
    if (!at_end()) fail("unexpected trailing text '" + std::string(text_.substr(pos_)) + "'");
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }

  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError("config line " + std::to_string(line_) + ": " + what);
  }

  std::string string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated string");
      const char ch = text_[pos_++];
      if (ch == '"') return out;
      if (ch == '\\') {
        if (at_end()) fail("unterminated escape");
        const char esc = text_[pos_++];
        if (esc != '"' && esc != '\\') fail(std::string("unknown escape \\") + esc);
        out.push_back(esc);
      } else {
        out.push_back(ch);
      }
    }
  }

  ConfigValue list() {
    ++pos_;  // '['
    ConfigList items;
    skip_space();
    if (!at_end() && text_[pos_] == ']') {
      ++pos_;
      return {items, false};
    }
    while (true) {
      items.push_back(value());
      skip_space();
      if (at_end()) fail("unterminated list");
      if (text_[pos_] == ']') {
        ++pos_;
        return {items, false};
      }
      if (text_[pos_] != ',') fail("expected ',' or ']' in list");
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

// Strips a trailing comment that is not inside a string.
inline std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

inline bool valid_key(std::string_view key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

inline std::string quote_config(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline std::vector<ConfigEntry> parse_config_entries(std::string_view text) {
  std::vector<ConfigEntry> entries;
  std::set<std::string> keys;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    const std::string_view raw = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    const std::string_view line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(detail::trim(line.substr(0, eq)));
    if (!detail::valid_key(key))
      throw ValidationError("config line " + std::to_string(line_no) + ": invalid key '" + key + "'");
    if (!keys.insert(key).second)
      throw ValidationError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    detail::ConfigLexer lexer(line.substr(eq + 1), line_no);
    ConfigValue value = lexer.value();
    lexer.expect_end();
    entries.push_back({key, std::move(value), line_no});
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Experiment config

struct ProxyConfig {
  std::string column;
  std::string reference_value;
  double p = 0.9;
};

struct SweepConfig {
  std::vector<double> lambdas{0.0};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double target_di = kFourFifths;
};

struct ExperimentConfig {
  std::string data_path;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  std::vector<ColumnSpec> columns;
  std::vector<std::pair<std::string, std::vector<std::string>>> filters;
  TrainConfig train;  // train.seed is derived from `seed`, not configured
  double holdout_fraction = 0.2;
  int reps = 5;
  std::string audit_protected_column;
  LogRegConfig logreg;
  std::optional<ProxyConfig> proxy;
  SweepConfig sweep;
  double drift_threshold = kDefaultDriftThreshold;
  std::vector<std::string> proxies;
  std::size_t sample_n = 0;

  Schema schema() const { return Schema(columns); }

  /// Validates everything that can be checked without the data.
  void validate() const {
    if (data_path.empty()) throw ValidationError("config: data.path is required");
    (void)schema();
    TrainConfig t = train;
    t.validate();
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
      throw ValidationError("config: audit.holdout_fraction must lie in (0, 1)");
    if (reps < 1) throw ValidationError("config: audit.reps must be positive");
    if (logreg.epochs < 1 || !(logreg.learning_rate > 0.0) || !(logreg.l2 >= 0.0))
      throw ValidationError("config: invalid audit.logreg settings");
    if (proxy && (proxy->column.empty() || proxy->reference_value.empty() || !(proxy->p >= 0.0 && proxy->p <= 1.0)))
      throw ValidationError("config: proxy needs column, reference_value and p in [0, 1]");
    if (sweep.lambdas.empty() || sweep.seeds.empty()) throw ValidationError("config: sweep needs lambdas and seeds");
    for (double l : sweep.lambdas)
      if (!(l >= 0.0)) throw ValidationError("config: sweep lambdas must be >= 0");
    if (!(drift_threshold > 0.0)) throw ValidationError("config: evaluate.drift_threshold must be positive");
  }
};

namespace detail {

inline double as_number(const ConfigEntry& e) {
  if (const auto* v = std::get_if<double>(&e.value.value)) return *v;
  throw ValidationError("config line " + std::to_string(e.line) + ": '" + e.key + "' must be a number");
}

inline std::int64_t as_integer(const ConfigEntry& e) {
  const double v = as_number(e);
  if (!e.value.integral || v != std::floor(v))
    throw ValidationError("config line " + std::to_string(e.line) + ": '" + e.key + "' must be an integer");
  return static_cast<std::int64_t>(v);
}

inline std::uint64_t as_seed(const ConfigEntry& e) {
  const auto v = as_integer(e);
  if (v < 0) throw ValidationError("config line " + std::to_string(e.line) + ": '" + e.key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

inline std::string as_string(const ConfigEntry& e) {
  if (const auto* v = std::get_if<std::string>(&e.value.value)) return *v;
  throw ValidationError("config line " + std::to_string(e.line) + ": '" + e.key + "' must be a quoted string");
}

template <class T, class Convert>
std::vector<T> as_list(const ConfigEntry& e, Convert convert) {
  const auto* list = std::get_if<ConfigList>(&e.value.value);
  if (!list) throw ValidationError("config line " + std::to_string(e.line) + ": '" + e.key + "' must be a list");
  std::vector<T> out;
  for (const auto& item : *list) out.push_back(convert(ConfigEntry{e.key, item, e.line}));
  return out;
}

}  // namespace detail

/// Parses config text; relative data paths resolve against `base_dir`.
inline ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  ExperimentConfig cfg;
  std::map<std::string, std::size_t> column_slot;
  auto column = [&](const std::string& name) -> ColumnSpec& {
    auto [it, fresh] = column_slot.emplace(name, cfg.columns.size());
    if (fresh) {
      ColumnSpec spec;
      spec.name = name;
      cfg.columns.push_back(std::move(spec));
    }
    return cfg.columns[it->second];
  };
  std::optional<ProxyConfig> proxy;
  auto proxy_block = [&]() -> ProxyConfig& {
    if (!proxy) proxy.emplace();
    return *proxy;
  };
  std::set<std::string> kinds_given;

  for (const ConfigEntry& e : parse_config_entries(text)) {
    const std::string& k = e.key;
    if (k.rfind("column.", 0) == 0) {
      const auto dot = k.rfind('.');
      if (dot <= 7) throw ValidationError("config line " + std::to_string(e.line) + ": expected column.<name>.<field>");
      const std::string name = k.substr(7, dot - 7);
      const std::string field = k.substr(dot + 1);
      ColumnSpec& c = column(name);
      if (field == "kind") {
        c.kind = parse_column_kind(as_string(e));
        kinds_given.insert(name);
      } else if (field == "role") {
        c.role = parse_column_role(as_string(e));
      } else if (field == "positive_class") {
        c.positive_class = as_string(e);
      } else if (field == "n_bins") {
        c.n_bins = static_cast<int>(as_integer(e));
      } else {
        throw ValidationError("config line " + std::to_string(e.line) + ": unknown column field '" + field + "'");
      }
    } else if (k.rfind("filter.", 0) == 0) {
      cfg.filters.emplace_back(k.substr(7), as_list<std::string>(e, as_string));
    } else if (k == "data.path") {
      std::filesystem::path p = as_string(e);
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      cfg.data_path = p.lexically_normal().string();
    } else if (k == "output.dir") {
      cfg.output_dir = as_string(e);
    } else if (k == "seed") {
      cfg.seed = as_seed(e);
    } else if (k == "train.lambda") {
      cfg.train.lambda = as_number(e);
    } else if (k == "train.epochs") {
      cfg.train.epochs = static_cast<int>(as_integer(e));
    } else if (k == "train.batch_size") {
      cfg.train.batch_size = static_cast<int>(as_integer(e));
    } else if (k == "train.learning_rate") {
      cfg.train.learning_rate = as_number(e);
    } else if (k == "train.hidden_dim") {
      cfg.train.hidden_dim = static_cast<int>(as_integer(e));
    } else if (k == "train.min_group_count") {
      cfg.train.min_group_count = static_cast<int>(as_integer(e));
    } else if (k == "audit.holdout_fraction") {
      cfg.holdout_fraction = as_number(e);
    } else if (k == "audit.reps") {
      cfg.reps = static_cast<int>(as_integer(e));
    } else if (k == "audit.protected_column") {
      cfg.audit_protected_column = as_string(e);
    } else if (k == "audit.logreg.learning_rate") {
      cfg.logreg.learning_rate = as_number(e);
    } else if (k == "audit.logreg.epochs") {
      cfg.logreg.epochs = static_cast<int>(as_integer(e));
    } else if (k == "audit.logreg.l2") {
      cfg.logreg.l2 = as_number(e);
    } else if (k == "proxy.column") {
      proxy_block().column = as_string(e);
    } else if (k == "proxy.reference_value") {
      proxy_block().reference_value = as_string(e);
    } else if (k == "proxy.p") {
      proxy_block().p = as_number(e);
    } else if (k == "sweep.lambdas") {
      cfg.sweep.lambdas = as_list<double>(e, as_number);
    } else if (k == "sweep.seeds") {
      cfg.sweep.seeds = as_list<std::uint64_t>(e, as_seed);
    } else if (k == "sweep.target_di") {
      cfg.sweep.target_di = as_number(e);
    } else if (k == "evaluate.drift_threshold") {
      cfg.drift_threshold = as_number(e);
    } else if (k == "evaluate.proxies") {
      cfg.proxies = as_list<std::string>(e, as_string);
    } else if (k == "sample.n") {
      const auto n = as_integer(e);
      if (n < 0) throw ValidationError("config: sample.n must be >= 0");
      cfg.sample_n = static_cast<std::size_t>(n);
    } else {
      throw ValidationError("config line " + std::to_string(e.line) + ": unknown key '" + k + "'");
    }
  }
  for (const auto& c : cfg.columns)
    if (!kinds_given.count(c.name)) throw ValidationError("config: column '" + c.name + "' has no kind");
  cfg.proxy = std::move(proxy);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), std::filesystem::path(path).parent_path());
}

/// Fully resolved config (every default written out) in the same grammar.
inline std::string to_config_text(const ExperimentConfig& cfg) {
  using detail::quote_config;
  std::ostringstream out;
  auto real = [](double v) {
    std::string s = format_number(v);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  };
  out << "data.path = " << quote_config(cfg.data_path) << '\n';
  out << "output.dir = " << quote_config(cfg.output_dir) << '\n';
  out << "seed = " << cfg.seed << '\n';
  for (const auto& c : cfg.columns) {
    const std::string prefix = "column." + c.name + ".";
    out << prefix << "kind = " << quote_config(to_string(c.kind)) << '\n';
    out << prefix << "role = " << quote_config(to_string(c.role)) << '\n';
    if (c.positive_class) out << prefix << "positive_class = " << quote_config(*c.positive_class) << '\n';
    if (c.kind == ColumnKind::numeric) out << prefix << "n_bins = " << c.n_bins << '\n';
  }
  for (const auto& [column, labels] : cfg.filters) {
    out << "filter." << column << " = [";
    for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? ", " : "") << quote_config(labels[i]);
    out << "]\n";
  }
  out << "train.lambda = " << real(cfg.train.lambda) << '\n';
  out << "train.epochs = " << cfg.train.epochs << '\n';
  out << "train.batch_size = " << cfg.train.batch_size << '\n';
  out << "train.learning_rate = " << real(cfg.train.learning_rate) << '\n';
  out << "train.hidden_dim = " << cfg.train.hidden_dim << '\n';
  out << "train.min_group_count = " << cfg.train.min_group_count << '\n';
  out << "audit.holdout_fraction = " << real(cfg.holdout_fraction) << '\n';
  out << "audit.reps = " << cfg.reps << '\n';
  out << "audit.protected_column = " << quote_config(cfg.audit_protected_column) << '\n';
  out << "audit.logreg.learning_rate = " << real(cfg.logreg.learning_rate) << '\n';
  out << "audit.logreg.epochs = " << cfg.logreg.epochs << '\n';
  out << "audit.logreg.l2 = " << real(cfg.logreg.l2) << '\n';
  if (cfg.proxy) {
    out << "proxy.column = " << quote_config(cfg.proxy->column) << '\n';
    out << "proxy.reference_value = " << quote_config(cfg.proxy->reference_value) << '\n';
    out << "proxy.p = " << real(cfg.proxy->p) << '\n';
  }
  out << "sweep.lambdas = [";
  for (std::size_t i = 0; i < cfg.sweep.lambdas.size(); ++i) out << (i ? ", " : "") << real(cfg.sweep.lambdas[i]);
  out << "]\nsweep.seeds = [";
  for (std::size_t i = 0; i < cfg.sweep.seeds.size(); ++i) out << (i ? ", " : "") << cfg.sweep.seeds[i];
  out << "]\nsweep.target_di = " << real(cfg.sweep.target_di) << '\n';
  out << "evaluate.drift_threshold = " << real(cfg.drift_threshold) << '\n';
  out << "evaluate.proxies = [";
  for (std::size_t i = 0; i < cfg.proxies.size(); ++i) out << (i ? ", " : "") << quote_config(cfg.proxies[i]);
  out << "]\nsample.n = " << cfg.sample_n << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Procedures

/// Loads the configured CSV and applies row filters.
inline Dataset load_experiment_data(const ExperimentConfig& cfg) {
  Dataset data = load_csv(cfg.data_path, cfg.schema());
  for (const auto& [column, labels] : cfg.filters) data = filter_rows(data, column, labels);
  if (data.rows.empty()) throw ValidationError("no rows left after loading and filtering '" + cfg.data_path + "'");
  return data;
}

inline std::uint64_t split_seed(const ExperimentConfig& cfg) { return derive_seed(cfg.seed, SeedStream::split); }

struct FitOutcome {
  GenerativeModel model;
  TrainHistory history;
  Json metadata;
};

/// Trains on the training split only; the holdout is left for the downstream
/// audit and the split is recorded in the metadata. Categories and bin edges
/// come from all of `data`, so the model's bins are the ones fidelity is
/// measured on and every original row stays encodable.
inline FitOutcome fit_experiment(const Dataset& data, const ExperimentConfig& cfg) {
  const auto [train_rows, holdout_rows] = split_holdout(data, cfg.holdout_fraction, split_seed(cfg));
  const Encoder encoder = fit_encoder(data);
  const EncodedDataset encoded = encode(train_rows, encoder);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, SeedStream::fit);
  TrainResult result = train(init_model(encoder, data.schema, tc), encoded, tc);

  Json meta;
  meta["seed"] = cfg.seed;
  meta["split"] = {{"holdout_fraction", cfg.holdout_fraction}, {"seed", split_seed(cfg)}};
  meta["train_rows"] = train_rows.size();
  meta["holdout_rows"] = holdout_rows.size();
  meta["train"] = {{"lambda", tc.lambda},
                   {"epochs", tc.epochs},
                   {"batch_size", tc.batch_size},
                   {"learning_rate", tc.learning_rate},
                   {"hidden_dim", tc.hidden_dim},
                   {"min_group_count", tc.min_group_count},
                   {"seed", tc.seed}};
  return {std::move(result.model), std::move(result.history), std::move(meta)};
}

inline std::size_t sample_size(const ExperimentConfig& cfg, const Json& metadata) {
  if (cfg.sample_n) return cfg.sample_n;
  return metadata.at("train_rows").get<std::size_t>();
}

/// Decoded synthetic rows; sample and decode streams derive from `seed`.
inline Dataset synthesize(const GenerativeModel& model, std::size_t n, std::uint64_t seed) {
  return decode(sample(model, n, derive_seed(seed, SeedStream::sample)), derive_seed(seed, SeedStream::decode));
}

inline void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "epoch,accuracy_loss,fairness_loss,combined_loss,skipped_groups,wall_seconds\n";
  for (const auto& e : h.epochs)
    out << e.epoch << ',' << format_number(e.accuracy_loss) << ',' << format_number(e.fairness_loss) << ','
        << format_number(e.combined_loss) << ',' << e.skipped_groups << ',' << format_number(e.wall_seconds) << '\n';
}

struct SweepRun {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> disparate_impact;
  double parity_difference = 0.0;
  double max_tv = 0.0;
  FitOutcome fit;
};

struct SweepResult {
  std::vector<SweepRun> runs;
  std::vector<std::pair<double, double>> median_di;  // (lambda, median DI over seeds)
  double selected_lambda = 0.0;
  bool target_reached = false;

  std::vector<const SweepRun*> runs_at(double lambda) const {
    std::vector<const SweepRun*> out;
    for (const auto& r : runs)
      if (r.lambda == lambda) out.push_back(&r);
    return out;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Lambda calibration: fit every (lambda, seed) with seed as the master seed,
/// sample as many rows as the data has, and take the median synthetic DI
/// over seeds. The selected lambda is the smallest whose median DI reaches
/// target_di; if none does, the one with the highest median DI.
template <class Progress>
SweepResult run_sweep(const Dataset& data, const ExperimentConfig& cfg, Progress&& progress) {
  SweepResult result;
  std::vector<double> lambdas = cfg.sweep.lambdas;
  std::sort(lambdas.begin(), lambdas.end());
  lambdas.erase(std::unique(lambdas.begin(), lambdas.end()), lambdas.end());

  for (double lambda : lambdas) {
    std::vector<double> dis;
    for (std::uint64_t seed : cfg.sweep.seeds) {
      ExperimentConfig run_cfg = cfg;
      run_cfg.seed = seed;
      run_cfg.train.lambda = lambda;
      SweepRun run;
      run.lambda = lambda;
      run.seed = seed;
      run.fit = fit_experiment(data, run_cfg);
      const Dataset synthetic = synthesize(run.fit.model, data.size(), seed);
      const FairnessReport fr = fairness_report(synthetic);
      run.disparate_impact = fr.disparate_impact.value;
      run.parity_difference = fr.parity_difference;
      const EncodedDataset a = encode(data, run.fit.model.encoder);
      const EncodedDataset b = encode(synthetic, run.fit.model.encoder);
      for (std::size_t j = 0; j < data.schema.size(); ++j)
        run.max_tv = std::max(run.max_tv, tv_distance(marginal(a, j), marginal(b, j)));
      dis.push_back(run.disparate_impact.value_or(0.0));
      progress(run);
      result.runs.push_back(std::move(run));
    }
    result.median_di.emplace_back(lambda, median_of(dis));
  }

  const auto reached = std::find_if(result.median_di.begin(), result.median_di.end(),
                                    [&](const auto& p) { return p.second >= cfg.sweep.target_di; });
  if (reached != result.median_di.end()) {
    result.selected_lambda = reached->first;
    result.target_reached = true;
  } else {
    result.selected_lambda =
        std::max_element(result.median_di.begin(), result.median_di.end(),
                         [](const auto& a, const auto& b) { return a.second < b.second; })->first;
  }
  return result;
}

inline SweepResult run_sweep(const Dataset& data, const ExperimentConfig& cfg) {
  return run_sweep(data, cfg, [](const SweepRun&) {});
}

struct ProxyExperimentResult {
  std::string protected_column;
  std::string target_column;
  // V for (protected, proxy), (protected, target), (proxy, target)
  double original_protected_proxy = 0.0, original_protected_target = 0.0, original_proxy_target = 0.0;
  double synthetic_protected_proxy = 0.0, synthetic_protected_target = 0.0, synthetic_proxy_target = 0.0;
  FairnessReport original_fairness;
  FairnessReport synthetic_fairness;
  FidelityReport fidelity;
  FitOutcome fit;
};

/// Injects the proxy column, fits on the augmented data, samples and measures
/// the three associations on both sides.
inline ProxyExperimentResult run_proxy_experiment(const Dataset& data, const ExperimentConfig& cfg) {
  if (!cfg.proxy) throw ValidationError("config has no proxy block");
  const Dataset augmented = inject_proxy(data, cfg.proxy->column, cfg.proxy->reference_value, cfg.proxy->p,
                                         derive_seed(cfg.seed, SeedStream::proxy));
  ProxyExperimentResult r;
  r.protected_column = cfg.proxy->column;
  r.target_column = augmented.schema.column(augmented.schema.target()).name;
  r.fit = fit_experiment(augmented, cfg);
  const Dataset synthetic = synthesize(r.fit.model, augmented.size(), cfg.seed);

  std::vector<std::string> proxies = cfg.proxies;
  if (std::find(proxies.begin(), proxies.end(), "proxy") == proxies.end()) proxies.push_back("proxy");
  r.fidelity =
      fidelity_report(augmented, synthetic, r.fit.model.encoder, augmented.schema, proxies, cfg.drift_threshold);
  const PairDrift& pp = r.fidelity.pair(r.protected_column, "proxy");
  const PairDrift& pt = r.fidelity.pair(r.protected_column, r.target_column);
  const PairDrift& xt = r.fidelity.pair("proxy", r.target_column);
  r.original_protected_proxy = pp.v_original;
  r.synthetic_protected_proxy = pp.v_synthetic;
  r.original_protected_target = pt.v_original;
  r.synthetic_protected_target = pt.v_synthetic;
  r.original_proxy_target = xt.v_original;
  r.synthetic_proxy_target = xt.v_synthetic;
  r.original_fairness = fairness_report(augmented);
  r.synthetic_fairness = fairness_report(synthetic);
  return r;
}

inline Json to_json(const ProxyExperimentResult& r) {
  Json out;
  out["protected_column"] = r.protected_column;
  out["target_column"] = r.target_column;
  out["cramers_v"] = {
      {"original",
       {{"protected_proxy", r.original_protected_proxy},
        {"protected_target", r.original_protected_target},
        {"proxy_target", r.original_proxy_target}}},
      {"synthetic",
       {{"protected_proxy", r.synthetic_protected_proxy},
        {"protected_target", r.synthetic_protected_target},
        {"proxy_target", r.synthetic_proxy_target}}}};
  out["fairness"] = {{"original", to_json(r.original_fairness)}, {"synthetic", to_json(r.synthetic_fairness)}};
  out["fidelity"] = to_json(r.fidelity);
  return out;
}

}  // namespace fairsynth
