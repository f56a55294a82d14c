// fairsynth command-line driver.
//
// Exit codes: 0 success, 1 invalid input or config, 2 runtime or numeric failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairsynth/experiment.hpp"

namespace fs = std::filesystem;
using namespace fairsynth;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> reps;
  std::optional<double> lambda;
  std::string model;
  std::string original;
  std::string synthetic;
  std::size_t n = 0;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.reps) cfg.reps = *o.reps;
  if (o.lambda) cfg.train.lambda = *o.lambda;
  cfg.validate();
  return cfg;
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::ofstream(dir / "config.resolved.cfg") << to_config_text(cfg);
  return dir;
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  writer(out);
  std::cerr << "wrote " << path.string() << '\n';
}

void write_json(const fs::path& path, const Json& j) {
  write_file(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

void log_epoch(const EpochStats& e) {
  std::cerr << "epoch " << e.epoch << " acc " << e.accuracy_loss << " fair " << e.fairness_loss << " combined "
            << e.combined_loss << '\n';
}

int cmd_fit(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = prepare_output(cfg);
  const Dataset data = load_experiment_data(cfg);
  const FitOutcome fit = fit_experiment(data, cfg);
  for (const auto& e : fit.history.epochs) log_epoch(e);
  save_model(fit.model, (dir / "model.json").string(), fit.metadata);
  std::cerr << "wrote " << (dir / "model.json").string() << '\n';
  write_file(dir / "history.csv", [&](std::ostream& out) { write_history_csv(out, fit.history); });
  return 0;
}

int cmd_sample(const Options& o) {
  const LoadedModel loaded = load_model(o.model);
  const std::uint64_t seed = o.seed.value_or(0);
  const Dataset synthetic = synthesize(loaded.model, o.n, seed);
  if (o.out) {
    if (const fs::path parent = fs::path(*o.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    save_csv(synthetic, *o.out);
    std::cerr << "wrote " << *o.out << '\n';
  } else {
    write_csv(std::cout, synthetic);
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  if (!o.original.empty()) cfg.data_path = o.original;
  const fs::path dir = prepare_output(cfg);
  const Dataset original = load_experiment_data(cfg);
  const Dataset synthetic = load_csv(o.synthetic, original.schema);
  const Encoder encoder = fit_encoder(original);
  const FidelityReport fidelity =
      fidelity_report(original, synthetic, encoder, original.schema, cfg.proxies, cfg.drift_threshold);
  Json report;
  report["fairness"] = {{"original", to_json(fairness_report(original))},
                        {"synthetic", to_json(fairness_report(synthetic))}};
  report["fidelity"] = to_json(fidelity);
  write_json(dir / "evaluation.json", report);
  write_file(dir / "tv.csv", [&](std::ostream& out) { write_tv_csv(out, fidelity); });
  write_file(dir / "cramers_v.csv", [&](std::ostream& out) { write_cramers_v_csv(out, fidelity); });
  return 0;
}

int cmd_audit(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  if (!o.original.empty()) cfg.data_path = o.original;
  const fs::path dir = prepare_output(cfg);
  const LoadedModel loaded = load_model(o.model);
  const Dataset original = load_experiment_data(cfg);

  AuditConfig ac;
  ac.reps = cfg.reps;
  ac.logreg = cfg.logreg;
  ac.protected_column = cfg.audit_protected_column;
  ac.seed = derive_seed(cfg.seed, SeedStream::audit_rep);
  // The holdout must be the one the generative model never saw.
  const Json& split = loaded.metadata.contains("split") ? loaded.metadata.at("split") : Json();
  if (split.is_object()) {
    ac.holdout_fraction = split.at("holdout_fraction").get<double>();
    ac.split_seed = split.at("seed").get<std::uint64_t>();
  } else {
    ac.holdout_fraction = cfg.holdout_fraction;
    ac.split_seed = split_seed(cfg);
  }
  const AuditReport report = audit(original, loaded.model, ac);
  write_json(dir / "audit.json", to_json(report));
  write_file(dir / "propensity.csv", [&](std::ostream& out) { write_propensity_csv(out, report); });
  return 0;
}

int cmd_proxy(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = prepare_output(cfg);
  const Dataset data = load_experiment_data(cfg);
  const ProxyExperimentResult r = run_proxy_experiment(data, cfg);
  save_model(r.fit.model, (dir / "model.json").string(), r.fit.metadata);
  write_file(dir / "history.csv", [&](std::ostream& out) { write_history_csv(out, r.fit.history); });
  write_json(dir / "proxy_experiment.json", to_json(r));
  write_file(dir / "tv.csv", [&](std::ostream& out) { write_tv_csv(out, r.fidelity); });
  write_file(dir / "cramers_v.csv", [&](std::ostream& out) { write_cramers_v_csv(out, r.fidelity); });
  return 0;
}

int cmd_sweep(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const fs::path dir = prepare_output(cfg);
  const Dataset data = load_experiment_data(cfg);
  const SweepResult sweep = run_sweep(data, cfg, [&](const SweepRun& run) {
    std::cerr << "lambda " << format_number(run.lambda) << " seed " << run.seed << " DI "
              << (run.disparate_impact ? format_number(*run.disparate_impact) : "undefined") << '\n';
    const std::string name = "model_lambda" + format_number(run.lambda) + "_seed" + std::to_string(run.seed) + ".json";
    save_model(run.fit.model, (dir / name).string(), run.fit.metadata);
  });
  write_file(dir / "sweep_runs.csv", [&](std::ostream& out) {
    out << "lambda,seed,disparate_impact,parity_difference,max_tv,final_accuracy_loss,final_fairness_loss\n";
    for (const auto& r : sweep.runs) {
      const EpochStats& last = r.fit.history.epochs.back();
      out << format_number(r.lambda) << ',' << r.seed << ','
          << (r.disparate_impact ? format_number(*r.disparate_impact) : "") << ',' << format_number(r.parity_difference)
          << ',' << format_number(r.max_tv) << ',' << format_number(last.accuracy_loss) << ','
          << format_number(last.fairness_loss) << '\n';
    }
  });
  write_file(dir / "sweep_summary.csv", [&](std::ostream& out) {
    out << "lambda,median_disparate_impact,selected\n";
    for (const auto& [lambda, di] : sweep.median_di)
      out << format_number(lambda) << ',' << format_number(di) << ',' << (lambda == sweep.selected_lambda ? 1 : 0)
          << '\n';
  });
  ExperimentConfig calibrated = cfg;
  calibrated.train.lambda = sweep.selected_lambda;
  write_file(dir / "calibrated.cfg", [&](std::ostream& out) { out << to_config_text(calibrated); });
  std::cerr << "selected lambda " << format_number(sweep.selected_lambda)
            << (sweep.target_reached ? "" : " (target DI not reached)") << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair tabular data synthesizer"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed (overrides config)");
    sub->add_option("--out", o.out, "output directory (overrides config)");
  };

  CLI::App* fit = app.add_subcommand("fit", "train a generative model");
  add_config(fit);
  fit->add_option("--lambda", o.lambda, "fairness weight (overrides config)");

  CLI::App* sample = app.add_subcommand("sample", "draw synthetic rows from a model");
  sample->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", o.n, "number of rows")->required();
  sample->add_option("--seed", o.seed, "sampling seed");
  sample->add_option("--out", o.out, "output CSV (default: standard output)");

  CLI::App* evaluate = app.add_subcommand("evaluate", "fidelity and fairness of synthetic data");
  add_config(evaluate);
  evaluate->add_option("--original", o.original, "original CSV (default: data.path)");
  evaluate->add_option("--synthetic", o.synthetic, "synthetic CSV")->required()->check(CLI::ExistingFile);

  CLI::App* audit_cmd = app.add_subcommand("audit", "downstream classifier audit");
  add_config(audit_cmd);
  audit_cmd->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  audit_cmd->add_option("--original", o.original, "original CSV (default: data.path)");
  audit_cmd->add_option("--reps", o.reps, "synthetic repetitions (overrides config)");

  CLI::App* proxy = app.add_subcommand("proxy-experiment", "inject a proxy column, fit and compare associations");
  add_config(proxy);
  proxy->add_option("--lambda", o.lambda, "fairness weight (overrides config)");

  CLI::App* sweep = app.add_subcommand("sweep", "lambda calibration sweep");
  add_config(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(o);
    if (*sample) return cmd_sample(o);
    if (*evaluate) return cmd_evaluate(o);
    if (*audit_cmd) return cmd_audit(o);
    if (*proxy) return cmd_proxy(o);
    if (*sweep) return cmd_sweep(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
