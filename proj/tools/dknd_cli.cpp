// dknd: simulate benchmarks, corrupt trajectories, train and compare
// one-step predictors from noisy measurements.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 usage or invalid input,
// 3 rank failure, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "dknd/config.hpp"
#include "dknd/io.hpp"

namespace fs = std::filesystem;
using namespace dknd;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kRank = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Settings = std::vector<std::pair<std::string, std::string>>;

/// Flags that map onto RunConfig keys are collected in parse order and applied
/// after the config file, so they override it.
void setting(CLI::App* app, const std::string& flag, const std::string& key, Settings& sink,
             const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&sink, key](const std::string& v) { sink.emplace_back(key, v); }, help);
}

void noise_flags(CLI::App* app, Settings& s) {
  setting(app, "--noise", "noise.kind", s, "gaussian | poisson | uniform | none");
  setting(app, "--mu", "noise.mu", s, "Gaussian mean");
  setting(app, "--sigma", "noise.sigma", s, "Gaussian standard deviation");
  setting(app, "--lambda", "noise.lambda", s, "Poisson rate (draws are centered)");
  setting(app, "--lo", "noise.lo", s, "uniform lower bound");
  setting(app, "--hi", "noise.hi", s, "uniform upper bound (exclusive)");
  setting(app, "--scale", "noise.scale", s, "multiplier applied to every draw");
  setting(app, "--target-wmax", "noise.target_wmax", s, "rescale so that max_t ||w_t|| equals this");
}

void train_flags(CLI::App* app, Settings& s) {
  setting(app, "--lr", "train.lr", s, "learning rate");
  setting(app, "--epochs", "train.epochs", s, "maximum number of parameter updates");
  setting(app, "--epsilon", "train.epsilon", s, "terminal accuracy on L_f (inf: stop after one update)");
  setting(app, "--optimizer", "train.optimizer", s, "adam | gd");
  setting(app, "--weights", "train.weights", s, "w1,...,w6 (normalized to sum to one)");
  setting(app, "--lift-dim", "train.lift_dim", s, "observable width r");
  setting(app, "--hidden", "train.hidden", s, "hidden widths, e.g. 512,128");
  setting(app, "--cross-term", "train.cross_term", s, "compact | per_sample");
  setting(app, "--reconstruction", "train.reconstruction", s, "current | next");
}

void split_flags(CLI::App* app, Settings& s) {
  setting(app, "--split-fraction", "split.fraction", s, "fraction of pairs used for training");
  setting(app, "--split-mode", "split.mode", s, "chronological | random");
}

RunConfig resolve(const std::string& config_path, const Settings& flags) {
  RunConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot open config file '" + config_path + "'");
    cfg = load_config(in);
  }
  for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
  for (const auto& w : validate_config(cfg)) std::cerr << "warning: " << w << "\n";
  return cfg;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return in;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

Vector parse_vector(const std::string& csv) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) vals.push_back(std::stod(item));
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

/// The benchmark whose state and input widths match, if exactly one does.
std::optional<Benchmark> infer_benchmark(Eigen::Index n, Eigen::Index m) {
  std::optional<Benchmark> found;
  for (auto b : {Benchmark::Linear2D, Benchmark::CartPole, Benchmark::LunarLander, Benchmark::SurfaceVehicle}) {
    const auto info = benchmark_info(b);
    if (info.state_dim == n && info.input_dim == m) {
      if (found) return std::nullopt;
      found = b;
    }
  }
  return found;
}

/// Fills in the benchmark (and so the default lift width) for file-based
/// commands where the data, not a flag, fixes the dimensions.
void settle_benchmark(RunConfig& cfg, const MeasuredTrajectory& data, bool need_lift) {
  const auto n = data.base.state_dim();
  const auto m = data.base.input_dim();
  if (cfg.has_benchmark) {
    const auto info = benchmark_info(cfg.experiment.benchmark);
    if (info.state_dim != n || info.input_dim != m) {
      throw UsageError("data has n=" + std::to_string(n) + ", m=" + std::to_string(m) + " but benchmark " +
                       std::string(to_string(cfg.experiment.benchmark)) + " expects n=" +
                       std::to_string(info.state_dim) + ", m=" + std::to_string(info.input_dim));
    }
    return;
  }
  if (const auto b = infer_benchmark(n, m)) {
    cfg.experiment.benchmark = *b;
    cfg.has_benchmark = true;
  } else if (need_lift && cfg.experiment.lift_dim == 0) {
    throw UsageError("cannot tell the benchmark from the data; pass --benchmark or --lift-dim");
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, const std::string& x0_flag, const std::string& out_path) {
  if (!cfg.has_benchmark) throw UsageError("simulate: --benchmark is required");
  const auto& e = cfg.experiment;
  const auto info = benchmark_info(e.benchmark);
  const std::size_t T = e.horizon ? e.horizon : info.horizon;
  const Vector x0 = x0_flag.empty() ? info.x0 : parse_vector(x0_flag);
  if (x0.size() != info.state_dim) throw UsageError("--x0 needs " + std::to_string(info.state_dim) + " entries");
  const auto traj = simulate(e.benchmark, x0, T, derive_seed(e.base_seed, seed_stream::kExcitation));
  std::ostringstream os;
  write_trajectory_csv(os, traj);
  write_file(out_path.empty() ? fs::path(cfg.output) / "trajectory.csv" : fs::path(out_path), os.str());
  std::printf("T=%zu n=%d m=%d\n", T, info.state_dim, info.input_dim);
  return kOk;
}

int cmd_corrupt(const RunConfig& cfg, const std::string& in_path, const std::string& out_path) {
  auto in = open_in(in_path);
  const auto file = read_trajectory_csv(in);
  if (!file.has_states) throw UsageError("corrupt: input has no state columns");
  NoiseSpec spec = cfg.experiment.noise;
  spec.seed = derive_seed(cfg.experiment.base_seed, seed_stream::kNoise);
  const auto measured = cfg.experiment.target_wmax ? corrupt_to_wmax(file.traj, spec, *cfg.experiment.target_wmax)
                                                   : corrupt(file.traj, spec);
  std::ostringstream os;
  write_trajectory_csv(os, measured.base, &measured.measurements);
  write_file(out_path.empty() ? fs::path(cfg.output) / "measured.csv" : fs::path(out_path), os.str());
  std::printf("w_max=%.6f\n", measured.w_max_empirical);
  return kOk;
}

MeasuredTrajectory load_measured(const std::string& path) {
  auto in = open_in(path);
  const auto file = read_trajectory_csv(in);
  if (!file.measurements) throw UsageError("'" + path + "' has no measurement columns; run corrupt first");
  return as_measured(file);
}

int cmd_train(RunConfig cfg, const std::string& in_path, const std::string& method_name,
              const std::string& model_path, const std::string& history_path) {
  const auto data = load_measured(in_path);
  const Method method = parse_method(method_name);
  const bool inferred = !cfg.has_benchmark;
  settle_benchmark(cfg, data, method == Method::DKND || method == Method::DKL);
  const auto warnings = validate_config(cfg);
  if (inferred) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  }
  const auto& e = cfg.experiment;
  const auto split = split_dataset(data, e.split_fraction, e.split_mode, derive_seed(e.base_seed, seed_stream::kSplit));

  const auto fit = fit_method(method, split.train.snapshots(), e, e.train.seed);
  TrainConfig recorded = e.train;
  if (method == Method::DKL) recorded.loss.weights = LossWeights::data_fit_only();
  auto j = model_to_json(fit.predictor, fit.history, &recorded);
  if (cfg.has_benchmark) j["benchmark"] = std::string(to_string(e.benchmark));

  const fs::path model = model_path.empty() ? fs::path(cfg.output) / "model.json" : fs::path(model_path);
  const fs::path hist = history_path.empty() ? fs::path(cfg.output) / "loss_history.csv" : fs::path(history_path);
  write_file(model, j.dump(2) + "\n");
  std::ostringstream os;
  write_loss_history_csv(os, fit.history);
  write_file(hist, os.str());
  if (fit.history.empty()) {
    std::printf("method=%s closed-form fit\n", std::string(to_string(method)).c_str());
  } else {
    const auto& last = fit.history.back();
    std::printf("method=%s iterations=%zu L_f=%.6g\n", std::string(to_string(method)).c_str(), last.iteration,
                last.total);
  }
  return kOk;
}

int cmd_eval(RunConfig cfg, const std::string& in_path, const std::string& model_path,
             const std::string& out_path, const std::string& traces_path) {
  const auto data = load_measured(in_path);
  auto in = open_in(model_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw UsageError("'" + model_path + "': " + ex.what());
  }
  const auto predictor = model_from_json(j);
  if (!cfg.has_benchmark && j.contains("benchmark")) apply_setting(cfg, "run.benchmark", j.at("benchmark").get<std::string>());
  settle_benchmark(cfg, data, false);
  if (predictor.state_dim() != data.base.state_dim() || predictor.input_dim() != data.base.input_dim()) {
    throw UsageError("model and data dimensions disagree");
  }
  const auto stats = evaluate_predictor(cfg.experiment, data, predictor);

  std::vector<std::string> traces;
  if (!traces_path.empty()) {
    write_file(traces_path, error_traces_csv(stats));
    traces.push_back(fs::path(traces_path).filename().string());
  }
  auto report = report_json(stats, traces);
  // the noise process behind a measured file is unknown; only w_max is
  report["noise"] = {{"kind", "unspecified"}, {"scale", data.noise_scale}};
  if (const auto errs = validate_report(report); !errs.empty()) throw std::logic_error("report: " + errs.front());
  write_file(out_path.empty() ? fs::path(cfg.output) / "report.json" : fs::path(out_path), report.dump(2) + "\n");
  const auto& m = stats.methods.front();
  std::printf("method=%s train_rmsd=%.6f test_rmsd=%.6f w_max=%.6f\n", std::string(to_string(m.method)).c_str(),
              m.train_mean, m.test_mean, stats.w_max);
  return kOk;
}

int cmd_compare(const RunConfig& cfg) {
  if (!cfg.has_benchmark) throw UsageError("compare: --benchmark is required");
  const auto stats = run_trials(cfg.experiment);
  const fs::path dir(cfg.output);
  const std::string bench(to_string(cfg.experiment.benchmark));
  const std::string traces = "traces_" + bench + ".csv";

  write_file(dir / traces, error_traces_csv(stats));
  write_file(dir / "table.txt", format_table({stats}));
  write_file(dir / "table.csv", table_csv(table_rows({stats})));
  const auto report = report_json(stats, {traces});
  write_file(dir / "report.json", report.dump(2) + "\n");
  {
    std::ostringstream os;
    write_config(os, cfg);
    write_file(dir / "run.ini", os.str());
  }
  std::cout << format_table({stats});

  for (const auto& f : stats.failures) {
    std::cerr << "trial " << f.trial << " " << to_string(f.method) << " failed: " << f.message << "\n";
  }
  std::size_t succeeded = 0;
  for (const auto& m : stats.methods) succeeded += m.trials.size();
  if (succeeded == 0 && !stats.failures.empty()) {
    return stats.failures.front().cause == TrialFailure::Cause::RankDeficient ? kRank : kNumeric;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman predictors from noisy measurements"};
  app.require_subcommand(1);
  Settings flags;
  std::string config_path, in_path, out_path, model_path, history_path, traces_path, x0, method = "dknd";

  auto* sim = app.add_subcommand("simulate", "simulate a benchmark under U(-1,1) excitation");
  sim->add_option("--config", config_path, "config file");
  setting(sim, "--benchmark", "run.benchmark", flags, "linear2d | cartpole | lander | vessel");
  setting(sim, "--T", "run.T", flags, "number of steps");
  setting(sim, "--seed", "run.seed", flags, "base seed");
  setting(sim, "--output", "run.output", flags, "output directory");
  sim->add_option("--x0", x0, "initial state, comma separated");
  sim->add_option("--out", out_path, "trajectory CSV path");

  auto* cor = app.add_subcommand("corrupt", "add measurement noise to a trajectory");
  cor->add_option("--config", config_path, "config file");
  cor->add_option("--in", in_path, "trajectory CSV")->required();
  cor->add_option("--out", out_path, "measured CSV path");
  setting(cor, "--seed", "run.seed", flags, "base seed");
  setting(cor, "--output", "run.output", flags, "output directory");
  noise_flags(cor, flags);

  auto* tr = app.add_subcommand("train", "fit one predictor on the training split");
  tr->add_option("--config", config_path, "config file");
  tr->add_option("--in", in_path, "measured CSV")->required();
  tr->add_option("--method", method, "dknd | dkl | mlp | dmdtls");
  tr->add_option("--model", model_path, "model JSON path");
  tr->add_option("--history", history_path, "loss history CSV path");
  setting(tr, "--benchmark", "run.benchmark", flags, "benchmark the data came from");
  setting(tr, "--seed", "train.seed", flags, "network initialization seed");
  setting(tr, "--split-seed", "run.seed", flags, "seed of a random split");
  setting(tr, "--output", "run.output", flags, "output directory");
  train_flags(tr, flags);
  split_flags(tr, flags);

  auto* ev = app.add_subcommand("eval", "score a trained model on the train and test splits");
  ev->add_option("--config", config_path, "config file");
  ev->add_option("--in", in_path, "measured CSV")->required();
  ev->add_option("--model", model_path, "model JSON")->required();
  ev->add_option("--out", out_path, "report JSON path");
  ev->add_option("--traces", traces_path, "per-step test error CSV path");
  setting(ev, "--benchmark", "run.benchmark", flags, "benchmark the data came from");
  setting(ev, "--split-seed", "run.seed", flags, "seed of a random split");
  setting(ev, "--output", "run.output", flags, "output directory");
  split_flags(ev, flags);

  auto* cmp = app.add_subcommand("compare", "run the multi-trial comparison");
  cmp->add_option("--config", config_path, "config file");
  setting(cmp, "--benchmark", "run.benchmark", flags, "linear2d | cartpole | lander | vessel");
  setting(cmp, "--T", "run.T", flags, "number of steps");
  setting(cmp, "--methods", "run.methods", flags, "comma separated, e.g. dknd,dkl,mlp,dmdtls");
  setting(cmp, "--trials", "run.trials", flags, "number of trials");
  setting(cmp, "--jobs", "run.jobs", flags, "concurrent trial workers");
  setting(cmp, "--seed", "run.seed", flags, "base seed");
  setting(cmp, "--out", "run.output", flags, "output directory");
  noise_flags(cmp, flags);
  train_flags(cmp, flags);
  split_flags(cmp, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg = resolve(config_path, flags);
    if (*sim) return cmd_simulate(cfg, x0, out_path);
    if (*cor) return cmd_corrupt(cfg, in_path, out_path);
    if (*tr) return cmd_train(cfg, in_path, method, model_path, history_path);
    if (*ev) return cmd_eval(cfg, in_path, model_path, out_path, traces_path);
    if (*cmp) return cmd_compare(cfg);
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << " (iteration " << e.iteration() << ")\n";
    return e.cause() == TrainingAborted::Cause::RankDeficient ? kRank : kNumeric;
  } catch (const RankDeficient& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRank;
  } catch (const SingularV11& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRank;
  } catch (const NonFinite& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const NoConvergence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const HorizonTooShort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TooFewSamples& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
