#include "dknd/io.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace dknd {

json matrix_to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw Error("model file: matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw Error("model file: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) M(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return M;
}

json arch_to_json(const NetArchitecture& arch) {
  return {{"layer_dims", arch.layer_dims}, {"activation", "relu"}};
}

NetArchitecture arch_from_json(const json& j) {
  NetArchitecture arch;
  arch.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  if (j.value("activation", "relu") != "relu") throw Error("model file: unsupported activation");
  arch.validate();
  return arch;
}

namespace {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "gd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "gd" || s == "sgd") return OptimizerKind::GradientDescent;
  throw ConfigError("unknown optimizer '" + s + "'");
}

json double_or_string(double v) {
  // JSON has no infinity; spell it out
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double double_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error("model file: expected a number, got '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

json train_config_to_json(const TrainConfig& cfg) {
  const auto& w = cfg.loss.weights.values();
  return {{"weights", std::vector<double>(w.begin(), w.end())},
          {"cross_term", cfg.loss.cross_term == CrossTermForm::Compact ? "compact" : "per_sample"},
          {"reconstruction", cfg.loss.reconstruction == ReconstructionPairing::Current ? "current" : "next"},
          {"learning_rate", cfg.learning_rate},
          {"epochs", cfg.epochs},
          {"epsilon", double_or_string(cfg.terminal_accuracy)},
          {"seed", cfg.seed},
          {"optimizer", optimizer_name(cfg.optimizer)}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != 6) throw Error("model file: weights must have six entries");
  cfg.loss.weights = LossWeights({w[0], w[1], w[2], w[3], w[4], w[5]});
  cfg.loss.cross_term = j.value("cross_term", "compact") == "compact" ? CrossTermForm::Compact : CrossTermForm::PerSample;
  cfg.loss.reconstruction =
      j.value("reconstruction", "current") == "current" ? ReconstructionPairing::Current : ReconstructionPairing::Next;
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.terminal_accuracy = double_from(j.at("epsilon"));
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  return cfg;
}

json model_to_json(const OneStepPredictor& p, const std::vector<LossRecord>& history, const TrainConfig* config) {
  json j;
  j["kind"] = std::string(to_string(p.kind));
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KoopmanModel<double>>) {
          j["arch"] = arch_to_json(m.net.arch());
          j["theta"] = std::vector<double>(m.net.theta().data(), m.net.theta().data() + m.net.theta().size());
          j["A"] = matrix_to_json(m.A);
          j["B"] = matrix_to_json(m.B);
          j["C"] = matrix_to_json(m.C);
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          j["arch"] = arch_to_json(m.net.arch());
          j["theta"] = std::vector<double>(m.net.theta().data(), m.net.theta().data() + m.net.theta().size());
        } else {
          j["A_aug"] = matrix_to_json(m.A_aug);
        }
      },
      p.payload);
  if (config) {
    j["seed"] = config->seed;
    j["config"] = train_config_to_json(*config);
  }
  json hist = json::array();
  for (const auto& r : history) {
    hist.push_back({{"iteration", r.iteration}, {"L_f", r.total}, {"L_DKR", r.dkr}, {"L_w", r.noise}});
  }
  j["loss_history"] = std::move(hist);
  return j;
}

ModelFile model_file_from_json(const json& j) {
  ModelFile out{model_from_json(j), {}};
  if (j.contains("loss_history")) {
    for (const auto& r : j.at("loss_history")) {
      out.history.push_back({r.at("iteration").get<std::size_t>(), r.at("L_f").get<double>(),
                             r.at("L_DKR").get<double>(), r.at("L_w").get<double>()});
    }
  }
  return out;
}

OneStepPredictor model_from_json(const json& j) {
  const Method kind = parse_method(j.at("kind").get<std::string>());
  auto read_net = [&] {
    const auto arch = arch_from_json(j.at("arch"));
    const auto theta = j.at("theta").get<std::vector<double>>();
    return ObservableNet<double>(arch, Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size())));
  };
  switch (kind) {
    case Method::DKND:
    case Method::DKL: {
      KoopmanModel<double> m{matrix_from_json(j.at("A")), matrix_from_json(j.at("B")), matrix_from_json(j.at("C")),
                             read_net()};
      const Eigen::Index r = m.net.arch().output_dim();
      if (m.A.rows() != r || m.A.cols() != r || m.B.rows() != r || m.C.cols() != r ||
          m.C.rows() != m.net.arch().input_dim()) {
        throw ShapeMismatch("model file: matrix shapes disagree with the architecture");
      }
      return {kind, std::move(m)};
    }
    case Method::MLP: return {kind, MlpModel{read_net()}};
    case Method::DMDTLS: return {kind, TlsModel{matrix_from_json(j.at("A_aug"))}};
  }
  throw Error("model file: unknown model kind");
}

void write_loss_history_csv(std::ostream& os, const std::vector<LossRecord>& history) {
  os << "iteration,L_f,L_DKR,L_w\n";
  char buf[128];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.iteration, r.total, r.dkr, r.noise);
    os << buf;
  }
}

std::vector<LossRecord> read_loss_history_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != "iteration,L_f,L_DKR,L_w") throw ParseError(1, "unexpected header");
  std::vector<LossRecord> out;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    LossRecord r{};
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf%c", &r.iteration, &r.total, &r.dkr, &r.noise, &tail) != 4) {
      throw ParseError(lineno, "malformed loss record");
    }
    out.push_back(r);
  }
  return out;
}

namespace {

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json noise_to_json(const NoiseSpec& n, const std::optional<double>& target, double applied_scale) {
  json j{{"kind", std::string(to_string(n.kind))}, {"scale", applied_scale}};
  switch (n.kind) {
    case NoiseKind::Gaussian:
      j["mu"] = n.mu;
      j["sigma"] = n.sigma;
      break;
    case NoiseKind::PoissonCentered: j["lambda"] = n.lambda; break;
    case NoiseKind::Uniform:
      j["lo"] = n.lo;
      j["hi"] = n.hi;
      break;
    case NoiseKind::None: break;
  }
  if (target) j["target_wmax"] = *target;
  return j;
}

}  // namespace

json report_json(const TrialStats& stats, const std::vector<std::string>& trace_files) {
  const auto& cfg = stats.config;
  json methods = json::array();
  json table = json::object();
  json trials = json::array();
  for (const auto& m : stats.methods) {
    const std::string name(to_string(m.method));
    methods.push_back(name);
    table[name] = {{"train", {{"mean", m.train_mean}, {"std", m.train_std}, {"per_trial", m.train_rmsd}}},
                   {"test", {{"mean", m.test_mean}, {"std", m.test_std}, {"per_trial", m.test_rmsd}}},
                   {"trials", m.trials}};
  }
  for (std::size_t t = 0; t < cfg.n_trials; ++t) {
    json hashes = json::object();
    for (const auto& m : stats.methods) {
      for (std::size_t i = 0; i < m.trials.size(); ++i) {
        if (m.trials[i] == t) hashes[std::string(to_string(m.method))] = hex(m.data_hash[i]);
      }
    }
    trials.push_back({{"trial", t}, {"init_seed", trial_init_seed(cfg.base_seed, t)}, {"data_hash", hashes}});
  }
  json failures = json::array();
  for (const auto& f : stats.failures) {
    const char* cause = f.cause == TrialFailure::Cause::RankDeficient ? "rank_deficient"
                        : f.cause == TrialFailure::Cause::NonFinite   ? "non_finite"
                                                                      : "error";
    failures.push_back({{"trial", f.trial},
                        {"method", std::string(to_string(f.method))},
                        {"cause", cause},
                        {"iteration", f.iteration},
                        {"message", f.message}});
  }
  return {{"benchmark", std::string(to_string(cfg.benchmark))},
          {"noise", noise_to_json(cfg.noise, cfg.target_wmax, stats.noise_scale)},
          {"methods", methods},
          {"n_trials", cfg.n_trials},
          {"base_seed", cfg.base_seed},
          {"w_max", stats.w_max},
          {"split",
           {{"mode", std::string(to_string(cfg.split_mode))},
            {"fraction", cfg.split_fraction},
            {"target", stats.true_targets ? "true_state" : "measurement"},
            {"n_test", stats.test_index.size()}}},
          {"train_config", train_config_to_json(cfg.train)},
          {"table", table},
          {"trials", trials},
          {"failed_trials", failures},
          {"trace_files", trace_files}};
}

std::vector<std::string> validate_report(const json& r) {
  std::vector<std::string> errs;
  auto need = [&](const json& obj, const char* key, auto pred, const char* what) {
    if (!obj.is_object() || !obj.contains(key)) {
      errs.push_back(std::string("missing '") + key + "'");
      return false;
    }
    if (!pred(obj.at(key))) {
      errs.push_back(std::string("'") + key + "' must be " + what);
      return false;
    }
    return true;
  };
  const auto is_str = [](const json& v) { return v.is_string(); };
  const auto is_num = [](const json& v) { return v.is_number(); };
  const auto is_obj = [](const json& v) { return v.is_object(); };
  const auto is_arr = [](const json& v) { return v.is_array(); };
  const auto is_count = [](const json& v) { return v.is_number_unsigned() && v.get<std::uint64_t>() >= 1; };

  if (!r.is_object()) return {"report must be an object"};
  need(r, "benchmark", is_str, "a string");
  if (need(r, "noise", is_obj, "an object")) need(r.at("noise"), "kind", is_str, "a string");
  need(r, "n_trials", is_count, "a positive integer");
  if (need(r, "w_max", is_num, "a number") && r.at("w_max").get<double>() < 0) errs.push_back("'w_max' must be >= 0");
  need(r, "trace_files", is_arr, "an array");
  need(r, "failed_trials", is_arr, "an array");
  if (need(r, "methods", is_arr, "an array") && need(r, "table", is_obj, "an object")) {
    for (const auto& m : r.at("methods")) {
      if (!m.is_string()) {
        errs.push_back("method names must be strings");
        continue;
      }
      const auto name = m.get<std::string>();
      if (!r.at("table").contains(name)) {
        errs.push_back("table lacks method '" + name + "'");
        continue;
      }
      const auto& cell = r.at("table").at(name);
      for (const char* side : {"train", "test"}) {
        if (!need(cell, side, is_obj, "an object")) continue;
        const auto& s = cell.at(side);
        // NaN (all trials failed) serializes as null
        auto num_or_null = [](const json& v) { return v.is_number() || v.is_null(); };
        need(s, "mean", num_or_null, "a number");
        if (need(s, "std", num_or_null, "a number") && s.at("std").is_number() && s.at("std").get<double>() < 0) {
          errs.push_back("std must be >= 0");
        }
        need(s, "per_trial", is_arr, "an array");
      }
    }
  }
  if (need(r, "trials", is_arr, "an array")) {
    for (const auto& t : r.at("trials")) {
      need(t, "trial", [](const json& v) { return v.is_number_unsigned(); }, "an integer");
      need(t, "data_hash", is_obj, "an object");
    }
  }
  return errs;
}

}  // namespace dknd
