#include "dknd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace dknd {

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  std::uint64_t z = parent + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t trial_init_seed(std::uint64_t base_seed, std::size_t trial) {
  return derive_seed(derive_seed(base_seed, seed_stream::kTrialBase + trial), seed_stream::kInit);
}

std::string_view to_string(SplitMode m) {
  return m == SplitMode::Chronological ? "chronological" : "random";
}

SplitMode parse_split_mode(std::string_view name) {
  if (name == "chronological") return SplitMode::Chronological;
  if (name == "random") return SplitMode::Random;
  throw ConfigError("unknown split mode '" + std::string(name) + "'");
}

namespace {

PairSet gather(const MeasuredTrajectory& mt, std::vector<Eigen::Index> idx) {
  const Eigen::Index n = mt.measurements.rows(), m = mt.base.inputs.rows();
  const auto K = static_cast<Eigen::Index>(idx.size());
  PairSet p;
  p.Y.resize(n, K);
  p.U.resize(m, K);
  p.Ynext.resize(n, K);
  p.Xnext.resize(n, K);
  for (Eigen::Index j = 0; j < K; ++j) {
    const Eigen::Index k = idx[static_cast<std::size_t>(j)];
    p.Y.col(j) = mt.measurements.col(k);
    p.U.col(j) = mt.base.inputs.col(k);
    p.Ynext.col(j) = mt.measurements.col(k + 1);
    p.Xnext.col(j) = mt.has_true_states ? mt.base.states.col(k + 1) : mt.measurements.col(k + 1);
  }
  p.index = std::move(idx);
  return p;
}

}  // namespace

SplitDataset split_dataset(const MeasuredTrajectory& measured, double fraction, SplitMode mode,
                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  const Eigen::Index T = measured.base.inputs.cols();
  const auto n_train = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(T)));
  if (n_train < 1 || n_train >= T) {
    throw TooFewSamples("split of " + std::to_string(T) + " pairs leaves one side empty");
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (mode == SplitMode::Random) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Eigen::Index> tr(order.begin(), order.begin() + n_train);
  std::vector<Eigen::Index> te(order.begin() + n_train, order.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());

  SplitDataset out;
  out.train = gather(measured, std::move(tr));
  out.test = gather(measured, std::move(te));
  out.fraction = fraction;
  out.mode = mode;
  out.true_targets = measured.has_true_states;
  return out;
}

Vector step_errors(const OneStepPredictor& p, const PairSet& pairs) {
  if (pairs.size() == 0) throw EmptyDataset("no pairs to evaluate");
  return (pairs.Xnext - predict(p, pairs.Y, pairs.U)).colwise().norm().transpose();
}

double rmsd(const OneStepPredictor& p, const PairSet& pairs) {
  if (pairs.size() == 0) throw EmptyDataset("rmsd: empty dataset");
  const Matrix residual = pairs.Xnext - predict(p, pairs.Y, pairs.U);
  return std::sqrt(residual.squaredNorm() / static_cast<double>(pairs.size()));
}

NetArchitecture ExperimentConfig::observable_arch(int state_dim) const {
  const int r = lift_dim > 0 ? lift_dim : benchmark_info(benchmark).lift_dim;
  NetArchitecture arch;
  arch.layer_dims.push_back(state_dim);
  arch.layer_dims.insert(arch.layer_dims.end(), hidden.begin(), hidden.end());
  arch.layer_dims.push_back(r);
  return arch;
}

void ExperimentConfig::validate() const {
  noise.validate();
  train.validate();
  if (n_trials < 1) throw ConfigError("need at least one trial");
  if (methods.empty()) throw ConfigError("no methods requested");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  if (lift_dim < 0) throw ConfigError("lift dimension must be positive");
  for (int h : hidden) {
    if (h <= 0) throw ConfigError("hidden widths must be positive");
  }
  if (target_wmax && !(*target_wmax >= 0.0)) throw ConfigError("target w_max must be >= 0");
}

MeasuredTrajectory make_dataset(const ExperimentConfig& cfg) {
  const auto info = benchmark_info(cfg.benchmark);
  const std::size_t T = cfg.horizon ? cfg.horizon : info.horizon;
  const Vector x0 = cfg.x0 ? *cfg.x0 : info.x0;
  const auto traj = simulate(cfg.benchmark, x0, T, derive_seed(cfg.base_seed, seed_stream::kExcitation));
  NoiseSpec spec = cfg.noise;
  spec.seed = derive_seed(cfg.base_seed, seed_stream::kNoise);
  return cfg.target_wmax ? corrupt_to_wmax(traj, spec, *cfg.target_wmax) : corrupt(traj, spec);
}

std::uint64_t dataset_hash(const SplitDataset& split) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto feed_matrix = [&](const Matrix& M) {
    const Eigen::Index dims[2] = {M.rows(), M.cols()};
    feed(dims, sizeof dims);
    feed(M.data(), sizeof(double) * static_cast<std::size_t>(M.size()));
  };
  for (const PairSet* p : {&split.train, &split.test}) {
    feed(p->index.data(), sizeof(Eigen::Index) * p->index.size());
    feed_matrix(p->Y);
    feed_matrix(p->U);
    feed_matrix(p->Ynext);
    feed_matrix(p->Xnext);
  }
  return h;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

namespace {

}  // namespace

FitResult fit_method(Method method, const Snapshots<double>& data, const ExperimentConfig& cfg,
                     std::uint64_t init_seed) {
  TrainConfig tc = cfg.train;
  tc.seed = init_seed;
  const int n = static_cast<int>(data.Y.rows());
  switch (method) {
    case Method::DKND: return train_dknd_predictor(data, cfg.observable_arch(n), tc);
    case Method::DKL: return train_dkl(data, cfg.observable_arch(n), tc);
    case Method::MLP: return train_mlp(data, cfg.hidden, tc);
    case Method::DMDTLS: return {{Method::DMDTLS, train_dmd_tls(data)}, {}};
  }
  throw ConfigError("unknown method");
}

namespace {

struct TrialOutcome {
  bool ok = false;
  double train = 0.0, test = 0.0;
  Vector trace;
  std::uint64_t hash = 0;
  std::optional<TrialFailure> failure;
};

TrialOutcome run_one(Method method, std::size_t trial, const SplitDataset& split, const ExperimentConfig& cfg) {
  TrialOutcome out;
  out.hash = dataset_hash(split);
  try {
    const auto predictor = fit_method(method, split.train.snapshots(), cfg, trial_init_seed(cfg.base_seed, trial)).predictor;
    out.train = rmsd(predictor, split.train);
    out.test = rmsd(predictor, split.test);
    out.trace = step_errors(predictor, split.test);
    if (!std::isfinite(out.train) || !std::isfinite(out.test)) {
      throw NonFinite("prediction error is not finite");
    }
    out.ok = true;
  } catch (const TrainingAborted& e) {
    out.failure = TrialFailure{trial, method,
                               e.cause() == TrainingAborted::Cause::RankDeficient ? TrialFailure::Cause::RankDeficient
                                                                                  : TrialFailure::Cause::NonFinite,
                               e.iteration(), e.what()};
  } catch (const RankDeficient& e) {
    out.failure = TrialFailure{trial, method, TrialFailure::Cause::RankDeficient, 0, e.what()};
  } catch (const NonFinite& e) {
    out.failure = TrialFailure{trial, method, TrialFailure::Cause::NonFinite, 0, e.what()};
  } catch (const Error& e) {
    out.failure = TrialFailure{trial, method, TrialFailure::Cause::Other, 0, e.what()};
  }
  return out;
}

}  // namespace

namespace {
TrialStats collect(const ExperimentConfig& cfg, const MeasuredTrajectory& data, const SplitDataset& split,
                   std::vector<TrialOutcome>& outcomes);
}  // namespace

TrialStats run_trials(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_trials(cfg, make_dataset(cfg));
}

TrialStats run_trials(const ExperimentConfig& cfg, const MeasuredTrajectory& data) {
  cfg.validate();
  const auto split = split_dataset(data, cfg.split_fraction, cfg.split_mode,
                                   derive_seed(cfg.base_seed, seed_stream::kSplit));

  const std::size_t n_methods = cfg.methods.size();
  const std::size_t jobs_total = cfg.n_trials * n_methods;
  std::vector<TrialOutcome> outcomes(jobs_total);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs_total; j = next++) {
      outcomes[j] = run_one(cfg.methods[j % n_methods], j / n_methods, split, cfg);
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.jobs, jobs_total));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  return collect(cfg, data, split, outcomes);
}

TrialStats evaluate_predictor(const ExperimentConfig& cfg, const MeasuredTrajectory& data,
                              const OneStepPredictor& predictor) {
  cfg.validate();
  const auto split = split_dataset(data, cfg.split_fraction, cfg.split_mode,
                                   derive_seed(cfg.base_seed, seed_stream::kSplit));
  ExperimentConfig one = cfg;
  one.methods = {predictor.kind};
  one.n_trials = 1;
  std::vector<TrialOutcome> outcomes(1);
  auto& o = outcomes[0];
  o.hash = dataset_hash(split);
  o.train = rmsd(predictor, split.train);
  o.test = rmsd(predictor, split.test);
  o.trace = step_errors(predictor, split.test);
  o.ok = std::isfinite(o.train) && std::isfinite(o.test);
  if (!o.ok) o.failure = TrialFailure{0, predictor.kind, TrialFailure::Cause::NonFinite, 0, "prediction error is not finite"};
  return collect(one, data, split, outcomes);
}

namespace {

TrialStats collect(const ExperimentConfig& cfg, const MeasuredTrajectory& data, const SplitDataset& split,
                   std::vector<TrialOutcome>& outcomes) {
  const std::size_t n_methods = cfg.methods.size();
  TrialStats stats;
  stats.config = cfg;
  stats.w_max = data.w_max_empirical;
  stats.noise_scale = data.noise_scale;
  stats.true_targets = split.true_targets;
  stats.test_index = split.test.index;
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    MethodStats ms;
    ms.method = cfg.methods[mi];
    for (std::size_t t = 0; t < cfg.n_trials; ++t) {
      auto& o = outcomes[t * n_methods + mi];
      if (!o.ok) {
        stats.failures.push_back(*o.failure);
        continue;
      }
      ms.trials.push_back(t);
      ms.train_rmsd.push_back(o.train);
      ms.test_rmsd.push_back(o.test);
      ms.test_traces.push_back(std::move(o.trace));
      ms.data_hash.push_back(o.hash);
    }
    std::tie(ms.train_mean, ms.train_std) = mean_std(ms.train_rmsd);
    std::tie(ms.test_mean, ms.test_std) = mean_std(ms.test_rmsd);
    stats.methods.push_back(std::move(ms));
  }
  return stats;
}

}  // namespace

namespace {

std::string number(double v, const char* fmt = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<TableRow> table_rows(const std::vector<TrialStats>& stats) {
  std::vector<TableRow> rows;
  for (const char* section : {"train", "test"}) {
    for (const auto& s : stats) {
      for (const auto& m : s.methods) {
        const bool train = std::strcmp(section, "train") == 0;
        rows.push_back({section, std::string(to_string(m.method)), std::string(to_string(s.config.benchmark)),
                        train ? m.train_mean : m.test_mean, train ? m.train_std : m.test_std});
      }
    }
  }
  for (const auto& s : stats) rows.push_back({"w_max", "-", std::string(to_string(s.config.benchmark)), s.w_max, 0.0});
  return rows;
}

std::string format_table(const std::vector<TrialStats>& stats) {
  std::vector<std::string> benches;
  std::vector<std::string> methods;
  for (const auto& s : stats) {
    const std::string b(to_string(s.config.benchmark));
    if (std::find(benches.begin(), benches.end(), b) == benches.end()) benches.push_back(b);
    for (const auto& m : s.methods) {
      const std::string name(to_string(m.method));
      if (std::find(methods.begin(), methods.end(), name) == methods.end()) methods.push_back(name);
    }
  }
  const auto rows = table_rows(stats);
  auto cell = [&](const std::string& section, const std::string& method, const std::string& bench) -> std::string {
    for (const auto& r : rows) {
      if (r.section == section && r.method == method && r.benchmark == bench) {
        if (section == "w_max") return number(r.mean, "%.4f");
        return number(r.mean, "%.4f") + "±" + number(r.std, "%.4f");
      }
    }
    return "n/a";
  };

  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-14s %-8s", "RMSD", "Method");
  os << buf;
  for (const auto& b : benches) {
    std::snprintf(buf, sizeof buf, " %-18s", b.c_str());
    os << buf;
  }
  os << '\n';
  for (const std::string section : {"train", "test"}) {
    bool first = true;
    for (const auto& m : methods) {
      std::snprintf(buf, sizeof buf, "%-14s %-8s", first ? (section == "train" ? "Training data" : "Testing data") : "",
                    upper(m).c_str());
      os << buf;
      for (const auto& b : benches) {
        // the ± sign is two bytes, pad by hand
        const std::string c = cell(section, m, b);
        os << ' ' << c << std::string(c.size() < 19 ? 19 - c.size() : 0, ' ');
      }
      os << '\n';
      first = false;
    }
  }
  std::snprintf(buf, sizeof buf, "%-14s %-8s", "w_max", "-");
  os << buf;
  for (const auto& b : benches) {
    std::snprintf(buf, sizeof buf, " %-18s", cell("w_max", "-", b).c_str());
    os << buf;
  }
  os << '\n';
  return os.str();
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << "section,method,benchmark,mean,std\n";
  for (const auto& r : rows) {
    os << r.section << ',' << r.method << ',' << r.benchmark << ',' << number(r.mean) << ',' << number(r.std) << '\n';
  }
  return os.str();
}

std::vector<TableRow> parse_table_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != "section,method,benchmark,mean,std") {
    throw ParseError(1, "unexpected table header");
  }
  std::vector<TableRow> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string item;
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 5) throw ParseError(lineno, "expected 5 fields");
    char* end = nullptr;
    TableRow r{f[0], f[1], f[2], std::strtod(f[3].c_str(), &end), 0.0};
    if (*end) throw ParseError(lineno, "malformed mean");
    r.std = std::strtod(f[4].c_str(), &end);
    if (*end) throw ParseError(lineno, "malformed std");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string error_traces_csv(const TrialStats& stats) {
  std::ostringstream os;
  os << "k";
  for (const auto& m : stats.methods) {
    const std::string name(to_string(m.method));
    os << ',' << name << "_mean," << name << "_min," << name << "_max";
  }
  os << '\n';
  for (std::size_t j = 0; j < stats.test_index.size(); ++j) {
    os << stats.test_index[j];
    for (const auto& m : stats.methods) {
      if (m.test_traces.empty()) {
        os << ",nan,nan,nan";
        continue;
      }
      double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& tr : m.test_traces) {
        const double e = tr(static_cast<Eigen::Index>(j));
        sum += e;
        lo = std::min(lo, e);
        hi = std::max(hi, e);
      }
      const double mean = std::clamp(sum / static_cast<double>(m.test_traces.size()), lo, hi);
      os << ',' << number(mean) << ',' << number(lo) << ','
         << number(hi);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace dknd
