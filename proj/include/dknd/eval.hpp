#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dknd/baselines.hpp"
#include "dknd/dynamics.hpp"

namespace dknd {

/// splitmix64 finalizer of (parent, stream); the root of every RNG stream.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

namespace seed_stream {
inline constexpr std::uint64_t kExcitation = 1;
inline constexpr std::uint64_t kNoise = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kTrialBase = 1000;
}  // namespace seed_stream

/// Seed for the network initialization of a given trial.
std::uint64_t trial_init_seed(std::uint64_t base_seed, std::size_t trial);

enum class SplitMode { Chronological, Random };

std::string_view to_string(SplitMode m);
SplitMode parse_split_mode(std::string_view name);

/// Indexed pairs (y_k, u_k) with their targets y_{k+1} and x_{k+1}.
struct PairSet {
  std::vector<Eigen::Index> index;
  Matrix Y, U, Ynext, Xnext;

  Eigen::Index size() const { return static_cast<Eigen::Index>(index.size()); }
  Snapshots<double> snapshots() const { return {Y, Ynext, U}; }
};

struct SplitDataset {
  PairSet train, test;
  double fraction = 0.8;
  SplitMode mode = SplitMode::Chronological;
  bool true_targets = true;  ///< false: Xnext holds measurements (degraded mode)
};

/// Chronological: the first floor(fraction * T) pairs train, the rest test.
/// Random: a seeded permutation, each side kept in increasing index order.
SplitDataset split_dataset(const MeasuredTrajectory& measured, double fraction = 0.8,
                           SplitMode mode = SplitMode::Chronological, std::uint64_t seed = 0);

/// sqrt(mean_k ||x_{k+1} - f(y_k, u_k)||^2).
double rmsd(const OneStepPredictor& p, const PairSet& pairs);

/// ||x_{k+1} - f(y_k, u_k)|| for every pair.
Vector step_errors(const OneStepPredictor& p, const PairSet& pairs);

struct ExperimentConfig {
  Benchmark benchmark = Benchmark::Linear2D;
  std::size_t horizon = 0;  ///< 0: benchmark default
  std::optional<Vector> x0;
  NoiseSpec noise;
  std::optional<double> target_wmax;  ///< rescales noise so that w_max hits this value
  std::vector<Method> methods{Method::DKND, Method::DKL, Method::MLP, Method::DMDTLS};
  TrainConfig train;
  int lift_dim = 0;  ///< 0: benchmark default
  std::vector<int> hidden{512, 128};
  double split_fraction = 0.8;
  SplitMode split_mode = SplitMode::Chronological;
  std::size_t n_trials = 10;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;

  NetArchitecture observable_arch(int state_dim) const;
  void validate() const;
};

/// Simulated and corrupted dataset shared by every trial of an experiment.
MeasuredTrajectory make_dataset(const ExperimentConfig& cfg);

struct MethodStats {
  Method method;
  std::vector<double> train_rmsd, test_rmsd;        ///< per successful trial
  std::vector<std::size_t> trials;                  ///< trial ids matching the entries above
  std::vector<Vector> test_traces;                  ///< per successful trial, length |test|
  std::vector<std::uint64_t> data_hash;             ///< per successful trial
  double train_mean = 0, train_std = 0, test_mean = 0, test_std = 0;
};

struct TrialFailure {
  std::size_t trial;
  Method method;
  enum class Cause { RankDeficient, NonFinite, Other } cause;
  std::size_t iteration;
  std::string message;
};

struct TrialStats {
  ExperimentConfig config;
  double w_max = 0.0;
  double noise_scale = 1.0;
  bool true_targets = true;
  std::vector<Eigen::Index> test_index;
  std::vector<MethodStats> methods;
  std::vector<TrialFailure> failures;
};

/// Content hash of everything a method sees in one trial: split indices and
/// the measurement/target matrices of both sides.
std::uint64_t dataset_hash(const SplitDataset& split);

/// Mean and population standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v);

/// Trains one method on `data` with the network initialized from `init_seed`.
FitResult fit_method(Method method, const Snapshots<double>& data, const ExperimentConfig& cfg,
                     std::uint64_t init_seed);

/// Runs n_trials independent trainings per method on one dataset; network
/// initialization differs per trial. Failures are recorded, not thrown.
TrialStats run_trials(const ExperimentConfig& cfg);
TrialStats run_trials(const ExperimentConfig& cfg, const MeasuredTrajectory& data);

/// Scores an already trained predictor on cfg's split of `data` as a
/// single-trial, single-method result.
TrialStats evaluate_predictor(const ExperimentConfig& cfg, const MeasuredTrajectory& data,
                              const OneStepPredictor& predictor);

struct TableRow {
  std::string section;  ///< "train", "test" or "w_max"
  std::string method;
  std::string benchmark;
  double mean = 0.0;
  double std = 0.0;
};

std::vector<TableRow> table_rows(const std::vector<TrialStats>& stats);
/// Fixed-point, 4 decimals, rows = methods x {train, test} plus w_max.
std::string format_table(const std::vector<TrialStats>& stats);
std::string table_csv(const std::vector<TableRow>& rows);
std::vector<TableRow> parse_table_csv(const std::string& csv);

/// Columns k, then <method>_mean, <method>_min, <method>_max per method.
std::string error_traces_csv(const TrialStats& stats);

}  // namespace dknd
