#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dknd/koopman.hpp"

namespace dknd {

enum class OptimizerKind { GradientDescent, Adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Constant-step first-order optimizer over a flat parameter vector.
class Optimizer {
public:
  Optimizer(OptimizerKind kind, double learning_rate, AdamParams adam = {})
      : kind_(kind), lr_(learning_rate), adam_(adam) {}

  void step(Vector& theta, const Vector& grad);
  std::size_t steps() const { return t_; }

private:
  OptimizerKind kind_;
  double lr_;
  AdamParams adam_;
  Vector m_, v_;
  std::size_t t_ = 0;
};

/// Defaults follow the reference training setup: Adam, lr 1e-5, 1e4 epochs, eps 1e-4.
struct TrainConfig {
  LossConfig loss;
  double learning_rate = 1e-5;
  std::size_t epochs = 10000;
  double terminal_accuracy = 1e-4;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::Adam;

  void validate() const;
};

struct LossRecord {
  std::size_t iteration;  ///< 1-based: loss after the i-th parameter update
  double total;           ///< L_f
  double dkr;             ///< L_DKR
  double noise;           ///< L_w
};

enum class StopReason { TerminalAccuracy, EpochLimit };

struct TrainResult {
  KoopmanModel<double> model;
  std::vector<LossRecord> history;
  StopReason stop = StopReason::EpochLimit;
  double initial_loss = 0.0;
};

/// Alternating scheme: gradient step on theta with (A, B, C) fixed, then a
/// closed-form re-solve of (A, B, C); stops once L_f < terminal_accuracy or
/// after `epochs` updates. Throws TrainingAborted on rank loss or a
/// non-finite loss.
TrainResult train_dknd(const Snapshots<double>& data, const NetArchitecture& arch, const TrainConfig& config);

/// Same as above, starting from an existing network.
TrainResult train_dknd(const Snapshots<double>& data, ObservableNet<double> net, const TrainConfig& config);

}  // namespace dknd
