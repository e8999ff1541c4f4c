#include <cmath>
#include <memory>
#include <utility>

#include "dknd/training.hpp"

namespace dknd {

void Optimizer::step(Vector& theta, const Vector& grad) {
  ++t_;
  if (kind_ == OptimizerKind::GradientDescent) {
    theta.noalias() -= lr_ * grad;
    return;
  }
  if (m_.size() != theta.size()) {
    m_ = Vector::Zero(theta.size());
    v_ = Vector::Zero(theta.size());
  }
  m_ = adam_.beta1 * m_ + (1.0 - adam_.beta1) * grad;
  v_ = adam_.beta2 * v_ + (1.0 - adam_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
  theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + adam_.eps);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(terminal_accuracy >= 0.0)) throw ConfigError("terminal accuracy must be >= 0");
}

namespace {

LossState<double> evaluate_state(const ObservableNet<double>& net, const Snapshots<double>& data,
                                 const LossConfig& loss, std::size_t iteration) {
  try {
    return LossState<double>(net, data, loss);
  } catch (const RankDeficient& e) {
    throw TrainingAborted(TrainingAborted::Cause::RankDeficient, iteration,
                          "rank assumption violated at iteration " + std::to_string(iteration) + ": " +
                              e.what());
  }
}

}  // namespace

TrainResult train_dknd(const Snapshots<double>& data, const NetArchitecture& arch, const TrainConfig& config) {
  return train_dknd(data, init_network<double>(arch, config.seed), config);
}

TrainResult train_dknd(const Snapshots<double>& data, ObservableNet<double> net, const TrainConfig& config) {
  config.validate();
  detail::check_snapshots(data, net.arch());
  // NaN data would otherwise surface as a failed rank check
  if (!data.Y.allFinite() || !data.Ybar.allFinite() || !data.U.allFinite()) {
    throw TrainingAborted(TrainingAborted::Cause::NonFiniteLoss, 0, "training data has non-finite entries");
  }

  TrainResult result;
  Optimizer opt(config.optimizer, config.learning_rate);
  auto state = std::make_unique<LossState<double>>(evaluate_state(net, data, config.loss, 0));
  result.initial_loss = state->total();
  result.history.reserve(config.epochs);

  for (std::size_t i = 1; i <= config.epochs; ++i) {
    const Vector grad = state->gradient();
    if (!grad.allFinite()) {
      throw TrainingAborted(TrainingAborted::Cause::NonFiniteLoss, i, "non-finite gradient at iteration " +
                                                                          std::to_string(i));
    }
    opt.step(net.theta(), grad);
    state = std::make_unique<LossState<double>>(evaluate_state(net, data, config.loss, i));
    const LossRecord rec{i, state->total(), state->dkr(), state->noise_term()};
    if (!std::isfinite(rec.total)) {
      throw TrainingAborted(TrainingAborted::Cause::NonFiniteLoss, i,
                            "non-finite loss at iteration " + std::to_string(i));
    }
    result.history.push_back(rec);
    if (rec.total < config.terminal_accuracy) {
      result.stop = StopReason::TerminalAccuracy;
      break;
    }
  }

  const auto& km = state->matrices();
  result.model = KoopmanModel<double>{km.A, km.B, km.C, std::move(net)};
  return result;
}

}  // namespace dknd
