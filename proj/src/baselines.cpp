#include "dknd/baselines.hpp"

#include <cmath>

#include "dknd/linalg.hpp"

namespace dknd {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::DKND: return "dknd";
    case Method::DKL: return "dkl";
    case Method::MLP: return "mlp";
    case Method::DMDTLS: return "dmdtls";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "dknd") return Method::DKND;
  if (name == "dkl") return Method::DKL;
  if (name == "mlp") return Method::MLP;
  if (name == "dmdtls" || name == "tls") return Method::DMDTLS;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

Eigen::Index OneStepPredictor::state_dim() const {
  return std::visit(
      [](const auto& m) -> Eigen::Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KoopmanModel<double>>) return m.C.rows();
        else if constexpr (std::is_same_v<T, MlpModel>) return m.net.arch().output_dim();
        else return m.A_aug.rows();
      },
      payload);
}

Eigen::Index OneStepPredictor::input_dim() const {
  return std::visit(
      [](const auto& m) -> Eigen::Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, KoopmanModel<double>>) return m.B.cols();
        else if constexpr (std::is_same_v<T, MlpModel>) return m.net.arch().input_dim() - m.net.arch().output_dim();
        else return m.A_aug.cols() - m.A_aug.rows();
      },
      payload);
}

FitResult train_dknd_predictor(const Snapshots<double>& data, const NetArchitecture& arch,
                               const TrainConfig& config) {
  auto res = train_dknd(data, arch, config);
  return {{Method::DKND, std::move(res.model)}, std::move(res.history)};
}

FitResult train_dkl(const Snapshots<double>& data, const NetArchitecture& arch, TrainConfig config) {
  config.loss.weights = LossWeights::data_fit_only();
  auto res = train_dknd(data, arch, config);
  return {{Method::DKL, std::move(res.model)}, std::move(res.history)};
}

NetArchitecture mlp_arch(int state_dim, int input_dim, const std::vector<int>& hidden) {
  NetArchitecture arch;
  arch.layer_dims.push_back(state_dim + input_dim);
  arch.layer_dims.insert(arch.layer_dims.end(), hidden.begin(), hidden.end());
  arch.layer_dims.push_back(state_dim);
  return arch;
}

namespace {

Matrix stack(const Matrix& a, const Matrix& b) {
  Matrix z(a.rows() + b.rows(), a.cols());
  z << a, b;
  return z;
}

}  // namespace

FitResult train_mlp(const Snapshots<double>& data, const std::vector<int>& hidden, const TrainConfig& config) {
  config.validate();
  const auto n = static_cast<int>(data.Y.rows());
  const auto m = static_cast<int>(data.U.rows());
  const Eigen::Index T = data.horizon();
  if (T < 1) throw TooFewSamples("train_mlp: no training pairs");
  auto net = init_network<double>(mlp_arch(n, m, hidden), config.seed);
  const Matrix inputs = stack(data.Y, data.U);
  Optimizer opt(config.optimizer, config.learning_rate);
  std::vector<LossRecord> history;
  history.reserve(config.epochs);

  const double s = 1.0 / (2.0 * static_cast<double>(T));
  auto [pred, cache] = forward(net, inputs);
  for (std::size_t i = 1; i <= config.epochs; ++i) {
    const Matrix residual = pred - data.Ybar;
    const Vector grad = backward(net, cache, 2.0 * s * residual).theta;
    opt.step(net.theta(), grad);
    std::tie(pred, cache) = forward(net, inputs);
    const double loss = s * (pred - data.Ybar).squaredNorm();
    if (!std::isfinite(loss)) {
      throw TrainingAborted(TrainingAborted::Cause::NonFiniteLoss, i,
                            "MLP loss became non-finite at iteration " + std::to_string(i));
    }
    history.push_back({i, loss, loss, 0.0});
    if (loss < config.terminal_accuracy) break;
  }
  return {{Method::MLP, MlpModel{std::move(net)}}, std::move(history)};
}

TlsModel train_dmd_tls(const Snapshots<double>& data) {
  const Eigen::Index n = data.Y.rows(), m = data.U.rows(), T = data.horizon();
  const Eigen::Index q = n + m;
  if (T <= 2 * q) {
    throw HorizonTooShort("DMD-TLS needs T > 2(n+m) = " + std::to_string(2 * q) + " pairs, got " +
                          std::to_string(T));
  }
  Matrix Z(2 * n + m, T);
  Z << data.Y, data.U, data.Ybar;
  // Samples as rows; V spans the principal (n+m)-dimensional subspace.
  const auto f = svd(Z.transpose());
  const Matrix V11 = f.V.topLeftCorner(q, q);
  const Matrix V21 = f.V.bottomLeftCorner(n, q);
  Eigen::FullPivLU<Matrix> lu(V11);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw SingularV11("DMD-TLS: leading block of the singular subspace is singular");
  return {V21 * lu.inverse()};
}

double tls_orthogonal_residual(const Snapshots<double>& data, const Matrix& A_aug) {
  const Eigen::Index n = data.Y.rows(), m = data.U.rows();
  Matrix Z(2 * n + m, data.horizon());
  Z << data.Y, data.U, data.Ybar;
  Matrix basis(2 * n + m, n + m);
  basis << Matrix::Identity(n + m, n + m), A_aug;
  const Eigen::HouseholderQR<Matrix> qr(basis);
  const Matrix Q = qr.householderQ() * Matrix::Identity(basis.rows(), basis.cols());
  return (Z - Q * (Q.transpose() * Z)).squaredNorm();
}

Matrix predict(const OneStepPredictor& p, const Matrix& Y, const Matrix& U) {
  if (Y.rows() != p.state_dim() || U.rows() != p.input_dim() || Y.cols() != U.cols()) {
    throw ShapeMismatch("predict: state/input dimensions do not match the model");
  }
  return std::visit(
      [&](const auto& model) -> Matrix {
        using T = std::decay_t<decltype(model)>;
        if constexpr (std::is_same_v<T, KoopmanModel<double>>) {
          return predict_batch(model, Y, U);
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          return evaluate(model.net, stack(Y, U));
        } else {
          return model.A_aug * stack(Y, U);
        }
      },
      p.payload);
}

Vector predict(const OneStepPredictor& p, const Vector& y, const Vector& u) {
  return predict(p, Matrix(y), Matrix(u)).col(0);
}

}  // namespace dknd
