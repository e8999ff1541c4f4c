#pragma once

#include <string_view>
#include <variant>
#include <vector>

#include "dknd/koopman.hpp"
#include "dknd/training.hpp"

namespace dknd {

enum class Method { DKND, DKL, MLP, DMDTLS };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

/// Next-state regressor on the stacked input [y; u].
struct MlpModel {
  ObservableNet<double> net;
};

/// y_{k+1} ~ A_aug [y_k; u_k].
struct TlsModel {
  Matrix A_aug;  ///< n x (n+m)
};

struct OneStepPredictor {
  Method kind;
  std::variant<KoopmanModel<double>, MlpModel, TlsModel> payload;

  Eigen::Index state_dim() const;
  Eigen::Index input_dim() const;
};

struct FitResult {
  OneStepPredictor predictor;
  std::vector<LossRecord> history;  ///< empty for DMDTLS
};

FitResult train_dknd_predictor(const Snapshots<double>& data, const NetArchitecture& arch,
                               const TrainConfig& config);

/// DKND with the loss weights forced to (1/2, 1/2, 0, 0, 0, 0).
FitResult train_dkl(const Snapshots<double>& data, const NetArchitecture& arch, TrainConfig config);

/// MLP [n+m, hidden..., n] fit by the configured optimizer on
/// (1/2T) sum_k ||y_{k+1} - mlp([y_k; u_k])||^2.
FitResult train_mlp(const Snapshots<double>& data, const std::vector<int>& hidden, const TrainConfig& config);

/// MLP architecture for the stacked input: [n+m, hidden..., n].
NetArchitecture mlp_arch(int state_dim, int input_dim, const std::vector<int>& hidden = {512, 128});

/// Total-least-squares fit through the SVD of [Y; U; Ybar]. Requires T > 2(n+m).
TlsModel train_dmd_tls(const Snapshots<double>& data);

/// Orthogonal (total) residual of the data [Y; U; Ybar] against the
/// hyperplane {[z; A_aug z]}.
double tls_orthogonal_residual(const Snapshots<double>& data, const Matrix& A_aug);

/// Batch prediction: columns of Y (n x K) and U (m x K).
Matrix predict(const OneStepPredictor& p, const Matrix& Y, const Matrix& U);
Vector predict(const OneStepPredictor& p, const Vector& y, const Vector& u);

}  // namespace dknd
