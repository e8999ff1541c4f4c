#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "dknd/baselines.hpp"
#include "dknd/eval.hpp"

namespace dknd {

using json = nlohmann::json;

json matrix_to_json(const Matrix& M);  ///< array of rows
Matrix matrix_from_json(const json& j);

json arch_to_json(const NetArchitecture& arch);
NetArchitecture arch_from_json(const json& j);

json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

/// Model envelope shared by every method:
/// {kind, arch, seed, theta, A, B, C, loss_history, config} for the Koopman
/// methods, {kind, arch, seed, theta, ...} for MLP and {kind, A_aug} for TLS.
json model_to_json(const OneStepPredictor& p, const std::vector<LossRecord>& history = {},
                   const TrainConfig* config = nullptr);
OneStepPredictor model_from_json(const json& j);

struct ModelFile {
  OneStepPredictor predictor;
  std::vector<LossRecord> history;
};
ModelFile model_file_from_json(const json& j);

/// iteration,L_f,L_DKR,L_w
void write_loss_history_csv(std::ostream& os, const std::vector<LossRecord>& history);
std::vector<LossRecord> read_loss_history_csv(std::istream& is);

/// {benchmark, noise, methods[], n_trials, w_max, table{...}, trace_files[...], ...}
json report_json(const TrialStats& stats, const std::vector<std::string>& trace_files);

/// Empty when the document matches the report layout; otherwise one message
/// per violation.
std::vector<std::string> validate_report(const json& report);

}  // namespace dknd
