#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dknd/eval.hpp"

namespace dknd {

/// Everything one CLI invocation needs. Serialized as `[section]` blocks of
/// `key = value` lines; see apply_setting() for the accepted keys.
struct RunConfig {
  ExperimentConfig experiment;
  bool has_benchmark = false;
  std::string output = ".";
};

/// `section.key` -> raw value, in file order. `#` and `;` start comments.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& is);

/// Applies one setting such as `train.lr` = `1e-3`. Throws ConfigError for
/// unknown keys or malformed values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig load_config(std::istream& is);
void write_config(std::ostream& os, const RunConfig& cfg);

/// Throws ConfigError on violated preconditions; returns warnings for
/// suspicious but allowed settings (a lift width below the state dimension).
std::vector<std::string> validate_config(const RunConfig& cfg);

std::vector<Method> parse_method_list(const std::string& csv);
std::vector<int> parse_int_list(const std::string& csv);

}  // namespace dknd
