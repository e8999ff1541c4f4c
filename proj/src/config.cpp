#include "dknd/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace dknd {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  if (v == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

template <typename Fn>
auto wrap(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<Method> parse_method_list(const std::string& csv) {
  std::vector<Method> out;
  for (const auto& m : split_list(csv)) out.push_back(parse_method(m));
  if (out.empty()) throw ConfigError("method list is empty");
  return out;
}

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  for (const auto& s : split_list(csv)) out.push_back(static_cast<int>(to_u64("list", s)));
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    std::string s = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(lineno, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ParseError(lineno, "empty key");
    out.emplace_back(section.empty() ? key : section + "." + key, trim(s.substr(eq + 1)));
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  static const std::map<std::string, std::function<void(RunConfig&, const std::string&, const std::string&)>> table = {
      {"run.benchmark",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.benchmark = wrap(k, [&] { return parse_benchmark(v); });
         c.has_benchmark = true;
       }},
      {"run.T", [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.horizon = to_u64(k, v); }},
      {"run.seed",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.base_seed = to_u64(k, v); }},
      {"run.trials",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.n_trials = to_u64(k, v); }},
      {"run.jobs", [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.jobs = to_u64(k, v); }},
      {"run.methods",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.methods = wrap(k, [&] { return parse_method_list(v); });
       }},
      {"run.output", [](RunConfig& c, const std::string&, const std::string& v) { c.output = v; }},
      {"noise.kind",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.noise.kind = wrap(k, [&] { return parse_noise_kind(v); });
       }},
      {"noise.mu", [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.noise.mu = to_double(k, v); }},
      {"noise.sigma",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.noise.sigma = to_double(k, v); }},
      {"noise.lambda",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.noise.lambda = to_double(k, v); }},
      {"noise.lo", [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.noise.lo = to_double(k, v); }},
      {"noise.hi", [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.noise.hi = to_double(k, v); }},
      {"noise.scale",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.noise.scale = to_double(k, v); }},
      {"noise.target_wmax",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "none" || v.empty()) {
           c.experiment.target_wmax.reset();
         } else {
           c.experiment.target_wmax = to_double(k, v);
         }
       }},
      {"train.lr",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.train.learning_rate = to_double(k, v); }},
      {"train.epochs",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.train.epochs = to_u64(k, v); }},
      {"train.epsilon",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.train.terminal_accuracy = to_double(k, v);
       }},
      {"train.optimizer",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "adam") {
           c.experiment.train.optimizer = OptimizerKind::Adam;
         } else if (v == "gd" || v == "sgd") {
           c.experiment.train.optimizer = OptimizerKind::GradientDescent;
         } else {
           throw ConfigError(k + ": unknown optimizer '" + v + "'");
         }
       }},
      {"train.weights",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto items = split_list(v);
         if (items.size() != 6) throw ConfigError(k + ": expected six comma-separated weights");
         std::array<double, 6> w{};
         for (std::size_t i = 0; i < 6; ++i) w[i] = to_double(k, items[i]);
         c.experiment.train.loss.weights = LossWeights(w);
       }},
      {"train.lift_dim",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.lift_dim = static_cast<int>(to_u64(k, v));
       }},
      {"train.hidden",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.hidden = wrap(k, [&] { return parse_int_list(v); });
       }},
      {"train.cross_term",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "compact") {
           c.experiment.train.loss.cross_term = CrossTermForm::Compact;
         } else if (v == "per_sample") {
           c.experiment.train.loss.cross_term = CrossTermForm::PerSample;
         } else {
           throw ConfigError(k + ": expected compact or per_sample");
         }
       }},
      {"train.reconstruction",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "current") {
           c.experiment.train.loss.reconstruction = ReconstructionPairing::Current;
         } else if (v == "next") {
           c.experiment.train.loss.reconstruction = ReconstructionPairing::Next;
         } else {
           throw ConfigError(k + ": expected current or next");
         }
       }},
      {"train.seed",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.train.seed = to_u64(k, v); }},
      {"split.fraction",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.experiment.split_fraction = to_double(k, v); }},
      {"split.mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experiment.split_mode = wrap(k, [&] { return parse_split_mode(v); });
       }},
  };
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown setting '" + key + "'");
  it->second(cfg, key, value);
}

RunConfig load_config(std::istream& is) {
  RunConfig cfg;
  for (const auto& [k, v] : parse_config_text(is)) apply_setting(cfg, k, v);
  return cfg;
}

void write_config(std::ostream& os, const RunConfig& cfg) {
  const auto& e = cfg.experiment;
  const auto& t = e.train;
  os << "[run]\n";
  if (cfg.has_benchmark) os << "benchmark = " << to_string(e.benchmark) << "\n";
  if (e.horizon) os << "T = " << e.horizon << "\n";
  os << "seed = " << e.base_seed << "\n"
     << "trials = " << e.n_trials << "\n"
     << "jobs = " << e.jobs << "\n"
     << "methods = ";
  for (std::size_t i = 0; i < e.methods.size(); ++i) os << (i ? "," : "") << to_string(e.methods[i]);
  os << "\noutput = " << cfg.output << "\n\n[noise]\n"
     << "kind = " << to_string(e.noise.kind) << "\n"
     << "mu = " << fmt(e.noise.mu) << "\n"
     << "sigma = " << fmt(e.noise.sigma) << "\n"
     << "lambda = " << fmt(e.noise.lambda) << "\n"
     << "lo = " << fmt(e.noise.lo) << "\n"
     << "hi = " << fmt(e.noise.hi) << "\n"
     << "scale = " << fmt(e.noise.scale) << "\n"
     << "target_wmax = " << (e.target_wmax ? fmt(*e.target_wmax) : std::string("none")) << "\n\n[train]\n"
     << "lr = " << fmt(t.learning_rate) << "\n"
     << "epochs = " << t.epochs << "\n"
     << "epsilon = " << fmt(t.terminal_accuracy) << "\n"
     << "optimizer = " << (t.optimizer == OptimizerKind::Adam ? "adam" : "gd") << "\n"
     << "weights = ";
  for (std::size_t i = 0; i < 6; ++i) os << (i ? "," : "") << fmt(t.loss.weights[i]);
  os << "\n";
  if (e.lift_dim) os << "lift_dim = " << e.lift_dim << "\n";
  os << "hidden = ";
  for (std::size_t i = 0; i < e.hidden.size(); ++i) os << (i ? "," : "") << e.hidden[i];
  os << "\ncross_term = " << (t.loss.cross_term == CrossTermForm::Compact ? "compact" : "per_sample") << "\n"
     << "reconstruction = " << (t.loss.reconstruction == ReconstructionPairing::Current ? "current" : "next") << "\n"
     << "seed = " << t.seed << "\n\n[split]\n"
     << "fraction = " << fmt(e.split_fraction) << "\n"
     << "mode = " << to_string(e.split_mode) << "\n";
}

std::vector<std::string> validate_config(const RunConfig& cfg) {
  const auto& e = cfg.experiment;
  e.validate();
  if (e.jobs < 1) throw ConfigError("jobs must be at least 1");
  std::vector<std::string> warnings;
  if (cfg.has_benchmark) {
    const auto info = benchmark_info(e.benchmark);
    const int r = e.lift_dim > 0 ? e.lift_dim : info.lift_dim;
    if (r < info.state_dim) {
      warnings.push_back("lift width " + std::to_string(r) + " is below the state dimension " +
                         std::to_string(info.state_dim) + "; C cannot reconstruct every state direction");
    }
    if (e.horizon && e.horizon <= static_cast<std::size_t>(r + info.input_dim)) {
      throw ConfigError("horizon T=" + std::to_string(e.horizon) + " must exceed r+m=" +
                        std::to_string(r + info.input_dim));
    }
  }
  return warnings;
}

}  // namespace dknd
