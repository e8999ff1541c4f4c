#include "dknd/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <vector>

#include "dknd/errors.hpp"

namespace dknd {

std::string_view to_string(Benchmark b) {
  switch (b) {
    case Benchmark::Linear2D: return "linear2d";
    case Benchmark::CartPole: return "cartpole";
    case Benchmark::LunarLander: return "lander";
    case Benchmark::SurfaceVehicle: return "vessel";
  }
  return "unknown";
}

Benchmark parse_benchmark(std::string_view name) {
  if (name == "linear2d" || name == "2d") return Benchmark::Linear2D;
  if (name == "cartpole") return Benchmark::CartPole;
  if (name == "lander" || name == "lunarlander") return Benchmark::LunarLander;
  if (name == "vessel" || name == "surface_vehicle") return Benchmark::SurfaceVehicle;
  throw ConfigError("unknown benchmark '" + std::string(name) + "'");
}

namespace {

void require_finite(const Vector& x, const char* who) {
  if (!x.allFinite()) throw NonFinite(std::string(who) + ": state became non-finite");
}

void require_dims(const Vector& x, Eigen::Index n, const Vector& u, Eigen::Index m, const char* who) {
  if (x.size() != n || u.size() != m) {
    throw ShapeMismatch(std::string(who) + ": expected state of size " + std::to_string(n) +
                        " and input of size " + std::to_string(m));
  }
}

}  // namespace

Vector step_linear2d(const Vector& x, double u) {
  if (x.size() != 2) throw ShapeMismatch("step_linear2d: state must have 2 entries");
  Eigen::Matrix2d A;
  A << 0.9, -0.1, 0.0, 0.8;
  const Eigen::Vector2d B(0.0, 1.0);
  return A * x + B * u;
}

Vector step_cartpole(const Vector& x, double u, const CartPoleParams& p) {
  if (x.size() != 4) throw ShapeMismatch("step_cartpole: state must have 4 entries");
  const double pos = x(0), vel = x(1), theta = x(2), omega = x(3);
  const double force = p.force_mag * u;
  const double total_mass = p.cart_mass + p.pole_mass;
  const double pml = p.pole_mass * p.half_length;
  const double s = std::sin(theta), c = std::cos(theta);

  const double temp = (force + pml * omega * omega * s) / total_mass;
  const double theta_acc =
      (p.gravity * s - c * temp) / (p.half_length * (4.0 / 3.0 - p.pole_mass * c * c / total_mass));
  const double x_acc = temp - pml * theta_acc * c / total_mass;

  Vector next(4);
  next << pos + p.dt * vel, vel + p.dt * x_acc, theta + p.dt * omega, omega + p.dt * theta_acc;
  require_finite(next, "step_cartpole");
  return next;
}

Vector step_vessel(const Vector& x, const Vector& u, const VesselParams& p) {
  require_dims(x, 6, u, 2, "step_vessel");
  const double psi = x(2), su = x(3), sv = x(4), r = x(5);
  const double thrust = p.thrust_gain * (u(0) + u(1));
  const double torque = p.thrust_gain * p.half_beam * (u(1) - u(0));

  const double c = std::cos(psi), s = std::sin(psi);
  Vector dx(6);
  dx << su * c - sv * s, su * s + sv * c, r, (thrust - p.surge_drag * su) / p.mass + sv * r,
      -p.sway_drag * sv / p.mass - su * r, (torque - p.yaw_drag * r) / p.yaw_inertia;
  Vector next = x + p.dt * dx;
  require_finite(next, "step_vessel");
  return next;
}

Vector step_lander(const Vector& x, const Vector& u, const LanderParams& p) {
  require_dims(x, 6, u, 2, "step_lander");
  const double theta = x(2);
  const double main = p.main_gain * std::clamp(u(0), 0.0, 1.0);
  Vector dx(6);
  dx << x(3), x(4), x(5), -main * std::sin(theta) - p.linear_drag * x(3),
      main * std::cos(theta) - p.gravity - p.linear_drag * x(4), p.side_gain * u(1) - p.angular_drag * x(5);
  Vector next = x + p.dt * dx;
  require_finite(next, "step_lander");
  return next;
}

BenchmarkInfo benchmark_info(Benchmark b) {
  switch (b) {
    case Benchmark::Linear2D: {
      Vector x0(2);
      x0 << 1.0, 0.0;
      return {b, 2, 1, 4, 500, 0.0, x0};
    }
    case Benchmark::CartPole: return {b, 4, 1, 6, 600, CartPoleParams{}.dt, Vector::Zero(4)};
    case Benchmark::LunarLander: return {b, 6, 2, 4, 1600, LanderParams{}.dt, Vector::Zero(6)};
    case Benchmark::SurfaceVehicle: return {b, 6, 2, 10, 600, VesselParams{}.dt, Vector::Zero(6)};
  }
  throw ConfigError("unknown benchmark");
}

Vector step(Benchmark b, const Vector& x, const Vector& u) {
  switch (b) {
    case Benchmark::Linear2D:
      if (u.size() != 1) throw ShapeMismatch("linear2d takes a scalar input");
      return step_linear2d(x, u(0));
    case Benchmark::CartPole:
      if (u.size() != 1) throw ShapeMismatch("cartpole takes a scalar input");
      return step_cartpole(x, u(0));
    case Benchmark::LunarLander: return step_lander(x, u);
    case Benchmark::SurfaceVehicle: return step_vessel(x, u);
  }
  throw ConfigError("unknown benchmark");
}

Trajectory simulate(Benchmark b, const Vector& x0, std::size_t T, std::uint64_t seed) {
  if (T < 1) throw ConfigError("simulate: horizon must be at least 1");
  const auto info = benchmark_info(b);
  if (x0.size() != info.state_dim) throw ShapeMismatch("simulate: initial state has the wrong size");

  Trajectory traj;
  traj.dt = info.dt;
  traj.states.resize(info.state_dim, static_cast<Eigen::Index>(T) + 1);
  traj.inputs.resize(info.input_dim, static_cast<Eigen::Index>(T));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> excite(-1.0, 1.0);

  traj.states.col(0) = x0;
  for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(T); ++t) {
    for (Eigen::Index i = 0; i < info.input_dim; ++i) traj.inputs(i, t) = excite(rng);
    traj.states.col(t + 1) = step(b, traj.states.col(t), traj.inputs.col(t));
  }
  return traj;
}

std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::PoissonCentered: return "poisson";
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::None: return "none";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "poisson") return NoiseKind::PoissonCentered;
  if (name == "uniform") return NoiseKind::Uniform;
  if (name == "none") return NoiseKind::None;
  throw ConfigError("unknown noise kind '" + std::string(name) + "'");
}

void NoiseSpec::validate() const {
  switch (kind) {
    case NoiseKind::Gaussian:
      if (!(sigma > 0.0)) throw ConfigError("gaussian noise needs sigma > 0");
      break;
    case NoiseKind::PoissonCentered:
      if (!(lambda > 0.0)) throw ConfigError("poisson noise needs lambda > 0");
      break;
    case NoiseKind::Uniform:
      if (!(lo < hi)) throw ConfigError("uniform noise needs lo < hi");
      break;
    case NoiseKind::None: break;
  }
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw ConfigError("noise scale must be finite and >= 0");
}

double max_column_norm(const Matrix& noise) {
  double best = 0.0;
  for (Eigen::Index t = 0; t < noise.cols(); ++t) best = std::max(best, noise.col(t).norm());
  return best;
}

namespace {

Matrix draw_noise(Eigen::Index n, Eigen::Index cols, const NoiseSpec& spec) {
  Matrix w = Matrix::Zero(n, cols);
  std::mt19937_64 rng(spec.seed);
  switch (spec.kind) {
    case NoiseKind::Gaussian: {
      std::normal_distribution<double> d(spec.mu, spec.sigma);
      for (Eigen::Index t = 0; t < cols; ++t)
        for (Eigen::Index i = 0; i < n; ++i) w(i, t) = d(rng);
      break;
    }
    case NoiseKind::PoissonCentered: {
      std::poisson_distribution<long> d(spec.lambda);
      for (Eigen::Index t = 0; t < cols; ++t)
        for (Eigen::Index i = 0; i < n; ++i) w(i, t) = static_cast<double>(d(rng)) - spec.lambda;
      break;
    }
    case NoiseKind::Uniform: {
      std::uniform_real_distribution<double> d(spec.lo, spec.hi);
      for (Eigen::Index t = 0; t < cols; ++t) {
        for (Eigen::Index i = 0; i < n; ++i) {
          double v = d(rng);
          while (!(v < spec.hi)) v = d(rng);  // keep the interval half-open
          w(i, t) = v;
        }
      }
      break;
    }
    case NoiseKind::None: break;
  }
  return w;
}

MeasuredTrajectory apply_noise(const Trajectory& traj, const Matrix& w, double scale) {
  MeasuredTrajectory out;
  out.noise_scale = scale;
  out.base = traj;
  out.measurements = traj.states + w;
  out.noise = out.measurements - traj.states;
  out.w_max_empirical = max_column_norm(out.noise);
  return out;
}

}  // namespace

MeasuredTrajectory corrupt(const Trajectory& traj, const NoiseSpec& spec) {
  spec.validate();
  return apply_noise(traj, spec.scale * draw_noise(traj.states.rows(), traj.states.cols(), spec), spec.scale);
}

MeasuredTrajectory corrupt_to_wmax(const Trajectory& traj, NoiseSpec spec, double target_wmax) {
  spec.validate();
  if (!(target_wmax >= 0.0)) throw ConfigError("target w_max must be >= 0");
  const Matrix raw = draw_noise(traj.states.rows(), traj.states.cols(), spec);
  const double raw_max = max_column_norm(raw);
  spec.scale = raw_max > 0.0 ? target_wmax / raw_max : 0.0;
  return apply_noise(traj, spec.scale * raw, spec.scale);
}

namespace {

void put_number(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  if (s.empty()) throw ParseError(line, "empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError(line, "malformed number '" + s + "'");
  return v;
}

}  // namespace

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const Matrix* measurements) {
  const Eigen::Index n = traj.state_dim(), m = traj.input_dim(), T = traj.horizon();
  if (measurements && (measurements->rows() != n || measurements->cols() != T + 1)) {
    throw ShapeMismatch("write_trajectory_csv: measurement matrix has the wrong shape");
  }
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",u" << i;
  if (measurements) {
    for (Eigen::Index i = 0; i < n; ++i) os << ",y" << i;
  }
  os << '\n';
  for (Eigen::Index t = 0; t <= T; ++t) {
    os << t;
    for (Eigen::Index i = 0; i < n; ++i) {
      os << ',';
      put_number(os, traj.states(i, t));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      os << ',';
      if (t < T) put_number(os, traj.inputs(i, t));
    }
    if (measurements) {
      for (Eigen::Index i = 0; i < n; ++i) {
        os << ',';
        put_number(os, (*measurements)(i, t));
      }
    }
    os << '\n';
  }
}

TrajectoryFile read_trajectory_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError(1, "missing header");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t") throw ParseError(1, "header must start with 't'");

  // Columns must appear in blocks x*, u*, y* with consecutive indices.
  std::vector<int> xs, us, ys;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto& h = header[c];
    if (h.size() < 2) throw ParseError(1, "bad column name '" + h + "'");
    const int idx = static_cast<int>(parse_double(h.substr(1), 1));
    std::vector<int>* dst = h[0] == 'x' ? &xs : h[0] == 'u' ? &us : h[0] == 'y' ? &ys : nullptr;
    if (!dst) throw ParseError(1, "unknown column '" + h + "'");
    if (idx != static_cast<int>(dst->size())) throw ParseError(1, "column '" + h + "' out of order");
    dst->push_back(static_cast<int>(c));
  }
  if (us.empty()) throw ParseError(1, "no input columns");
  if (xs.empty() && ys.empty()) throw ParseError(1, "need x or y columns");
  if (!xs.empty() && !ys.empty() && xs.size() != ys.size()) throw ParseError(1, "x and y widths differ");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                   std::to_string(fields.size()));
    }
    if (parse_double(fields[0], lineno) != static_cast<double>(rows.size())) {
      throw ParseError(lineno, "time index out of sequence");
    }
    rows.push_back(std::move(fields));
  }
  if (rows.size() < 2) throw ParseError(lineno, "need at least two time steps");

  const Eigen::Index T = static_cast<Eigen::Index>(rows.size()) - 1;
  const Eigen::Index n = static_cast<Eigen::Index>(xs.empty() ? ys.size() : xs.size());
  const Eigen::Index m = static_cast<Eigen::Index>(us.size());
  TrajectoryFile out;
  out.has_states = !xs.empty();
  out.traj.states = Matrix::Zero(n, T + 1);
  out.traj.inputs.resize(m, T);
  if (!ys.empty()) out.measurements = Matrix(n, T + 1);
  for (Eigen::Index t = 0; t <= T; ++t) {
    const auto& f = rows[static_cast<std::size_t>(t)];
    const std::size_t ln = static_cast<std::size_t>(t) + 2;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(xs.size()); ++i) {
      out.traj.states(i, t) = parse_double(f[static_cast<std::size_t>(xs[i])], ln);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& cell = f[static_cast<std::size_t>(us[i])];
      if (t < T) {
        out.traj.inputs(i, t) = parse_double(cell, ln);
      } else if (!cell.empty()) {
        throw ParseError(ln, "final row must leave inputs empty");
      }
    }
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(ys.size()); ++i) {
      (*out.measurements)(i, t) = parse_double(f[static_cast<std::size_t>(ys[i])], ln);
    }
  }
  return out;
}

MeasuredTrajectory as_measured(const TrajectoryFile& file) {
  if (!file.measurements) throw ConfigError("trajectory has no measurement columns; run corrupt first");
  MeasuredTrajectory out;
  out.base = file.traj;
  out.measurements = *file.measurements;
  out.has_true_states = file.has_states;
  if (!file.has_states) out.base.states = out.measurements;
  out.noise = out.measurements - out.base.states;
  out.w_max_empirical = max_column_norm(out.noise);
  return out;
}

}  // namespace dknd
