#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "dknd/errors.hpp"
#include "dknd/types.hpp"

namespace dknd {

enum class Benchmark { Linear2D, CartPole, LunarLander, SurfaceVehicle };

std::string_view to_string(Benchmark b);
Benchmark parse_benchmark(std::string_view name);

/// Gym's classic cart-pole constants. Force on the cart is force_mag * u.
struct CartPoleParams {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double half_length = 0.5;
  double force_mag = 10.0;
  double dt = 0.02;
};

/// 3-DOF surface vessel: pose (x, y, psi), body velocities (u, v, r) and two
/// stern thrusters (left, right) in [-1, 1].
struct VesselParams {
  double mass = 10.0;
  double yaw_inertia = 5.0;
  double thrust_gain = 10.0;
  double half_beam = 0.5;
  double surge_drag = 5.0;
  double sway_drag = 10.0;
  double yaw_drag = 5.0;
  double dt = 0.02;
};

/// Planar lander: state (x, y, theta, xdot, ydot, thetadot); inputs are the
/// main engine (fires for u0 > 0, along the body axis) and a side engine that
/// applies a pure torque.
struct LanderParams {
  double gravity = 1.62;
  double main_gain = 4.0 * 1.62;
  double side_gain = 1.0;
  double linear_drag = 0.05;
  double angular_drag = 0.05;
  double dt = 0.02;
};

Vector step_linear2d(const Vector& x, double u);
Vector step_cartpole(const Vector& x, double u, const CartPoleParams& p = {});
Vector step_vessel(const Vector& x, const Vector& u, const VesselParams& p = {});
Vector step_lander(const Vector& x, const Vector& u, const LanderParams& p = {});

struct BenchmarkInfo {
  Benchmark id;
  int state_dim;
  int input_dim;
  int lift_dim;        ///< observable output width
  std::size_t horizon; ///< number of data pairs T
  double dt;           ///< 0 for natively discrete systems
  Vector x0;
};

BenchmarkInfo benchmark_info(Benchmark b);

/// One step of the benchmark's discrete-time map.
Vector step(Benchmark b, const Vector& x, const Vector& u);

/// States n x (T+1) and inputs m x T, stored column-wise in time.
struct Trajectory {
  Matrix states;
  Matrix inputs;
  double dt = 0.0;

  Eigen::Index horizon() const { return inputs.cols(); }
  Eigen::Index state_dim() const { return states.rows(); }
  Eigen::Index input_dim() const { return inputs.rows(); }
};

/// Drives the system with i.i.d. U(-1, 1) inputs drawn from `seed`.
Trajectory simulate(Benchmark b, const Vector& x0, std::size_t T, std::uint64_t seed);

enum class NoiseKind { Gaussian, PoissonCentered, Uniform, None };

std::string_view to_string(NoiseKind k);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::Gaussian;
  double mu = 0.0;
  double sigma = 2.0;
  double lambda = 3.0;
  double lo = -1.0;
  double hi = 2.0;
  double scale = 1.0;  ///< multiplies every draw
  std::uint64_t seed = 0;

  void validate() const;
};

struct MeasuredTrajectory {
  Trajectory base;
  Matrix measurements;  ///< y_t, n x (T+1)
  Matrix noise;         ///< w_t = y_t - x_t
  double w_max_empirical = 0.0;
  double noise_scale = 1.0;  ///< scale the draws were multiplied by
  bool has_true_states = true;
};

/// max_t ||w_t||_2.
double max_column_norm(const Matrix& noise);

/// y_t = x_t + w_t with per-component i.i.d. draws. Poisson draws are
/// centered (k - lambda).
MeasuredTrajectory corrupt(const Trajectory& traj, const NoiseSpec& spec);

/// Like corrupt(), with `scale` chosen so that the empirical w_max equals
/// `target_wmax`.
MeasuredTrajectory corrupt_to_wmax(const Trajectory& traj, NoiseSpec spec, double target_wmax);

/// Trajectory CSV: header `t,x0..,u0..[,y0..]`; the final row leaves u empty.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const Matrix* measurements = nullptr);

struct TrajectoryFile {
  Trajectory traj;
  std::optional<Matrix> measurements;
  bool has_states = true;
};

TrajectoryFile read_trajectory_csv(std::istream& is);

/// Wraps a parsed file as a measured trajectory. Without y columns the caller
/// must corrupt first; without x columns the measurements stand in for the
/// true states and has_true_states is false.
MeasuredTrajectory as_measured(const TrajectoryFile& file);

}  // namespace dknd
