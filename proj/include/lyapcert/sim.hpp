#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace lyapcert {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Autonomous or time-varying vector field x' = f(t, x) on R^p.
///
/// `jacobian` is optional; `jacobian_at` falls back to a central finite
/// difference with step 1e-6 when it is absent.
struct VectorField {
  int dim = 0;
  std::function<Vec(double t, const Vec& x)> eval;
  std::function<Mat(const Vec& x)> jacobian;

  Vec operator()(double t, const Vec& x) const { return eval(t, x); }
  Mat jacobian_at(const Vec& x) const;
};

/// Discrete-time map x+ = f(x).
struct DiscreteMap {
  int dim = 0;
  std::function<Vec(const Vec& x)> step;
};

Mat finite_difference_jacobian(const VectorField& f, const Vec& x, double h = 1e-6);

/// One rollout sampled on a uniform grid. Row k of `states` is the state at
/// times[k]; `derivs` holds the vector field there (or, for discrete-time
/// rollouts, the increment to the next state). `disturbances` is empty unless
/// the rollout was perturbed.
struct Trajectory {
  std::vector<double> times;
  Mat states;
  Mat derivs;
  Mat disturbances;
  Vec initial_condition;

  std::size_t size() const { return times.size(); }
  int dim() const { return static_cast<int>(states.cols()); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  Vec state(std::size_t k) const { return states.row(static_cast<Eigen::Index>(k)).transpose(); }
  Vec deriv(std::size_t k) const { return derivs.row(static_cast<Eigen::Index>(k)).transpose(); }

  /// First `n` samples only.
  Trajectory head(std::size_t n) const;
};

struct PendulumParams {
  double m = 1.0;
  double l = 1.0;
  double b = 2.0;
  double g = 9.81;

  void validate() const;
};

VectorField pendulum_field(const PendulumParams& params);
VectorField linearized_pendulum_field(const PendulumParams& params);
VectorField scalar_decay_field(double rho);
VectorField linear_field(const Mat& a);

DiscreteMap scalar_decay_map(double rho);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double theta);

/// Classical RK4 step. Throws NonFiniteState (step 0) on a non-finite stage.
Vec rk4_step(const VectorField& f, double t, const Vec& x, double dt);

/// Fixed-step rollout with horizon = N * dt, producing N + 1 samples. Indices
/// in `wrap_dims` are wrapped to (-pi, pi] after every step.
Trajectory rollout(const VectorField& f, const Vec& xi, double horizon, double dt,
                   const std::vector<int>& wrap_dims = {});

/// Number of integration steps for horizon/dt; throws if not an integer.
std::size_t step_count(double horizon, double dt);

std::vector<Vec> sample_initial_conditions(std::size_t n, const Vec& box_lo, const Vec& box_hi,
                                           std::uint64_t seed);

/// Rolls out every initial condition, in parallel across conditions.
std::vector<Trajectory> rollout_all(const VectorField& f, const std::vector<Vec>& ics,
                                    double horizon, double dt,
                                    const std::vector<int>& wrap_dims = {});

}  // namespace lyapcert
