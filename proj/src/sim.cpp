#include "lyapcert/sim.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

Mat finite_difference_jacobian(const VectorField& f, const Vec& x, double h) {
  const int p = f.dim;
  Mat jac(p, p);
  for (int j = 0; j < p; ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    jac.col(j) = (f.eval(0.0, xp) - f.eval(0.0, xm)) / (2.0 * h);
  }
  return jac;
}

Mat VectorField::jacobian_at(const Vec& x) const {
  if (jacobian) return jacobian(x);
  return finite_difference_jacobian(*this, x);
}

Trajectory Trajectory::head(std::size_t n) const {
  if (n > size()) throw ShapeMismatch("head: trajectory has fewer samples than requested");
  const auto rows = static_cast<Eigen::Index>(n);
  Trajectory out;
  out.times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n));
  out.states = states.topRows(rows);
  out.derivs = derivs.topRows(rows);
  if (disturbances.size() > 0) out.disturbances = disturbances.topRows(rows);
  out.initial_condition = initial_condition;
  return out;
}

void PendulumParams::validate() const {
  if (!(m > 0) || !(l > 0) || !(g > 0) || !(b >= 0))
    throw std::invalid_argument("pendulum parameters require m, l, g > 0 and b >= 0");
}

VectorField pendulum_field(const PendulumParams& params) {
  params.validate();
  const double inertia = params.m * params.l * params.l;
  const double torque = params.m * params.g * params.l;
  const double damping = params.b;
  VectorField f;
  f.dim = 2;
  f.eval = [=](double, const Vec& x) {
    Vec dx(2);
    dx[0] = x[1];
    dx[1] = -(damping * x[1] + torque * std::sin(x[0])) / inertia;
    return dx;
  };
  f.jacobian = [=](const Vec& x) {
    Mat j(2, 2);
    j << 0.0, 1.0, -torque * std::cos(x[0]) / inertia, -damping / inertia;
    return j;
  };
  return f;
}

VectorField linearized_pendulum_field(const PendulumParams& params) {
  params.validate();
  Mat a(2, 2);
  a << 0.0, 1.0, -params.g / params.l, -params.b / (params.m * params.l * params.l);
  return linear_field(a);
}

VectorField linear_field(const Mat& a) {
  if (a.rows() != a.cols()) throw ShapeMismatch("linear_field: matrix must be square");
  VectorField f;
  f.dim = static_cast<int>(a.rows());
  f.eval = [a](double, const Vec& x) -> Vec { return a * x; };
  f.jacobian = [a](const Vec&) -> Mat { return a; };
  return f;
}

VectorField scalar_decay_field(double rho) {
  if (!(rho > 0)) throw std::invalid_argument("scalar_decay_field: rho must be positive");
  return linear_field(Mat::Constant(1, 1, -rho));
}

DiscreteMap scalar_decay_map(double rho) {
  DiscreteMap map;
  map.dim = 1;
  map.step = [rho](const Vec& x) -> Vec { return rho * x; };
  return map;
}

double wrap_angle(double theta) {
  constexpr double pi = std::numbers::pi;
  if (theta > -pi && theta <= pi) return theta;
  return theta - 2.0 * pi * std::ceil((theta - pi) / (2.0 * pi));
}

namespace {

void require_finite(const Vec& v, const char* where) {
  if (!v.allFinite()) throw NonFiniteState(0, std::string("non-finite value in ") + where);
}

}  // namespace

Vec rk4_step(const VectorField& f, double t, const Vec& x, double dt) {
  const Vec k1 = f.eval(t, x);
  require_finite(k1, "RK4 stage 1");
  const Vec k2 = f.eval(t + 0.5 * dt, x + 0.5 * dt * k1);
  require_finite(k2, "RK4 stage 2");
  const Vec k3 = f.eval(t + 0.5 * dt, x + 0.5 * dt * k2);
  require_finite(k3, "RK4 stage 3");
  const Vec k4 = f.eval(t + dt, x + dt * k3);
  require_finite(k4, "RK4 stage 4");
  Vec next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  require_finite(next, "RK4 update");
  return next;
}

std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  const double ratio = horizon / dt;
  const double n = std::round(ratio);
  if (n < 1 || std::abs(ratio - n) > 1e-9 * std::max(1.0, n))
    throw std::invalid_argument("horizon must be a positive integer multiple of dt");
  return static_cast<std::size_t>(n);
}

Trajectory rollout(const VectorField& f, const Vec& xi, double horizon, double dt,
                   const std::vector<int>& wrap_dims) {
  if (xi.size() != f.dim) throw ShapeMismatch("rollout: initial condition has wrong dimension");
  const std::size_t n = step_count(horizon, dt);
  Trajectory traj;
  traj.initial_condition = xi;
  traj.times.resize(n + 1);
  traj.states.resize(static_cast<Eigen::Index>(n + 1), f.dim);
  traj.derivs.resize(static_cast<Eigen::Index>(n + 1), f.dim);
  Vec x = xi;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    traj.times[k] = t;
    traj.states.row(static_cast<Eigen::Index>(k)) = x.transpose();
    traj.derivs.row(static_cast<Eigen::Index>(k)) = f.eval(t, x).transpose();
    if (k == n) break;
    try {
      x = rk4_step(f, t, x, dt);
    } catch (const NonFiniteState& e) {
      throw NonFiniteState(k, "rollout diverged");
    }
    for (int d : wrap_dims) x[d] = wrap_angle(x[d]);
  }
  return traj;
}

std::vector<Vec> sample_initial_conditions(std::size_t n, const Vec& box_lo, const Vec& box_hi,
                                           std::uint64_t seed) {
  if (box_lo.size() != box_hi.size() || box_lo.size() == 0)
    throw InvalidBox("box bounds must be non-empty and of equal dimension");
  if (!(box_lo.array() < box_hi.array()).all())
    throw InvalidBox("box requires lo < hi in every coordinate");
  if (n < 1) throw std::invalid_argument("sample_initial_conditions: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(box_lo.size());
    for (Eigen::Index d = 0; d < x.size(); ++d)
      x[d] = box_lo[d] + (box_hi[d] - box_lo[d]) * unit(rng);
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Trajectory> rollout_all(const VectorField& f, const std::vector<Vec>& ics,
                                    double horizon, double dt, const std::vector<int>& wrap_dims) {
  std::vector<Trajectory> out(ics.size());
  parallel_for(ics.size(), [&](std::size_t i) { out[i] = rollout(f, ics[i], horizon, dt, wrap_dims); });
  return out;
}

}  // namespace lyapcert
