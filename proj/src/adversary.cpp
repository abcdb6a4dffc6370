#include "lyapcert/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lyapcert/errors.hpp"

namespace lyapcert {

std::string to_string(TubeKind kind) {
  switch (kind) {
    case TubeKind::None: return "none";
    case TubeKind::NormBounded: return "norm_bounded";
    case TubeKind::Lipschitz: return "lipschitz";
    case TubeKind::Combined: return "combined";
  }
  return "none";
}

TubeKind parse_tube_kind(const std::string& s) {
  if (s == "none") return TubeKind::None;
  if (s == "norm_bounded" || s == "norm") return TubeKind::NormBounded;
  if (s == "lipschitz") return TubeKind::Lipschitz;
  if (s == "combined") return TubeKind::Combined;
  throw std::invalid_argument("unknown tube kind '" + s + "'");
}

void AdversarySpec::validate() const {
  if (!(eps_u >= 0) || !(eps_x >= 0)) throw std::invalid_argument("adversary budgets must be >= 0");
  if (kind == TubeKind::None && (eps_u != 0 || eps_x != 0))
    throw std::invalid_argument("adversary kind none requires zero budgets");
  if (kind == TubeKind::NormBounded && eps_x != 0)
    throw std::invalid_argument("norm-bounded adversary uses eps_u only");
  if (kind == TubeKind::Lipschitz && eps_u != 0)
    throw std::invalid_argument("Lipschitz adversary uses eps_x only");
}

AdversarySpec no_adversary() { return {}; }
AdversarySpec norm_bounded(double eps_u, Strategy s) { return {TubeKind::NormBounded, eps_u, 0.0, s}; }
AdversarySpec lipschitz(double eps_x, Strategy s) { return {TubeKind::Lipschitz, 0.0, eps_x, s}; }
AdversarySpec combined(double eps_x, double eps_u, Strategy s) {
  return {TubeKind::Combined, eps_u, eps_x, s};
}

Disturbance greedy_disturbance(std::shared_ptr<const CertificateNet> v, const AdversarySpec& spec) {
  if (spec.kind == TubeKind::None) throw std::invalid_argument("greedy adversary needs a budget");
  spec.validate();
  const TubeKind kind = spec.kind;
  const double eps_x = spec.eps_x, eps_u = spec.eps_u;
  Disturbance d;
  d.name = "greedy_" + to_string(kind);
  d.eval = [v = std::move(v), kind, eps_x, eps_u](double, const Vec& x) {
    const Vec g = v->grad(x);
    const double gnorm = g.norm();
    DisturbanceValue out{Vec::Zero(x.size()), Vec::Zero(x.size())};
    if (gnorm < kGradientFloor) return out;
    if (kind == TubeKind::Lipschitz || kind == TubeKind::Combined)
      out.state_part = (eps_x * x.norm() / gnorm) * g;
    if (kind == TubeKind::NormBounded || kind == TubeKind::Combined)
      out.input_part = (eps_u / gnorm) * g;
    return out;
  };
  return d;
}

Disturbance radial_disturbance(double eps_x) {
  if (!(eps_x >= 0)) throw std::invalid_argument("radial disturbance rate must be >= 0");
  Disturbance d;
  d.name = "radial";
  d.eval = [eps_x](double, const Vec& x) {
    return DisturbanceValue{eps_x * x, Vec::Zero(x.size())};
  };
  return d;
}

Disturbance zero_disturbance(int dim) {
  Disturbance d;
  d.name = "zero";
  d.eval = [dim](double, const Vec&) { return DisturbanceValue{Vec::Zero(dim), Vec::Zero(dim)}; };
  return d;
}

Disturbance signal_disturbance(std::string name, std::function<Vec(double)> signal) {
  Disturbance d;
  d.name = std::move(name);
  d.eval = [signal = std::move(signal)](double t, const Vec& x) {
    return DisturbanceValue{Vec::Zero(x.size()), signal(t)};
  };
  return d;
}

Disturbance constant_disturbance(const Vec& value) {
  return signal_disturbance("constant", [value](double) { return value; });
}

Disturbance state_feedback_disturbance(std::string name, std::function<Vec(double, const Vec&)> fb) {
  Disturbance d;
  d.name = std::move(name);
  d.eval = [fb = std::move(fb)](double t, const Vec& x) {
    return DisturbanceValue{fb(t, x), Vec::Zero(x.size())};
  };
  return d;
}

namespace {

BudgetCheck check_norm(double norm, double budget) {
  const double allowed = budget * (1.0 + kBudgetSlack);
  return BudgetCheck{norm <= allowed, budget - norm};
}

BudgetCheck tighter(BudgetCheck a, BudgetCheck b) {
  return BudgetCheck{a.pass && b.pass, std::min(a.slack, b.slack)};
}

}  // namespace

BudgetCheck budget_check(const DisturbanceValue& delta, const Vec& x, const AdversarySpec& spec) {
  switch (spec.kind) {
    case TubeKind::None: return check_norm(delta.total().norm(), 0.0);
    case TubeKind::NormBounded: return check_norm(delta.total().norm(), spec.eps_u);
    case TubeKind::Lipschitz: return check_norm(delta.total().norm(), spec.eps_x * x.norm());
    case TubeKind::Combined:
      return tighter(check_norm(delta.state_part.norm(), spec.eps_x * x.norm()),
                     check_norm(delta.input_part.norm(), spec.eps_u));
  }
  return {};
}

BudgetCheck budget_check(const Vec& delta, const Vec& x, const AdversarySpec& spec) {
  // An undecomposed Combined disturbance gets the most generous split: the
  // state part absorbs as much as eps_x |x| allows.
  if (spec.kind == TubeKind::Combined) {
    const double n = delta.norm();
    const double state_cap = spec.eps_x * x.norm();
    const double input_norm = std::max(0.0, n - state_cap);
    return check_norm(input_norm, spec.eps_u);
  }
  return budget_check(DisturbanceValue{Vec::Zero(delta.size()), delta}, x, spec);
}

namespace {

Vec checked(const Disturbance& d, const AdversarySpec& spec, double t, const Vec& x) {
  const DisturbanceValue v = d(t, x);
  const BudgetCheck bc = budget_check(v, x, spec);
  if (!bc.pass) throw BudgetViolation(t, -bc.slack);
  return v.total();
}

}  // namespace

Trajectory perturbed_rollout(const VectorField& f, const Disturbance& d, const AdversarySpec& spec,
                             const Vec& xi, double horizon, double dt,
                             const std::vector<int>& wrap_dims) {
  VectorField perturbed;
  perturbed.dim = f.dim;
  perturbed.eval = [&](double t, const Vec& x) -> Vec { return f.eval(t, x) + checked(d, spec, t, x); };
  if (xi.size() != f.dim) throw ShapeMismatch("perturbed_rollout: initial condition has wrong dimension");
  const std::size_t n = step_count(horizon, dt);
  Trajectory traj;
  traj.initial_condition = xi;
  traj.times.resize(n + 1);
  const auto rows = static_cast<Eigen::Index>(n + 1);
  traj.states.resize(rows, f.dim);
  traj.derivs.resize(rows, f.dim);
  traj.disturbances.resize(rows, f.dim);
  Vec x = xi;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * dt;
    const auto row = static_cast<Eigen::Index>(k);
    const Vec delta = checked(d, spec, t, x);
    traj.times[k] = t;
    traj.states.row(row) = x.transpose();
    traj.derivs.row(row) = (f.eval(t, x) + delta).transpose();
    traj.disturbances.row(row) = delta.transpose();
    if (k == n) break;
    try {
      x = rk4_step(perturbed, t, x, dt);
    } catch (const NonFiniteState&) {
      throw NonFiniteState(k, "perturbed rollout diverged");
    }
    for (int w : wrap_dims) x[w] = wrap_angle(x[w]);
  }
  return traj;
}

Trajectory dt_perturbed_rollout(const DiscreteMap& f, const Disturbance& d, const AdversarySpec& spec,
                                const Vec& xi, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("dt_perturbed_rollout: steps must be >= 1");
  if (xi.size() != f.dim) throw ShapeMismatch("dt_perturbed_rollout: initial condition has wrong dimension");
  Trajectory traj;
  traj.initial_condition = xi;
  const auto rows = static_cast<Eigen::Index>(steps + 1);
  traj.times.resize(steps + 1);
  traj.states.resize(rows, f.dim);
  traj.derivs.resize(rows, f.dim);
  traj.disturbances.resize(rows, f.dim);
  Vec x = xi;
  for (std::size_t k = 0; k <= steps; ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    const double t = static_cast<double>(k);
    const Vec delta = checked(d, spec, t, x);
    const Vec next = f.step(x) + delta;
    if (!next.allFinite()) throw NonFiniteState(k, "discrete rollout diverged");
    traj.times[k] = t;
    traj.states.row(row) = x.transpose();
    traj.derivs.row(row) = (next - x).transpose();
    traj.disturbances.row(row) = delta.transpose();
    x = next;
  }
  return traj;
}

}  // namespace lyapcert
