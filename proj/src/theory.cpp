#include "lyapcert/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

namespace {
constexpr double kE = std::numbers::e;
}

void EdissParams::validate() const {
  if (!(beta >= 1.0)) throw std::invalid_argument("E-dISS beta must be >= 1");
  if (!(gamma > 0.0)) throw std::invalid_argument("E-dISS gamma must be positive");
  if (mode == TimeMode::CT && !(rho > 0.0)) throw std::invalid_argument("CT E-dISS rho must be positive");
  if (mode == TimeMode::DT && !(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("DT E-dISS rho must lie in (0, 1)");
}

void RegularityConstants::validate() const {
  for (double c : {L_V, L_gradV, B_V, B_gradV, B_X, B_htilde})
    if (!std::isfinite(c) || c < 0.0) throw std::invalid_argument("regularity constants must be finite and >= 0");
}

namespace {

BoundResult make_result(std::string id, std::map<std::string, double> inputs, std::string precondition) {
  BoundResult r;
  r.formula_id = std::move(id);
  r.inputs = std::move(inputs);
  r.precondition = std::move(precondition);
  return r;
}

std::map<std::string, double> ediss_inputs(const EdissParams& p, double eps_u, double eps_x) {
  return {{"beta", p.beta}, {"rho", p.rho}, {"gamma", p.gamma}, {"eps_u", eps_u}, {"eps_x", eps_x}};
}

void require_mode(const EdissParams& p, TimeMode mode, const char* who) {
  if (p.mode != mode)
    throw std::invalid_argument(std::string(who) + ": E-dISS parameters are in the wrong time mode");
  p.validate();
}

const char* kCtLipschitzPre = "gamma*eps_x < rho";
const char* kDtLipschitzPre = "rho + gamma*eps_x < 1";

}  // namespace

BoundResult deviation_bound_ct(TubeKind kind, const EdissParams& p, double eps_u, double eps_x,
                               double xi_norm) {
  require_mode(p, TimeMode::CT, "deviation_bound_ct");
  auto inputs = ediss_inputs(p, eps_u, eps_x);
  inputs["xi_norm"] = xi_norm;
  const double g = p.gamma * eps_x / p.rho;
  switch (kind) {
    case TubeKind::None: {
      auto r = make_result("ct_deviation_none", inputs, "none");
      r.value = 0.0;
      return r;
    }
    case TubeKind::NormBounded: {
      auto r = make_result("ct_deviation_norm_bounded", inputs, "none");
      r.value = p.gamma * eps_u / p.rho;
      return r;
    }
    case TubeKind::Lipschitz: {
      auto r = make_result("ct_deviation_lipschitz", inputs, kCtLipschitzPre);
      if (!(p.gamma * eps_x < p.rho)) {
        r.reason = "gamma*eps < rho required";
        return r;
      }
      r.value = g / (1.0 - g) * p.beta * xi_norm / kE;
      return r;
    }
    case TubeKind::Combined: {
      auto r = make_result("ct_deviation_combined", inputs, kCtLipschitzPre);
      if (!(p.gamma * eps_x < p.rho)) {
        r.reason = "gamma*eps < rho required";
        return r;
      }
      r.value = (p.gamma * eps_u / p.rho + g * p.beta * xi_norm / kE) / (1.0 - g);
      return r;
    }
  }
  throw std::invalid_argument("unknown tube kind");
}

BoundResult deviation_bound_dt(TubeKind kind, const EdissParams& p, double eps_u, double eps_x,
                               double xi_norm, std::size_t step) {
  require_mode(p, TimeMode::DT, "deviation_bound_dt");
  auto inputs = ediss_inputs(p, eps_u, eps_x);
  inputs["xi_norm"] = xi_norm;
  const bool stable = p.rho + p.gamma * eps_x < 1.0;
  switch (kind) {
    case TubeKind::None: {
      auto r = make_result("dt_deviation_none", inputs, "none");
      r.value = 0.0;
      return r;
    }
    case TubeKind::NormBounded: {
      auto r = make_result("dt_deviation_norm_bounded", inputs, "none");
      r.value = p.gamma * eps_u / (1.0 - p.rho);
      return r;
    }
    case TubeKind::Lipschitz: {
      inputs["t"] = static_cast<double>(step);
      auto r = make_result("dt_deviation_lipschitz", inputs, kDtLipschitzPre);
      if (!stable) {
        r.reason = "rho + gamma*eps < 1 required";
        return r;
      }
      r.value = p.beta * xi_norm * std::pow(p.rho + p.gamma * eps_x, static_cast<double>(step));
      return r;
    }
    case TubeKind::Combined: {
      auto r = make_result("dt_deviation_combined", inputs, kDtLipschitzPre);
      if (!stable) {
        r.reason = "rho + gamma*eps < 1 required";
        return r;
      }
      const double peak = peak_t_exp(p.rho, TimeMode::DT).value;
      r.value = (1.0 - p.rho) / (1.0 - (p.rho + p.gamma * eps_x)) * p.gamma *
                (p.beta * xi_norm * eps_x * peak + eps_u / (1.0 - p.rho));
      return r;
    }
  }
  throw std::invalid_argument("unknown tube kind");
}

namespace {

std::map<std::string, double> rademacher_inputs(const RegularityConstants& c, const EdissParams& p,
                                                double eps_u, double eps_x, double nu, double eta,
                                                std::size_t n) {
  auto in = ediss_inputs(p, eps_u, eps_x);
  in.insert({{"L_V", c.L_V},
             {"L_gradV", c.L_gradV},
             {"B_V", c.B_V},
             {"B_gradV", c.B_gradV},
             {"B_X", c.B_X},
             {"nu", nu},
             {"eta", eta},
             {"n", static_cast<double>(n)}});
  return in;
}

void check_common(const RegularityConstants& c, double eps_u, double eps_x, double nu, double eta,
                  std::size_t n) {
  c.validate();
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (!(eps_u >= 0) || !(eps_x >= 0) || !(nu >= 0) || !(eta >= 0))
    throw std::invalid_argument("budgets, nu and eta must be >= 0");
}

}  // namespace

BoundResult rademacher_additive_ct(TubeKind kind, const RegularityConstants& c, const EdissParams& p,
                                   double eps_u, double eps_x, double nu, double eta, std::size_t n) {
  require_mode(p, TimeMode::CT, "rademacher_additive_ct");
  check_common(c, eps_u, eps_x, nu, eta, n);
  const auto inputs = rademacher_inputs(c, p, eps_u, eps_x, nu, eta, n);
  const double root_n = std::sqrt(static_cast<double>(n));
  const double lip = c.L_gradV + eta * c.L_V;
  switch (kind) {
    case TubeKind::None: {
      auto r = make_result("ct_additive_none", inputs, "none");
      r.value = nu / root_n;
      return r;
    }
    case TubeKind::NormBounded: {
      auto r = make_result("ct_additive_norm_bounded", inputs, "none");
      r.value = (lip * p.gamma * eps_u / p.rho + c.B_gradV * eps_u + nu) / root_n;
      return r;
    }
    case TubeKind::Lipschitz: {
      auto r = make_result("ct_additive_lipschitz", inputs, kCtLipschitzPre);
      if (!(p.gamma * eps_x < p.rho)) {
        r.reason = "gamma*eps < rho required";
        return r;
      }
      const double g = p.gamma * eps_x / p.rho;
      r.value = ((lip + c.B_gradV * eps_x) * g / (1.0 - g) / kE * c.B_X * p.beta * eps_x +
                 c.B_gradV * c.B_X * p.beta * eps_x + nu) /
                root_n;
      return r;
    }
    case TubeKind::Combined: {
      auto r = make_result("ct_additive_combined", inputs, kCtLipschitzPre);
      if (!(p.gamma * eps_x < p.rho)) {
        r.reason = "gamma*eps < rho required";
        return r;
      }
      const double g = p.gamma * eps_x / p.rho;
      const double numer = p.gamma * eps_u / p.rho + g / kE * c.B_X * p.beta * eps_x;
      r.value = ((lip + c.B_gradV * eps_x) * numer / (1.0 - g) + c.B_gradV * p.beta * eps_x * c.B_X +
                 c.B_gradV * eps_u + nu) /
                root_n;
      return r;
    }
  }
  throw std::invalid_argument("unknown tube kind");
}

BoundResult rademacher_additive_dt(TubeKind kind, const RegularityConstants& c, const EdissParams& p,
                                   double eps_u, double eps_x, double nu, double eta, std::size_t n) {
  require_mode(p, TimeMode::DT, "rademacher_additive_dt");
  check_common(c, eps_u, eps_x, nu, eta, n);
  const auto inputs = rademacher_inputs(c, p, eps_u, eps_x, nu, eta, n);
  const double root_n = std::sqrt(static_cast<double>(n));
  const double eta2 = eta * eta;
  const bool stable = p.rho + p.gamma * eps_x < 1.0;
  switch (kind) {
    case TubeKind::None: {
      auto r = make_result("dt_additive_none", inputs, "none");
      r.value = nu / root_n;
      return r;
    }
    case TubeKind::NormBounded: {
      auto r = make_result("dt_additive_norm_bounded", inputs, "none");
      r.value = ((1.0 + eta2) * c.L_V * p.gamma * eps_u / (1.0 - p.rho) + nu) / root_n;
      return r;
    }
    case TubeKind::Lipschitz: {
      auto r = make_result("dt_additive_lipschitz", inputs, kDtLipschitzPre);
      if (!stable) {
        r.reason = "rho + gamma*eps < 1 required";
        return r;
      }
      r.value = (c.L_V * p.beta * c.B_X * (p.rho + p.gamma * eps_x + eta2) + nu) / root_n;
      return r;
    }
    case TubeKind::Combined: {
      auto r = make_result("dt_additive_combined", inputs, kDtLipschitzPre);
      if (!stable) {
        r.reason = "rho + gamma*eps < 1 required";
        return r;
      }
      const double peak = peak_t_exp(p.rho, TimeMode::DT).value;
      const double inner = (1.0 - p.rho) / (1.0 - (p.rho + p.gamma * eps_x)) * p.gamma * p.beta * c.B_X *
                               eps_x * peak +
                           p.gamma * eps_u / (1.0 - p.rho);
      r.value = ((1.0 + eta2) * c.L_V * inner + nu) / root_n;
      return r;
    }
  }
  throw std::invalid_argument("unknown tube kind");
}

double gen_bound(double rn, double tau, double b_h, std::size_t n, double delta, double k,
                 double log_inner_scale) {
  if (!(k > 0)) throw DomainError("gen_bound: universal constant K must be positive");
  if (!(delta > 0 && delta < 1)) throw DomainError("gen_bound: delta must lie in (0, 1)");
  if (!(tau > 0)) throw DomainError("gen_bound: tau must be positive");
  if (n < 2) throw DomainError("gen_bound: n must be >= 2");
  if (!(rn >= 0)) throw DomainError("gen_bound: R_n must be >= 0");
  const double ratio = log_inner_scale * b_h / tau;
  if (!(ratio > kE)) throw DomainError("gen_bound: B_h/tau must exceed e for the nested logarithm");
  const double nn = static_cast<double>(n);
  const double log_n = std::log(nn);
  return k * (log_n * log_n * log_n / (tau * tau) * rn * rn + std::log(std::log(ratio) / delta) / nn);
}

double lipschitz_bound_htilde(double l_h, double b_delta, TimeMode mode) {
  if (!(l_h >= 0)) throw std::invalid_argument("L_h must be >= 0");
  if (mode == TimeMode::DT) return l_h + 2.0;
  if (!(b_delta >= 0)) throw std::invalid_argument("B_delta must be >= 0");
  return l_h + b_delta;
}

double parametric_rademacher_estimate(double k, double c, double n) {
  if (!(k >= 1) || !(n >= 1) || !(c > 0)) throw std::invalid_argument("need k >= 1, n >= 1, C > 0");
  return c * std::sqrt(k / n);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd sym_eigenvalues(const Mat& a) {
  const Mat s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

constexpr double kLmiTol = 1e-9;

}  // namespace

ContractionResult check_contraction(const VectorField& f, const MetricFn& metric, double lambda, double mu,
                                    double l_upper, const std::vector<Vec>& grid) {
  if (grid.empty()) throw std::invalid_argument("check_contraction: empty grid");
  if (!(mu > 0 && mu <= l_upper)) throw std::invalid_argument("check_contraction: need 0 < mu <= L");
  ContractionResult out;
  out.worst_eigenvalue = -std::numeric_limits<double>::infinity();
  constexpr double h = 1e-6;
  for (const auto& x : grid) {
    const Mat m = metric(x);
    const auto mev = sym_eigenvalues(m);
    if (mev.minCoeff() < mu - kLmiTol || mev.maxCoeff() > l_upper + kLmiTol) {
      out.counterexample = x;
      out.failed_condition = "mu I <= M(x) <= L I";
      return out;
    }
    const Mat j = f.jacobian_at(x);
    const Vec fx = f.eval(0.0, x);
    const Mat m_dot = (metric(x + h * fx) - metric(x - h * fx)) / (2.0 * h);
    const Mat lmi = j.transpose() * m + m * j + m_dot + 2.0 * lambda * m;
    const double worst = sym_eigenvalues(lmi).maxCoeff();
    out.worst_eigenvalue = std::max(out.worst_eigenvalue, worst);
    if (worst > kLmiTol) {
      out.counterexample = x;
      out.failed_condition = "J^T M + M J + Mdot <= -2 lambda M";
      return out;
    }
  }
  out.pass = true;
  const double ratio = std::sqrt(l_upper / mu);
  out.params = EdissParams{ratio, lambda, ratio, TimeMode::CT};
  return out;
}

namespace {

struct Signal {
  SignalFamily kind = SignalFamily::Zero;
  Vec offset;
  Vec amplitude;
  double omega = 0.0;
  double phase = 0.0;

  Vec operator()(double t) const {
    switch (kind) {
      case SignalFamily::Zero: return Vec::Zero(offset.size());
      case SignalFamily::Constant: return offset;
      default: return offset + std::sin(omega * t + phase) * amplitude;
    }
  }
};

Vec uniform_vec(std::mt19937_64& rng, int p, double radius) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Vec v(p);
  for (int i = 0; i < p; ++i) v[i] = u(rng);
  return v;
}

// |signal(t)| <= amplitude for every t.
Signal random_signal(std::mt19937_64& rng, SignalFamily family, int p, double amplitude) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Signal s;
  s.kind = family;
  if (family == SignalFamily::Mixed) {
    const double pick = unit(rng);
    s.kind = pick < 0.2 ? SignalFamily::Zero : (pick < 0.6 ? SignalFamily::Constant : SignalFamily::Sinusoid);
  }
  const double a = amplitude * unit(rng);
  s.offset = uniform_vec(rng, p, 1.0);
  if (s.offset.norm() > 0) s.offset *= a / s.offset.norm();
  s.amplitude = Vec::Zero(p);
  if (s.kind == SignalFamily::Sinusoid) {
    const double split = unit(rng);
    s.offset *= split;
    s.amplitude = uniform_vec(rng, p, 1.0);
    if (s.amplitude.norm() > 0) s.amplitude *= (1.0 - split) * a / s.amplitude.norm();
    s.omega = 0.1 + 5.0 * unit(rng);
    s.phase = 2.0 * std::numbers::pi * unit(rng);
  }
  return s;
}

double safe_ratio(double lhs, double rhs) {
  if (rhs > 0) return lhs / rhs;
  return lhs > 1e-14 ? std::numeric_limits<double>::infinity() : 0.0;
}

}  // namespace

EdissReport verify_ediss(const VectorField& f, const EdissParams& p, std::size_t trials, SignalFamily family,
                         std::uint64_t seed, double horizon, double dt, double ic_radius,
                         double signal_amplitude) {
  require_mode(p, TimeMode::CT, "verify_ediss");
  if (trials < 1) throw std::invalid_argument("verify_ediss: trials must be >= 1");
  const std::size_t steps = step_count(horizon, dt);
  std::vector<double> ratios(trials, 0.0);
  parallel_for(trials, [&](std::size_t trial) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (trial + 1));
    const Vec x0 = uniform_vec(rng, f.dim, ic_radius);
    const Vec y0 = uniform_vec(rng, f.dim, ic_radius);
    const Signal u = random_signal(rng, family, f.dim, signal_amplitude);
    VectorField forced;
    forced.dim = f.dim;
    forced.eval = [&](double t, const Vec& y) -> Vec { return f.eval(t, y) + u(t); };
    Vec x = x0, y = y0;
    const double e0 = (x0 - y0).norm();
    // Trapezoid on a grid kQuadSub times finer than the rollout: at dt = 0.01
    // the plain rule is off by ~1e-4 relative for fast sinusoids, which is
    // more than the pass tolerance on tight claims.
    constexpr int kQuadSub = 64;
    const double h = dt / kQuadSub;
    const double decay = std::exp(-p.rho * dt);
    double integral = 0.0;
    double worst = safe_ratio(e0, p.beta * e0);
    for (std::size_t k = 1; k <= steps; ++k) {
      const double t0 = static_cast<double>(k - 1) * dt;
      x = rk4_step(f, t0, x, dt);
      y = rk4_step(forced, t0, y, dt);
      const double t = static_cast<double>(k) * dt;
      double piece = 0.0;
      for (int j = 0; j <= kQuadSub; ++j) {
        const double w = (j == 0 || j == kQuadSub) ? 0.5 : 1.0;
        piece += w * std::exp(-p.rho * (kQuadSub - j) * h) * u(t0 + j * h).norm();
      }
      integral = decay * integral + h * piece;
      const double rhs = p.beta * e0 * std::exp(-p.rho * t) + p.gamma * integral;
      worst = std::max(worst, safe_ratio((x - y).norm(), rhs));
    }
    ratios[trial] = worst;
  });
  EdissReport report;
  report.trials = trials;
  for (std::size_t i = 0; i < trials; ++i) {
    if (ratios[i] > report.max_ratio) {
      report.max_ratio = ratios[i];
      report.worst_trial = i;
    }
  }
  report.pass = report.max_ratio <= 1.0 + 1e-6;
  return report;
}

EdissReport verify_ediss_dt(const DiscreteMap& f, const EdissParams& p, std::size_t trials, SignalFamily family,
                            std::uint64_t seed, std::size_t steps, double ic_radius, double signal_amplitude) {
  require_mode(p, TimeMode::DT, "verify_ediss_dt");
  if (trials < 1) throw std::invalid_argument("verify_ediss_dt: trials must be >= 1");
  std::vector<double> ratios(trials, 0.0);
  parallel_for(trials, [&](std::size_t trial) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (trial + 1));
    const Vec x0 = uniform_vec(rng, f.dim, ic_radius);
    const Vec y0 = uniform_vec(rng, f.dim, ic_radius);
    const Signal u = random_signal(rng, family, f.dim, signal_amplitude);
    Vec x = x0, y = y0;
    const double e0 = (x0 - y0).norm();
    double forced_sum = 0.0;  // sum_{k<t} rho^{t-1-k} |u_k|
    double worst = safe_ratio(e0, p.beta * e0);
    for (std::size_t t = 1; t <= steps; ++t) {
      const Vec u_prev = u(static_cast<double>(t - 1));
      x = f.step(x);
      y = f.step(y) + u_prev;
      forced_sum = p.rho * forced_sum + u_prev.norm();
      const double rhs = p.beta * std::pow(p.rho, static_cast<double>(t)) * e0 + p.gamma * forced_sum;
      worst = std::max(worst, safe_ratio((x - y).norm(), rhs));
    }
    ratios[trial] = worst;
  });
  EdissReport report;
  report.trials = trials;
  for (std::size_t i = 0; i < trials; ++i) {
    if (ratios[i] > report.max_ratio) {
      report.max_ratio = ratios[i];
      report.worst_trial = i;
    }
  }
  report.pass = report.max_ratio <= 1.0 + 1e-6;
  return report;
}

// ---------------------------------------------------------------------------

namespace {

enum class Variant { WorstCase, Constant, Sinusoid, Feedback };

// Tube realization for a scalar oracle; budgets are respected by construction.
Disturbance tube_realization(const AdversarySpec& spec, Variant variant, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
  const double scale = variant == Variant::WorstCase ? 1.0 : unit(rng);
  const double omega = 0.2 + 4.0 * unit(rng);
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double eps_u = spec.eps_u, eps_x = spec.eps_x;

  auto input_part = [=](double t) -> Vec {
    switch (variant) {
      case Variant::WorstCase: return Vec::Constant(1, eps_u);
      case Variant::Constant: return Vec::Constant(1, sign * scale * eps_u);
      default: return Vec::Constant(1, scale * eps_u * std::sin(omega * t + phase));
    }
  };
  auto state_part = [=](double t, const Vec& x) -> Vec {
    switch (variant) {
      case Variant::WorstCase: return eps_x * x;
      case Variant::Constant: return sign * scale * eps_x * x;
      case Variant::Sinusoid: return scale * eps_x * std::sin(omega * t + phase) * x;
      case Variant::Feedback: return Vec::Constant(1, scale * eps_x * x.norm() * std::cos(omega * t + phase));
    }
    return Vec::Zero(1);
  };

  Disturbance d;
  d.name = "tube_realization";
  const TubeKind kind = spec.kind;
  d.eval = [=](double t, const Vec& x) {
    DisturbanceValue v{Vec::Zero(1), Vec::Zero(1)};
    if (kind == TubeKind::Lipschitz || kind == TubeKind::Combined) v.state_part = state_part(t, x);
    if (kind == TubeKind::NormBounded || kind == TubeKind::Combined) v.input_part = input_part(t);
    return v;
  };
  return d;
}

}  // namespace

DeviationReport verify_deviation_bound(const ScalarOracle& system, const AdversarySpec& spec, std::size_t trials,
                                       std::uint64_t seed, double ic_radius) {
  spec.validate();
  const EdissParams& p = system.params;
  p.validate();
  if (trials < 1) throw std::invalid_argument("verify_deviation_bound: trials must be >= 1");
  const bool ct = p.mode == TimeMode::CT;
  // Preconditions of the closed-form bound.
  {
    const auto probe = ct ? deviation_bound_ct(spec.kind, p, spec.eps_u, spec.eps_x, 1.0)
                          : deviation_bound_dt(spec.kind, p, spec.eps_u, spec.eps_x, 1.0, 0);
    if (!probe.ok()) throw DomainError("verify_deviation_bound: " + probe.reason);
  }
  const VectorField f = scalar_decay_field(p.rho);
  const DiscreteMap map = scalar_decay_map(p.rho);

  struct Outcome {
    double ratio = 0.0, dev = 0.0, bound = 0.0;
    double gap = -1.0;
  };
  std::vector<Outcome> outcomes(trials);
  parallel_for(trials, [&](std::size_t trial) {
    std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (trial + 1));
    std::uniform_real_distribution<double> u(-ic_radius, ic_radius);
    const Vec xi = Vec::Constant(1, u(rng));
    const auto variant = static_cast<Variant>(trial % 4);
    const Disturbance d = tube_realization(spec, variant, rng);
    const double xi_norm = xi.norm();
    Outcome o;
    if (ct) {
      const Trajectory nominal = rollout(f, xi, system.horizon, system.dt);
      const Trajectory pert = perturbed_rollout(f, d, spec, xi, system.horizon, system.dt);
      o.dev = (nominal.states - pert.states).rowwise().norm().maxCoeff();
      o.bound = *deviation_bound_ct(spec.kind, p, spec.eps_u, spec.eps_x, xi_norm).value;
      o.ratio = safe_ratio(o.dev, o.bound * (1.0 + 1e-9) + 1e-12);
    } else {
      const Trajectory nominal = dt_perturbed_rollout(map, zero_disturbance(1), no_adversary(), xi, system.steps);
      const Trajectory pert = dt_perturbed_rollout(map, d, spec, xi, system.steps);
      for (std::size_t t = 0; t <= system.steps; ++t) {
        const auto row = static_cast<Eigen::Index>(t);
        const double dev = (nominal.states.row(row) - pert.states.row(row)).norm();
        const double bound = *deviation_bound_dt(spec.kind, p, spec.eps_u, spec.eps_x, xi_norm, t).value;
        const double ratio = safe_ratio(dev, bound * (1.0 + 1e-9) + 1e-12);
        if (ratio >= o.ratio) {
          o.ratio = ratio;
          o.dev = dev;
          o.bound = bound;
        }
        if (spec.kind == TubeKind::Lipschitz && variant == Variant::WorstCase) {
          const double attained = pert.states.row(row).norm();
          o.gap = std::max(o.gap, std::abs(attained - bound));
        }
      }
    }
    outcomes[trial] = o;
  });

  DeviationReport report;
  report.trials = trials;
  for (const auto& o : outcomes) {
    if (o.ratio >= report.max_ratio) {
      report.max_ratio = o.ratio;
      report.max_deviation = o.dev;
      report.bound_at_worst = o.bound;
    }
    if (o.gap >= 0) report.worst_case_gap = std::max(report.worst_case_gap.value_or(0.0), o.gap);
  }
  report.pass = report.max_ratio <= 1.0;
  return report;
}

// ---------------------------------------------------------------------------

namespace {

// Level `level` of `depth` runs k from (level == depth ? 0 : 1) to upper - 1.
std::uint64_t count_nested(int level, int depth, int upper) {
  std::uint64_t total = 0;
  const int lo = level == depth ? 0 : 1;
  for (int k = lo; k <= upper - 1; ++k) total += level == depth ? 1 : count_nested(level + 1, depth, k);
  return total;
}

}  // namespace

std::uint64_t nested_sum_count(int t, int j) {
  if (j < 1 || j > t - 1) throw DomainError("nested_sum_count requires 1 <= j <= t - 1");
  return count_nested(1, j, t);
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

Peak peak_t_exp(double rho, TimeMode mode) {
  if (mode == TimeMode::CT) {
    if (!(rho > 0)) throw DomainError("peak_t_exp: CT rho must be positive");
    return {1.0 / rho, 1.0 / (rho * kE)};
  }
  if (!(rho > 0 && rho < 1)) throw DomainError("peak_t_exp: DT rho must lie in (0, 1)");
  const double log_inv = std::log(1.0 / rho);
  return {1.0 / log_inv, 1.0 / (kE * rho * log_inv)};
}

// ---------------------------------------------------------------------------

RegularityConstants estimate_regularity_constants(const std::vector<CertificateNet>& v_samples,
                                                  const VectorField& f, const std::vector<Vec>& s_grid,
                                                  const std::vector<Vec>& x_grid, double eta) {
  if (s_grid.empty() || x_grid.empty()) throw std::invalid_argument("regularity grids must be non-empty");
  RegularityConstants c;
  for (const auto& xi : x_grid) c.B_X = std::max(c.B_X, xi.norm());
  const auto n = s_grid.size();
  Mat xs(f.dim, static_cast<Eigen::Index>(n)), fs(f.dim, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    xs.col(static_cast<Eigen::Index>(i)) = s_grid[i];
    fs.col(static_cast<Eigen::Index>(i)) = f.eval(0.0, s_grid[i]);
  }
  for (const auto& v : v_samples) {
    const Vec vals = v.values(xs);
    const Mat grads = v.grads(xs);
    const Vec lie = v.directional(xs, fs);
    c.B_V = std::max(c.B_V, vals.cwiseAbs().maxCoeff());
    c.B_gradV = std::max(c.B_gradV, grads.colwise().norm().maxCoeff());
    c.B_htilde = std::max(c.B_htilde, (lie + eta * vals).cwiseAbs().maxCoeff());
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
        const double dist = (xs.col(ia) - xs.col(ib)).norm();
        if (dist <= 0) continue;
        c.L_V = std::max(c.L_V, std::abs(vals[ia] - vals[ib]) / dist);
        c.L_gradV = std::max(c.L_gradV, std::abs(lie[ia] - lie[ib]) / dist);
      }
    }
  }
  return c;
}

double sup_norm_distance(const CertificateNet& v1, const CertificateNet& v2, const std::vector<Vec>& grid) {
  if (grid.empty()) return 0.0;
  Mat xs(v1.dim(), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) xs.col(static_cast<Eigen::Index>(i)) = grid[i];
  const Vec dv = v1.values(xs) - v2.values(xs);
  const Mat dg = v1.grads(xs) - v2.grads(xs);
  return (dv.array().square() + dg.colwise().squaredNorm().transpose().array()).sqrt().maxCoeff();
}

std::vector<Vec> box_grid(const Vec& lo, const Vec& hi, std::size_t per_dim) {
  if (lo.size() != hi.size() || per_dim < 1) throw std::invalid_argument("box_grid: bad arguments");
  const auto p = lo.size();
  std::size_t total = 1;
  for (Eigen::Index d = 0; d < p; ++d) total *= per_dim;
  std::vector<Vec> out;
  out.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vec x(p);
    std::size_t rem = idx;
    for (Eigen::Index d = 0; d < p; ++d) {
      const std::size_t i = rem % per_dim;
      rem /= per_dim;
      x[d] = per_dim == 1 ? lo[d]
                          : lo[d] + (hi[d] - lo[d]) * static_cast<double>(i) / static_cast<double>(per_dim - 1);
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace lyapcert
