#include "lyapcert/violation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

namespace {

// (<grad V, xdot>, V) for every sample of the trajectory.
std::pair<Vec, Vec> decrease_parts(const Trajectory& traj, const CertificateNet& v) {
  const Mat xs = traj.states.transpose();
  const Mat vs = traj.derivs.transpose();
  return {v.directional(xs, vs), v.values(xs)};
}

}  // namespace

ViolationReport violation_report(const Trajectory& traj, const CertificateNet& v, double eta) {
  if (traj.size() == 0) throw std::invalid_argument("violation_report: empty trajectory");
  if (traj.derivs.rows() != traj.states.rows()) throw ShapeMismatch("trajectory derivs missing");
  const auto [dir, vals] = decrease_parts(traj, v);
  ViolationReport r;
  r.eta = eta;
  r.samples.resize(traj.size());
  r.value = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    r.samples[k] = dir[i] + eta * vals[i];
    if (r.samples[k] > r.value) {
      r.value = r.samples[k];
      r.worst_index = k;
    }
  }
  r.worst_time = traj.times[r.worst_index];
  return r;
}

double h_nominal(const Trajectory& traj, const CertificateNet& v, double eta) {
  return violation_report(traj, v, eta).value;
}

double h_adversarial(const Vec& xi, const CertificateNet& v, const VectorField& f,
                     const std::vector<Realization>& adversary_set, double eta, double nu,
                     double horizon, double dt, const std::vector<int>& wrap_dims) {
  if (adversary_set.empty()) throw std::invalid_argument("h_adversarial: adversary set is empty");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& r : adversary_set) {
    const Trajectory traj = perturbed_rollout(f, r.disturbance, r.spec, xi, horizon, dt, wrap_dims);
    best = std::max(best, h_nominal(traj, v, eta));
  }
  return best - nu;
}

Feasibility feasibility_check(const std::vector<double>& h_values, double tau) {
  if (!(tau >= 0)) throw std::invalid_argument("margin tau must be >= 0");
  Feasibility out;
  for (double h : h_values)
    if (h > -tau) ++out.violations;
  out.feasible = out.violations == 0;
  return out;
}

double empirical_risk(const std::vector<double>& h_values, double tau) {
  if (h_values.empty()) return 0.0;
  return static_cast<double>(feasibility_check(h_values, tau).violations) /
         static_cast<double>(h_values.size());
}

std::vector<SatisfactionRow> satisfaction_rates(const std::vector<Trajectory>& trajs,
                                                const CertificateNet& v,
                                                const std::vector<double>& eta_grid) {
  std::vector<SatisfactionRow> table;
  if (eta_grid.empty()) return table;
  std::vector<std::pair<Vec, Vec>> parts(trajs.size());
  parallel_for(trajs.size(), [&](std::size_t i) { parts[i] = decrease_parts(trajs[i], v); });
  std::size_t total_points = 0;
  for (const auto& t : trajs) total_points += t.size();
  for (double eta : eta_grid) {
    std::size_t good_traj = 0, good_points = 0;
    for (const auto& [dir, vals] : parts) {
      bool all_ok = true;
      for (Eigen::Index k = 0; k < dir.size(); ++k) {
        if (dir[k] + eta * vals[k] <= 0.0)
          ++good_points;
        else
          all_ok = false;
      }
      if (all_ok) ++good_traj;
    }
    SatisfactionRow row;
    row.eta = eta;
    row.traj_rate = trajs.empty() ? 0.0 : static_cast<double>(good_traj) / static_cast<double>(trajs.size());
    row.point_rate =
        total_points == 0 ? 0.0 : static_cast<double>(good_points) / static_cast<double>(total_points);
    table.push_back(row);
  }
  return table;
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t points) {
  std::vector<double> out;
  if (points == 0) return out;
  if (points == 1) return {lo};
  out.reserve(points);
  for (std::size_t i = 0; i < points; ++i)
    out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  return out;
}

std::pair<double, double> wilson_interval(std::size_t failures, std::size_t n) {
  if (n == 0) return {0.0, 1.0};
  // the closed-form endpoints at 0 and n are exact; avoid their rounding residue
  constexpr double z = 1.959963984540054;
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(failures) / nn;
  const double denom = 1.0 + z * z / nn;
  const double centre = (phat + z * z / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z * z / (4.0 * nn * nn)) / denom;
  const double lo = failures == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = failures == n ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

ErrorEstimate estimate_generalization_error(const CertificateNet& v, const TestSystem& system,
                                            const std::vector<Realization>& adversary_set,
                                            std::size_t n_test, double eta, double nu,
                                            std::uint64_t seed) {
  if (n_test < 1) throw std::invalid_argument("n_test must be >= 1");
  const auto ics = sample_initial_conditions(n_test, system.box_lo, system.box_hi, seed);
  std::vector<double> h(n_test);
  parallel_for(n_test, [&](std::size_t i) {
    if (adversary_set.empty()) {
      h[i] = h_nominal(rollout(system.f, ics[i], system.horizon, system.dt, system.wrap_dims), v, eta) - nu;
    } else {
      h[i] = h_adversarial(ics[i], v, system.f, adversary_set, eta, nu, system.horizon, system.dt,
                           system.wrap_dims);
    }
  });
  ErrorEstimate est;
  est.n = n_test;
  est.failures = static_cast<std::size_t>(std::count_if(h.begin(), h.end(), [](double x) { return x > 0; }));
  est.err_hat = static_cast<double>(est.failures) / static_cast<double>(n_test);
  std::tie(est.ci_lo, est.ci_hi) = wilson_interval(est.failures, n_test);
  return est;
}

double h_dt(const Trajectory& traj, const CertificateNet& v, double eta) {
  if (traj.size() < 2) throw std::invalid_argument("h_dt needs at least two samples");
  if (!(eta > 0 && eta < 1)) throw DomainError("h_dt requires 0 < eta < 1");
  const Vec vals = v.values(traj.states.transpose());
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < vals.size(); ++k) best = std::max(best, vals[k + 1] - eta * eta * vals[k]);
  return best;
}

}  // namespace lyapcert
