#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lyapcert/adversary.hpp"
#include "lyapcert/certnet.hpp"
#include "lyapcert/sim.hpp"

namespace lyapcert {

/// Per-sample decrease values along one trajectory and their maximum.
struct ViolationReport {
  std::vector<double> samples;
  double value = 0.0;  // max of samples
  std::size_t worst_index = 0;
  double worst_time = 0.0;
  double eta = 0.0;
  double nu = 0.0;
  double tau = 0.0;
};

/// <grad V(x_k), xdot_k> + eta V(x_k) at every sample of `traj`.
ViolationReport violation_report(const Trajectory& traj, const CertificateNet& v, double eta);

/// max_k <grad V(x_k), xdot_k> + eta V(x_k), the grid approximation of the
/// continuous-time supremum.
double h_nominal(const Trajectory& traj, const CertificateNet& v, double eta);

struct Realization {
  Disturbance disturbance;
  AdversarySpec spec;
};

/// Max of the decrease scan over perturbed rollouts of every realization,
/// minus nu. This is a lower bound on the supremum over the whole tube.
double h_adversarial(const Vec& xi, const CertificateNet& v, const VectorField& f,
                     const std::vector<Realization>& adversary_set, double eta, double nu,
                     double horizon, double dt, const std::vector<int>& wrap_dims = {});

struct Feasibility {
  bool feasible = true;
  std::size_t violations = 0;
};

/// Feasible iff every value is <= -tau.
Feasibility feasibility_check(const std::vector<double>& h_values, double tau);

/// Empirical 0-1 risk (1/n) #{h_i > -tau}.
double empirical_risk(const std::vector<double>& h_values, double tau);

struct SatisfactionRow {
  double eta = 0.0;
  double traj_rate = 0.0;
  double point_rate = 0.0;
};

/// Fraction of trajectories with h <= 0 and of samples with a non-positive
/// decrease value, for each eta.
std::vector<SatisfactionRow> satisfaction_rates(const std::vector<Trajectory>& trajs,
                                                const CertificateNet& v,
                                                const std::vector<double>& eta_grid);

std::vector<double> uniform_grid(double lo, double hi, std::size_t points);

/// Nominal or perturbed test system with its initial-condition distribution.
struct TestSystem {
  VectorField f;
  Vec box_lo;
  Vec box_hi;
  double horizon = 8.0;
  double dt = 0.05;
  std::vector<int> wrap_dims;
};

struct ErrorEstimate {
  double err_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t failures = 0;
  std::size_t n = 0;
};

/// Wilson score interval for `failures` out of `n` at 95% confidence.
std::pair<double, double> wilson_interval(std::size_t failures, std::size_t n);

/// Monte Carlo estimate of P[h~_nu(xi, V) > 0]. An empty adversary set
/// evaluates the nominal violation function.
ErrorEstimate estimate_generalization_error(const CertificateNet& v, const TestSystem& system,
                                            const std::vector<Realization>& adversary_set,
                                            std::size_t n_test, double eta, double nu,
                                            std::uint64_t seed);

/// Discrete-time violation: max_t V(x_{t+1}) - eta^2 V(x_t), 0 < eta < 1.
double h_dt(const Trajectory& traj, const CertificateNet& v, double eta);

}  // namespace lyapcert
