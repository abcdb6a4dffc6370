#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lyapcert/adversary.hpp"
#include "lyapcert/certnet.hpp"
#include "lyapcert/sim.hpp"

namespace lyapcert {

enum class TimeMode { CT, DT };

/// (beta, rho, gamma) exponential incremental ISS constants. In DT mode rho
/// is a per-step contraction factor in (0, 1).
struct EdissParams {
  double beta = 1.0;
  double rho = 1.0;
  double gamma = 1.0;
  TimeMode mode = TimeMode::CT;

  void validate() const;
};

struct RegularityConstants {
  double L_V = 0.0;
  double L_gradV = 0.0;
  double B_V = 0.0;
  double B_gradV = 0.0;
  double B_X = 0.0;
  double B_htilde = 0.0;

  void validate() const;
};

/// A closed-form bound evaluation. `value` is set only when the clause's
/// precondition holds; otherwise `reason` says which one failed.
struct BoundResult {
  std::optional<double> value;
  std::string formula_id;
  std::map<std::string, double> inputs;
  std::string precondition;
  std::string reason;

  bool ok() const { return value.has_value(); }
};

// --- deviation bounds: sup_t |phi_t - phi~_t| -----------------------------

/// Norm-bounded:  gamma eps_u / rho
/// Lipschitz:     (g/(1-g)) beta |xi| / e,            g = gamma eps_x / rho < 1
/// Combined:      (gamma eps_u / rho + g beta |xi| / e) / (1 - g)
BoundResult deviation_bound_ct(TubeKind kind, const EdissParams& p, double eps_u, double eps_x,
                               double xi_norm);

/// Norm-bounded:  gamma eps_u / (1 - rho)
/// Lipschitz:     beta |xi| (rho + gamma eps_x)^t       (needs rho + gamma eps_x < 1 for a uniform bound)
/// Combined:      (1-rho)/(1-rho-gamma eps_x) * gamma * (beta |xi| eps_x / (e rho ln(1/rho)) + eps_u/(1-rho))
/// `step` is only used by the Lipschitz clause.
BoundResult deviation_bound_dt(TubeKind kind, const EdissParams& p, double eps_u, double eps_x,
                               double xi_norm, std::size_t step = 0);

// --- additive Rademacher terms ---------------------------------------------

/// Additive term c/sqrt(n) with R_n(H~) <= R_n(H) + c/sqrt(n), continuous time.
BoundResult rademacher_additive_ct(TubeKind kind, const RegularityConstants& c, const EdissParams& p,
                                   double eps_u, double eps_x, double nu, double eta, std::size_t n);

/// Discrete-time analogue.
BoundResult rademacher_additive_dt(TubeKind kind, const RegularityConstants& c, const EdissParams& p,
                                   double eps_u, double eps_x, double nu, double eta, std::size_t n);

/// K (log^3(n)/tau^2 R_n^2 + log(log(scale B_h / tau)/delta)/n), up to the
/// universal constant K supplied by the caller. Throws DomainError.
double gen_bound(double rn, double tau, double b_h, std::size_t n, double delta, double k,
                 double log_inner_scale = 1.0);

/// CT: L_h + B_delta. DT: L_h + 2.
double lipschitz_bound_htilde(double l_h, double b_delta, TimeMode mode);

/// C sqrt(k/n): an order-of-magnitude proxy, not a certified bound.
double parametric_rademacher_estimate(double k, double c, double n);

// --- contraction / E-dISS --------------------------------------------------

struct ContractionResult {
  bool pass = false;
  std::optional<EdissParams> params;
  std::optional<Vec> counterexample;
  std::string failed_condition;
  double worst_eigenvalue = 0.0;
};

using MetricFn = std::function<Mat(const Vec&)>;

/// Pointwise check of mu I <= M(x) <= L I and J^T M + M J + Mdot <= -2 lambda M
/// on every grid state (max eigenvalue tolerance 1e-9; Mdot is the derivative
/// of M along f). On success returns (sqrt(L/mu), lambda, sqrt(L/mu)).
ContractionResult check_contraction(const VectorField& f, const MetricFn& metric, double lambda, double mu,
                                    double l_upper, const std::vector<Vec>& grid);

enum class SignalFamily { Mixed, Zero, Constant, Sinusoid };

struct EdissReport {
  bool pass = true;
  double max_ratio = 0.0;  // max over trials and samples of LHS / RHS
  std::size_t trials = 0;
  std::size_t worst_trial = 0;
};

/// Randomized check of the E-dISS inequality: pairs of initial conditions and
/// bounded input signals, LHS/RHS compared on the rollout grid with the
/// convolution integral by the trapezoid rule. Passes iff max ratio <= 1 + 1e-6.
EdissReport verify_ediss(const VectorField& f, const EdissParams& p, std::size_t trials, SignalFamily family,
                         std::uint64_t seed, double horizon = 5.0, double dt = 0.01,
                         double ic_radius = 2.0, double signal_amplitude = 1.0);

/// Discrete-time version (sum instead of integral).
EdissReport verify_ediss_dt(const DiscreteMap& f, const EdissParams& p, std::size_t trials,
                            SignalFamily family, std::uint64_t seed, std::size_t steps = 40,
                            double ic_radius = 2.0, double signal_amplitude = 1.0);

struct DeviationReport {
  bool pass = true;
  std::size_t trials = 0;
  double max_ratio = 0.0;      // empirical deviation / bound
  double max_deviation = 0.0;
  double bound_at_worst = 0.0;
  // DT Lipschitz only: for the worst-case delta = eps x realization, the largest
  // gap between |phi~_t| and beta |xi| (rho + gamma eps)^t.
  std::optional<double> worst_case_gap;
};

/// Oracle system for deviation checks: CT x' = -rho x or DT x+ = rho x.
struct ScalarOracle {
  EdissParams params;  // (1, rho, 1) for the decay system
  double horizon = 10.0;
  double dt = 0.01;
  std::size_t steps = 60;  // DT
};

/// Randomized tube realizations (constant, sinusoidal, state feedback with
/// time-varying gain, and the worst-case aligned ones) checked against the
/// closed-form deviation bound per trial.
DeviationReport verify_deviation_bound(const ScalarOracle& system, const AdversarySpec& spec,
                                       std::size_t trials, std::uint64_t seed, double ic_radius = 2.0);

// --- counting and peak identities -----------------------------------------

/// Brute-force count of the nested sum
///   sum_{k1=1}^{t-1} sum_{k2=1}^{k1-1} ... sum_{kj=0}^{k_{j-1}-1} 1.
/// Requires 1 <= j <= t - 1.
std::uint64_t nested_sum_count(int t, int j);

std::uint64_t binomial(int n, int k);

struct Peak {
  double t_star = 0.0;
  double value = 0.0;
};

/// CT: max_t t e^{-rho t} = 1/(rho e) at 1/rho.
/// DT: max_t t rho^{t-1} = 1/(e rho ln(1/rho)) at 1/ln(1/rho) (continuous relaxation).
Peak peak_t_exp(double rho, TimeMode mode);

// --- empirical regularity constants ----------------------------------------

/// Grid maxima of |V|, |grad V| and Lipschitz quotients of V and <grad V, f>
/// over all grid pairs, plus B_X = max |xi|. These are lower bounds on the
/// true suprema. B_htilde is the grid max of |<grad V, f> + eta V|.
RegularityConstants estimate_regularity_constants(const std::vector<CertificateNet>& v_samples,
                                                  const VectorField& f, const std::vector<Vec>& s_grid,
                                                  const std::vector<Vec>& x_grid, double eta = 0.0);

/// max over grid of |(V1 - V2, grad V1 - grad V2)|_2, the stacked sup norm.
double sup_norm_distance(const CertificateNet& v1, const CertificateNet& v2, const std::vector<Vec>& grid);

/// Tensor grid over a box with `per_dim` points per axis.
std::vector<Vec> box_grid(const Vec& lo, const Vec& hi, std::size_t per_dim);

}  // namespace lyapcert
