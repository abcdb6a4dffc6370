#pragma once

#include <functional>
#include <memory>
#include <string>

#include "lyapcert/certnet.hpp"
#include "lyapcert/sim.hpp"

namespace lyapcert {

enum class TubeKind { None, NormBounded, Lipschitz, Combined };
enum class Strategy { GreedyCertificate, Radial, FixedSignal, Custom };

std::string to_string(TubeKind kind);
TubeKind parse_tube_kind(const std::string& s);

/// Perturbation tube and its budgets. eps_u bounds |delta_u| (state units/s),
/// eps_x bounds |delta_x| / |x| (1/s).
struct AdversarySpec {
  TubeKind kind = TubeKind::None;
  double eps_u = 0.0;
  double eps_x = 0.0;
  Strategy strategy = Strategy::GreedyCertificate;

  void validate() const;
};

AdversarySpec no_adversary();
AdversarySpec norm_bounded(double eps_u, Strategy s = Strategy::GreedyCertificate);
AdversarySpec lipschitz(double eps_x, Strategy s = Strategy::GreedyCertificate);
AdversarySpec combined(double eps_x, double eps_u, Strategy s = Strategy::GreedyCertificate);

/// A realized disturbance, split into its state-proportional part and its
/// additive input part. total() = state_part + input_part.
struct DisturbanceValue {
  Vec state_part;
  Vec input_part;
  Vec total() const { return state_part + input_part; }
};

/// Causal disturbance delta(t, x). Any certificate it depends on is captured
/// by value at construction and treated as read-only.
struct Disturbance {
  std::string name;
  std::function<DisturbanceValue(double t, const Vec& x)> eval;

  DisturbanceValue operator()(double t, const Vec& x) const { return eval(t, x); }
};

inline constexpr double kGradientFloor = 1e-12;
inline constexpr double kBudgetSlack = 1e-9;

/// delta = c * grad V(x): the steepest ascent direction of <grad V, f + delta>
/// scaled to the budget. Zero where |grad V| < 1e-12. For Combined, both parts
/// point along grad V.
Disturbance greedy_disturbance(std::shared_ptr<const CertificateNet> v, const AdversarySpec& spec);
Disturbance radial_disturbance(double eps_x);
Disturbance zero_disturbance(int dim);
/// Time signal entering as an input (norm-bounded) disturbance.
Disturbance signal_disturbance(std::string name, std::function<Vec(double)> signal);
Disturbance constant_disturbance(const Vec& value);
/// State-feedback disturbance counted against the Lipschitz budget.
Disturbance state_feedback_disturbance(std::string name, std::function<Vec(double, const Vec&)> fb);

struct BudgetCheck {
  bool pass = true;
  double slack = 0.0;  // budget minus realized norm; the tighter part for Combined
};

/// Checks the realized disturbance against the tube; never throws.
BudgetCheck budget_check(const DisturbanceValue& delta, const Vec& x, const AdversarySpec& spec);
BudgetCheck budget_check(const Vec& delta, const Vec& x, const AdversarySpec& spec);

/// RK4 rollout of x' = f(x) + delta(t, x). Every evaluated delta is checked
/// against `spec`; violations throw BudgetViolation.
Trajectory perturbed_rollout(const VectorField& f, const Disturbance& d, const AdversarySpec& spec,
                             const Vec& xi, double horizon, double dt,
                             const std::vector<int>& wrap_dims = {});

/// Iterates x+ = f(x) + delta(t, x) for `steps` steps. times are 0, 1, ...;
/// derivs[k] = x[k+1] - x[k] (the last row uses the increment the map would take).
Trajectory dt_perturbed_rollout(const DiscreteMap& f, const Disturbance& d, const AdversarySpec& spec,
                                const Vec& xi, std::size_t steps);

}  // namespace lyapcert
