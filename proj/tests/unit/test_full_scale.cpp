// Full-size training runs. Slow (about four minutes on one core), so they sit in
// their own suite and ctest entry.

#include <memory>

#include "helpers.hpp"
#include "lyapcert/commands.hpp"
#include "lyapcert/trainer.hpp"
#include "lyapcert/violation.hpp"

using namespace lyapcert;

namespace {

double traj_rate_at(const std::vector<Trajectory>& trajs, const CertificateNet& v, double eta) {
  return satisfaction_rates(trajs, v, {eta}).front().traj_rate;
}

RunConfig full_scale() {
  RunConfig c;
  c.evaluate.n_test = 1000;
  return c;
}

}  // namespace

TEST_SUITE("full_scale") {
  TEST_CASE("nominal certificate covers fresh nominal trajectories") {
    const auto c = full_scale();
    const auto f = pendulum_field(c.pendulum);
    TrainConfig tc = c.train;
    tc.seed = derive_seed(c.seed, 3);
    const auto data = build_dataset(retain_training_samples(rollout_all(f, training_initial_conditions(c), tc.horizon, tc.dt, {0})));
    const auto r = train_nominal(data, tc, training_init(c));
    const auto test = retain_training_samples(rollout_all(f, test_initial_conditions(c), tc.horizon, tc.dt, {0}));
    const double rate = traj_rate_at(test, CertificateNet(r.params), tc.eta);
    MESSAGE("V_nom nominal trajectory rate at eta 0.4: " << rate);
    CHECK(rate >= 0.99);
  }

  TEST_CASE("adversarial certificate covers greedy-perturbed trajectories") {
    const auto c = full_scale();
    const auto f = pendulum_field(c.pendulum);
    TrainConfig tc = c.train;
    tc.seed = derive_seed(c.seed, 3);
    const auto r = train_adversarial(f, training_initial_conditions(c), tc, training_init(c), {0});
    const auto v = std::make_shared<const CertificateNet>(r.params);
    const auto test = perturbation_class_trajectories(1, c, v, test_initial_conditions(c));
    const double rate = traj_rate_at(test, *v, tc.eta);
    MESSAGE("V_adv class 1 trajectory rate at eta 0.4: " << rate);
    CHECK(rate >= 0.95);
  }
}
