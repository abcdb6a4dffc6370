#include <cmath>
#include <memory>
#include <random>

#include "helpers.hpp"
#include "lyapcert/adversary.hpp"
#include "lyapcert/errors.hpp"

using namespace lyapcert;
using testing::vec1;
using testing::vec2;

namespace {

std::shared_ptr<const CertificateNet> test_certificate() {
  return std::make_shared<const CertificateNet>(testing::deterministic_params());
}

Vec random_ball_point(std::mt19937_64& rng, int dim, double radius) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec d(dim);
  for (int i = 0; i < dim; ++i) d[i] = normal(rng);
  return d.normalized() * radius * std::pow(unit(rng), 1.0 / dim);
}

}  // namespace

TEST_SUITE("adversary") {
  TEST_CASE("spec invariants") {
    CHECK_NOTHROW(no_adversary().validate());
    CHECK_THROWS(AdversarySpec{TubeKind::None, 0.1, 0.0}.validate());
    CHECK_THROWS(AdversarySpec{TubeKind::NormBounded, 0.1, 0.2}.validate());
    CHECK_THROWS(AdversarySpec{TubeKind::Lipschitz, 0.1, 0.2}.validate());
    CHECK_THROWS(lipschitz(-0.1).validate());
    CHECK_NOTHROW(combined(0.1, 0.2).validate());
    CHECK(parse_tube_kind(to_string(TubeKind::Combined)) == TubeKind::Combined);
    CHECK_THROWS(parse_tube_kind("bogus"));
  }

  TEST_CASE("greedy disturbance examples") {
    const auto d0 = greedy_disturbance(std::make_shared<const CertificateNet>(testing::deterministic_params()), lipschitz(0.1));
    CHECK(d0(0.0, vec2(0, 0)).total().norm() == 0.0);

    const auto v = test_certificate();
    const auto dl = greedy_disturbance(v, lipschitz(0.1));
    const auto dn = greedy_disturbance(v, norm_bounded(0.3));
    for (const Vec& x : {vec2(1, 1), vec2(0.3, -0.7), vec2(-1.5, 0.25)}) {
      CHECK(dl(0.0, x).total().norm() == doctest::Approx(0.1 * x.norm()).epsilon(1e-14));
      CHECK(dn(0.0, x).total().norm() == doctest::Approx(0.3).epsilon(1e-14));
      // aligned with the gradient
      const Vec g = v->grad(x);
      CHECK(dl(0.0, x).total().dot(g) == doctest::Approx(0.1 * x.norm() * g.norm()).epsilon(1e-13));
    }
  }

  TEST_CASE("greedy combined splits into aligned parts") {
    const auto v = test_certificate();
    const auto d = greedy_disturbance(v, combined(0.1, 0.2));
    const Vec x = vec2(0.5, -1.0);
    const auto val = d(0.0, x);
    CHECK(val.state_part.norm() == doctest::Approx(0.1 * x.norm()));
    CHECK(val.input_part.norm() == doctest::Approx(0.2));
    CHECK(budget_check(val, x, combined(0.1, 0.2)).pass);
    CHECK_THROWS(greedy_disturbance(v, no_adversary()));
  }

  TEST_CASE("radial disturbance examples") {
    CHECK(radial_disturbance(0.5)(0.0, vec2(2, 0)).total() == vec2(1, 0));
    CHECK(radial_disturbance(0.0)(0.0, vec2(3, -1)).total().norm() == 0.0);
    CHECK(radial_disturbance(0.1)(0.0, vec2(3, 4)).total().norm() == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS(radial_disturbance(-1.0));
  }

  TEST_CASE("budget_check examples") {
    CHECK(budget_check(vec2(0.6, 0.8), vec2(5, 5), norm_bounded(1.0)).pass);
    CHECK_FALSE(budget_check(vec2(0.2, 0), vec2(1, 0), lipschitz(0.1)).pass);
    CHECK(budget_check(vec2(0, 0), vec2(1, 0), no_adversary()).pass);
    CHECK_FALSE(budget_check(vec2(0.1, 0), vec2(1, 0), no_adversary()).pass);
    // slack reports the tighter part
    const DisturbanceValue dv{vec2(0.05, 0), vec2(0.19, 0)};
    const auto bc = budget_check(dv, vec2(1, 0), combined(0.1, 0.2));
    CHECK(bc.pass);
    CHECK(bc.slack == doctest::Approx(0.01));
  }

  TEST_CASE("budget slack is relative 1e-9") {
    CHECK(budget_check(vec1(1.0 + 0.5e-9), vec1(0), norm_bounded(1.0)).pass);
    CHECK_FALSE(budget_check(vec1(1.0 + 2e-9), vec1(0), norm_bounded(1.0)).pass);
  }

  TEST_CASE("perturbed rollout examples") {
    const auto f = scalar_decay_field(1.0);
    const auto nominal = rollout(f, vec1(1.0), 2.0, 0.01);
    const auto zero = perturbed_rollout(f, zero_disturbance(1), no_adversary(), vec1(1.0), 2.0, 0.01);
    CHECK(zero.states == nominal.states);
    CHECK(zero.derivs == nominal.derivs);

    const auto radial = perturbed_rollout(f, radial_disturbance(0.25), lipschitz(0.25), vec1(1.0), 2.0, 0.01);
    for (std::size_t k = 0; k < radial.size(); ++k)
      CHECK(std::abs(radial.states(static_cast<Eigen::Index>(k), 0) - std::exp(-0.75 * radial.times[k])) < 1e-6);

    const auto konst = perturbed_rollout(f, constant_disturbance(vec1(0.1)), norm_bounded(0.1), vec1(0.0), 5.0, 0.01);
    for (std::size_t k = 0; k < konst.size(); ++k)
      CHECK(std::abs(konst.states(static_cast<Eigen::Index>(k), 0) - 0.1 * (1 - std::exp(-konst.times[k]))) < 1e-9);
    CHECK(konst.disturbances.rows() == static_cast<Eigen::Index>(konst.size()));
  }

  TEST_CASE("perturbed rollout enforces the budget") {
    const auto f = scalar_decay_field(1.0);
    CHECK_THROWS_AS(perturbed_rollout(f, constant_disturbance(vec1(0.2)), norm_bounded(0.1), vec1(0.0), 1.0, 0.1),
                    BudgetViolation);
    CHECK_THROWS_AS(perturbed_rollout(f, radial_disturbance(0.3), lipschitz(0.2), vec1(1.0), 1.0, 0.1),
                    BudgetViolation);
  }

  TEST_CASE("discrete perturbed rollout examples") {
    const auto map = scalar_decay_map(0.8);
    const auto t = dt_perturbed_rollout(map, radial_disturbance(0.1), lipschitz(0.1), vec1(1.0), 5);
    CHECK(t.states(5, 0) == doctest::Approx(0.59049).epsilon(1e-14));
    const auto z = dt_perturbed_rollout(map, zero_disturbance(1), no_adversary(), vec1(1.0), 5);
    for (int k = 0; k <= 5; ++k) CHECK(z.states(k, 0) == doctest::Approx(std::pow(0.8, k)).epsilon(1e-15));
    const auto s = dt_perturbed_rollout(map, constant_disturbance(vec1(0.1)), norm_bounded(0.1), vec1(0.0), 3);
    CHECK(s.states(3, 0) == doctest::Approx(0.244).epsilon(1e-14));
    CHECK_THROWS(dt_perturbed_rollout(map, zero_disturbance(1), no_adversary(), vec1(1.0), 0));
  }

  TEST_CASE("tube membership over 1000 evaluations") {
    const auto v = test_certificate();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> box(-3.0, 3.0);
    const std::vector<std::pair<Disturbance, AdversarySpec>> suite = {
        {greedy_disturbance(v, lipschitz(0.1)), lipschitz(0.1)},
        {greedy_disturbance(v, norm_bounded(0.3)), norm_bounded(0.3)},
        {greedy_disturbance(v, combined(0.2, 0.05)), combined(0.2, 0.05)},
        {radial_disturbance(0.25), lipschitz(0.25)},
        {zero_disturbance(2), no_adversary()},
    };
    for (const auto& [d, spec] : suite) {
      for (int i = 0; i < 1000; ++i) {
        const Vec x = vec2(box(rng), box(rng));
        CHECK(budget_check(d(box(rng), x), x, spec).pass);
      }
    }
  }

  TEST_CASE("zero budget matches the nominal rollout bitwise") {
    const auto f = pendulum_field(PendulumParams{});
    const auto v = test_certificate();
    for (const Vec& xi : {vec2(1.0, -1.0), vec2(-2.0, 2.0)}) {
      const auto nominal = rollout(f, xi, 8.0, 0.05, {0});
      const auto g = perturbed_rollout(f, greedy_disturbance(v, lipschitz(0.0)), lipschitz(0.0), xi, 8.0, 0.05, {0});
      CHECK(g.states == nominal.states);
      const auto r = perturbed_rollout(f, radial_disturbance(0.0), lipschitz(0.0), xi, 8.0, 0.05, {0});
      CHECK(r.states == nominal.states);
    }
  }

  TEST_CASE("greedy maximizes the ascent over the budget ball") {
    const auto v = test_certificate();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> box(-2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec x = vec2(box(rng), box(rng));
      const Vec g = v->grad(x);
      for (const auto& spec : {lipschitz(0.1), norm_bounded(0.3)}) {
        const double radius = spec.kind == TubeKind::Lipschitz ? 0.1 * x.norm() : 0.3;
        const double greedy = g.dot(greedy_disturbance(v, spec)(0.0, x).total());
        double best = -1e300;
        for (int i = 0; i < 10000; ++i) best = std::max(best, g.dot(random_ball_point(rng, 2, radius)));
        CHECK(greedy >= best);
      }
    }
  }

  TEST_CASE("radial adversary beyond the decay rate diverges") {
    const auto t = perturbed_rollout(scalar_decay_field(0.5), radial_disturbance(0.8), lipschitz(0.8), vec1(1.0), 5.0, 0.05);
    for (std::size_t k = 1; k < t.size(); ++k)
      CHECK(std::abs(t.states(static_cast<Eigen::Index>(k), 0)) > std::abs(t.states(static_cast<Eigen::Index>(k - 1), 0)));
  }
}
