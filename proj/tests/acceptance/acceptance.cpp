// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance            run all eight
//   acceptance 2 4 6      run a subset
//
// Tolerances and thresholds are pinned below; nothing is read from the
// environment except the output root (TMPDIR via std::filesystem).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lyapcert/commands.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"
#include "lyapcert/theory.hpp"

#ifndef LYAPCERT_SOURCE_DIR
#define LYAPCERT_SOURCE_DIR "."
#endif

using namespace lyapcert;
namespace fs = std::filesystem;

namespace {

constexpr double kRateAdvMin = 0.95;
constexpr double kRateNomMax = 0.05;
constexpr double kGradRelTol = 1e-5;
constexpr int kGradInstances = 50;
constexpr std::size_t kDeviationTrials = 1000;
constexpr double kTightGap = 1e-9;
constexpr double kPeakTol = 1e-12;
constexpr std::size_t kEdissTrials = 200;
constexpr double kDerivedTol = 1e-12;
constexpr int kGreedyPairs = 100;
constexpr int kGreedySamples = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("lyapcert_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path desk_config() { return fs::path(LYAPCERT_SOURCE_DIR) / "configs" / "desk.ini"; }

// Trains and evaluates the desk experiment into `out`; returns the first
// nonzero exit code.
int desk_run(const fs::path& out) {
  CommandOptions o;
  o.config_path = desk_config();
  o.out = out;
  if (int rc = cmd_train(o)) return rc;
  return cmd_evaluate(o);
}

// --- 1 ---------------------------------------------------------------------

Outcome robustness_separation() {
  const auto out = scratch("c1");
  if (int rc = desk_run(out)) return {false, "desk run exited " + std::to_string(rc)};
  const auto ev = nlohmann::json::parse(read_text_file(out / "evaluation.json"));
  bool pass = true;
  std::string detail = "eps_x " + fmt(ev["evaluation_eps_x"].get<double>()) + ";";
  for (const auto& row : ev["rates_at_training_eta"]) {
    const std::string cert = row["certificate"];
    const double rate = row["traj_rate"];
    const bool ok = cert == "V_adv" ? rate >= kRateAdvMin : rate <= kRateNomMax;
    pass = pass && ok;
    detail += " " + cert + "/" + row["perturbation_class"].get<std::string>() + "=" + fmt(rate) + (ok ? "" : "(!)");
  }
  return {pass, detail};
}

// --- 2 ---------------------------------------------------------------------

Outcome gradient_oracle() {
  const MlpArchitecture arch{2, 20};
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  double worst_x = 0.0, worst_theta = 0.0;
  for (int i = 0; i < kGradInstances; ++i) {
    const auto th = init_params(arch, 500 + static_cast<std::uint64_t>(i));
    Vec x(2);
    x << box(rng), box(rng);
    const Vec g = grad_x_V(th, x);
    for (int d = 0; d < 2; ++d) {
      const double h = 1e-5;
      Vec xp = x, xm = x;
      xp[d] += h;
      xm[d] -= h;
      worst_x = std::max(worst_x, rel_err(g[d], (eval_V(th, xp) - eval_V(th, xm)) / (2 * h)));
    }
  }
  const auto f = pendulum_field(PendulumParams{});
  for (int i = 0; i < kGradInstances; ++i) {
    const auto th = init_params(arch, 700 + static_cast<std::uint64_t>(i));
    Mat xs(2, 8), vs(2, 8);
    for (int j = 0; j < 8; ++j) {
      Vec x(2);
      x << box(rng), box(rng);
      xs.col(j) = x;
      vs.col(j) = f(0.0, x);
    }
    const auto lg = grad_theta(th, xs, vs, 0.4, 0.1);
    const auto flat = th.flatten();
    std::uniform_int_distribution<std::size_t> pick(0, flat.size() - 1);
    for (int c = 0; c < 20; ++c) {
      const std::size_t k = pick(rng);
      const double h = 1e-6;
      auto plus = flat, minus = flat;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (surrogate_loss(CertificateParams::unflatten(arch, plus), xs, vs, 0.4, 0.1) -
                         surrogate_loss(CertificateParams::unflatten(arch, minus), xs, vs, 0.4, 0.1)) /
                        (2 * h);
      worst_theta = std::max(worst_theta, rel_err(lg.grad[k], fd));
    }
  }
  return {worst_x <= kGradRelTol && worst_theta <= kGradRelTol,
          "max rel err grad_x " + fmt(worst_x) + ", grad_theta " + fmt(worst_theta)};
}

// --- 3 ---------------------------------------------------------------------

Outcome deviation_bounds() {
  const ScalarOracle ct{{1.0, 1.0, 1.0, TimeMode::CT}};
  const ScalarOracle dt{{1.0, 0.5, 1.0, TimeMode::DT}};
  struct Case {
    std::string name;
    const ScalarOracle* sys;
    AdversarySpec spec;
  };
  const std::vector<Case> cases{{"ct_norm_bounded", &ct, norm_bounded(0.1)},
                                {"ct_lipschitz", &ct, lipschitz(0.2)},
                                {"ct_combined", &ct, combined(0.2, 0.1)},
                                {"dt_norm_bounded", &dt, norm_bounded(0.1)},
                                {"dt_lipschitz", &dt, lipschitz(0.2)},
                                {"dt_combined", &dt, combined(0.2, 0.1)}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    const auto r = verify_deviation_bound(*c.sys, c.spec, kDeviationTrials, 3);
    bool ok = r.pass && r.trials == kDeviationTrials;
    detail += c.name + " " + fmt(r.max_ratio);
    if (c.name == "dt_lipschitz") {
      ok = ok && r.worst_case_gap && *r.worst_case_gap <= kTightGap;
      detail += " gap " + (r.worst_case_gap ? fmt(*r.worst_case_gap) : std::string("missing"));
    }
    detail += ok ? "; " : "(!); ";
    pass = pass && ok;
  }
  return {pass, detail};
}

// --- 4 ---------------------------------------------------------------------

Outcome counting_identities() {
  int checked = 0;
  for (int t = 2; t <= 12; ++t)
    for (int j = 1; j <= t - 1; ++j, ++checked)
      if (nested_sum_count(t, j) != binomial(t, j))
        return {false, "nested sum mismatch at t=" + std::to_string(t) + " j=" + std::to_string(j)};
  double worst = 0.0;
  for (double rho : {0.5, 1.0, 2.0}) {
    const auto p = peak_t_exp(rho, TimeMode::CT);
    worst = std::max({worst, std::abs(p.t_star - 1.0 / rho), std::abs(p.value - 1.0 / (rho * std::numbers::e))});
  }
  return {worst <= kPeakTol, std::to_string(checked) + " binomials; peak max abs err " + fmt(worst)};
}

// --- 5 ---------------------------------------------------------------------

Outcome ediss_certification() {
  bool pass = true;
  std::string detail;
  for (double rho : {0.5, 1.0, 2.0}) {
    const auto f = scalar_decay_field(rho);
    const auto tight = verify_ediss(f, {1.0, rho, 1.0, TimeMode::CT}, kEdissTrials, SignalFamily::Mixed, 5);
    const auto over = verify_ediss(f, {1.0, 2 * rho, 1.0, TimeMode::CT}, kEdissTrials, SignalFamily::Mixed, 5);
    const bool ok = tight.pass && tight.trials == kEdissTrials && !over.pass;
    pass = pass && ok;
    detail += "rho " + fmt(rho) + ": ratio " + fmt(tight.max_ratio) + ", over-claim " + fmt(over.max_ratio) +
              (ok ? "; " : "(!); ");
  }
  return {pass, detail};
}

// --- 6 ---------------------------------------------------------------------

Outcome bound_regression() {
  const EdissParams ct{1, 1, 1, TimeMode::CT};
  const EdissParams dt{1, 0.5, 1, TimeMode::DT};
  const RegularityConstants unit{1, 1, 1, 1, 1, 1};
  RegularityConstants lv{};
  lv.L_V = 1;
  RegularityConstants lvbx = lv;
  lvbx.B_X = 2;
  struct Example {
    std::string name;
    std::function<double()> value;
    double expected;
  };
  const std::vector<Example> examples{
      {"ct_dev_nb", [&] { return *deviation_bound_ct(TubeKind::NormBounded, ct, 0.1, 0, 1).value; }, 0.1},
      {"ct_dev_lip", [&] { return *deviation_bound_ct(TubeKind::Lipschitz, {1, 2, 1, TimeMode::CT}, 0, 1, 1).value; },
       0.36787944117144233},
      {"ct_dev_comb", [&] { return *deviation_bound_ct(TubeKind::Combined, ct, 0.1, 0.1, 1).value; },
       0.1519866045746047},
      {"dt_dev_nb", [&] { return *deviation_bound_dt(TubeKind::NormBounded, dt, 0.1, 0, 1).value; }, 0.2},
      {"dt_dev_lip", [&] { return *deviation_bound_dt(TubeKind::Lipschitz, dt, 0, 0.2, 2, 3).value; }, 0.686},
      {"dt_dev_comb", [&] { return *deviation_bound_dt(TubeKind::Combined, dt, 0.1, 0.2, 1).value; },
       0.6871585636153621},
      {"ct_add_nb", [&] { return *rademacher_additive_ct(TubeKind::NormBounded, unit, ct, 0.1, 0, 0, 0.4, 100).value; },
       0.024},
      {"ct_add_zero", [&] { return *rademacher_additive_ct(TubeKind::Combined, unit, ct, 0, 0, 0, 0.4, 100).value; },
       0.0},
      {"ct_add_nu", [&] { return *rademacher_additive_ct(TubeKind::Lipschitz, unit, ct, 0, 0, 0.5, 0.4, 4).value; },
       0.25},
      {"ct_add_lip", [&] { return *rademacher_additive_ct(TubeKind::Lipschitz, unit, ct, 0, 0.1, 0, 0.4, 100).value; },
       0.010613132401952404},
      {"ct_add_comb", [&] { return *rademacher_additive_ct(TubeKind::Combined, unit, ct, 0.1, 0.1, 0, 0.4, 100).value; },
       0.03727979906861907},
      {"dt_add_nb", [&] { return *rademacher_additive_dt(TubeKind::NormBounded, lv, dt, 0.1, 0, 0, 0.9, 100).value; },
       0.0362},
      {"dt_add_lip", [&] { return *rademacher_additive_dt(TubeKind::Lipschitz, lvbx, dt, 0, 0.2, 0, 0.9, 1).value; },
       3.02},
      {"dt_add_comb", [&] { return *rademacher_additive_dt(TubeKind::Combined, unit, dt, 0.1, 0.2, 0, 0.9, 1).value; },
       1.002423666810472},
      {"gen_bound", [] { return gen_bound(0.0, 0.1, 1.0, 100, 0.05, 1.0); }, 0.038297647188019465},
      {"gen_bound_rn", [] { return gen_bound(0.1, 0.1, 1.0, 100, 0.05, 2.0); }, 195.4057401545498},
      {"lip_htilde_ct", [] { return lipschitz_bound_htilde(2.0, 0.5, TimeMode::CT); }, 2.5},
      {"lip_htilde_dt", [] { return lipschitz_bound_htilde(2.0, 0.5, TimeMode::DT); }, 4.0},
      {"peak_dt", [] { return peak_t_exp(0.5, TimeMode::DT).value; }, 1.061475690846086},
  };
  bool pass = true;
  std::string failed;
  double worst = 0.0;
  for (const auto& e : examples) {
    const double err = std::abs(e.value() - e.expected) / std::max(1.0, std::abs(e.expected));
    worst = std::max(worst, err);
    if (err > kDerivedTol) {
      pass = false;
      failed += " " + e.name;
    }
  }

  // precondition boundaries: violated exactly when gamma eps >= rho (CT) or rho + gamma eps >= 1 (DT)
  int boundary_errors = 0, boundary_checked = 0;
  for (double gamma : {1.0, 2.0}) {
    for (double rho : {0.5, 1.0, 2.0}) {
      const EdissParams p{1, rho, gamma, TimeMode::CT};
      for (double eps : {rho / gamma * 0.99, rho / gamma, rho / gamma * 1.01}) {
        const bool expect_ok = gamma * eps < rho;
        for (auto kind : {TubeKind::Lipschitz, TubeKind::Combined}) {
          boundary_checked += 2;
          boundary_errors += deviation_bound_ct(kind, p, 0.1, eps, 1).ok() != expect_ok;
          boundary_errors += rademacher_additive_ct(kind, unit, p, 0.1, eps, 0, 0.4, 10).ok() != expect_ok;
        }
      }
    }
    for (double rho : {0.25, 0.5, 0.75}) {
      const EdissParams p{1, rho, gamma, TimeMode::DT};
      const double edge = (1.0 - rho) / gamma;
      for (double eps : {edge * 0.99, edge, edge * 1.01}) {
        const bool expect_ok = rho + gamma * eps < 1.0;
        for (auto kind : {TubeKind::Lipschitz, TubeKind::Combined}) {
          boundary_checked += 2;
          boundary_errors += deviation_bound_dt(kind, p, 0.1, eps, 1).ok() != expect_ok;
          boundary_errors += rademacher_additive_dt(kind, unit, p, 0.1, eps, 0, 0.4, 10).ok() != expect_ok;
        }
      }
    }
  }
  pass = pass && boundary_errors == 0;
  return {pass, std::to_string(examples.size()) + " examples, max rel err " + fmt(worst) +
                    (failed.empty() ? "" : " failing:" + failed) + "; " + std::to_string(boundary_checked) +
                    " precondition checks, " + std::to_string(boundary_errors) + " wrong"};
}

// --- 7 ---------------------------------------------------------------------

Outcome determinism() {
  const auto a = scratch("c7a"), b = scratch("c7b");
  if (int rc = desk_run(a)) return {false, "first run exited " + std::to_string(rc)};
  if (int rc = desk_run(b)) return {false, "second run exited " + std::to_string(rc)};
  std::size_t compared = 0;
  std::string differing;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename().string();
    const auto ext = e.path().extension().string();
    if (ext != ".csv" && name.rfind("checkpoint_", 0) != 0) continue;
    ++compared;
    if (!fs::exists(b / name) || read_text_file(e.path()) != read_text_file(b / name)) differing += " " + name;
  }
  return {compared > 0 && differing.empty(),
          std::to_string(compared) + " files compared" + (differing.empty() ? "" : ", differ:" + differing)};
}

// --- 8 ---------------------------------------------------------------------

Outcome greedy_optimality() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> box(-2.0, 2.0);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int beaten = 0;
  double min_margin = 1e300;
  for (int pair = 0; pair < kGreedyPairs; ++pair) {
    const auto v = std::make_shared<const CertificateNet>(init_params(MlpArchitecture{2, 20}, 900 + pair));
    Vec x(2);
    x << box(rng), box(rng);
    const AdversarySpec spec = pair % 2 == 0 ? lipschitz(0.1) : norm_bounded(0.3);
    const double radius = spec.kind == TubeKind::Lipschitz ? spec.eps_x * x.norm() : spec.eps_u;
    const Vec g = v->grad(x);
    const double greedy = g.dot(greedy_disturbance(v, spec)(0.0, x).total());
    double best = -1e300;
    for (int i = 0; i < kGreedySamples; ++i) {
      Vec d(2);
      d << normal(rng), normal(rng);
      d *= radius * std::sqrt(unit(rng)) / d.norm();
      best = std::max(best, g.dot(d));
    }
    if (greedy < best) ++beaten;
    min_margin = std::min(min_margin, greedy - best);
  }
  return {beaten == 0, std::to_string(kGreedyPairs) + " pairs, random search beat greedy " + std::to_string(beaten) +
                           " times, min margin " + fmt(min_margin)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{robustness_separation, gradient_oracle,  deviation_bounds,
                                                       counting_identities,   ediss_certification, bound_regression,
                                                       determinism,           greedy_optimality};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::cerr << "usage: acceptance [criterion 1..8 ...]\n";
      return 1;
    }
    selected.push_back(n);
  }
  if (selected.empty())
    for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) selected.push_back(n);

  bool all = true;
  for (int n : selected) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " " << o.detail << " [" << fmt(secs)
              << " s]\n"
              << std::flush;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
