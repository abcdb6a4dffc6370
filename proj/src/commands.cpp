#include "lyapcert/commands.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>

#include "json.hpp"
#include "lyapcert/errors.hpp"
#include "lyapcert/io.hpp"
#include "lyapcert/parallel.hpp"
#include "lyapcert/theory.hpp"
#include "lyapcert/trainer.hpp"
#include "lyapcert/violation.hpp"

namespace lyapcert {

using nlohmann::json;

namespace {

const std::vector<int> kPendulumWrap{0};

enum SeedStream : std::uint64_t { kTrainIcs = 1, kInit = 2, kShuffle = 3, kTestIcs = 4, kVerify = 5 };

void say(const CommandOptions& o, const std::string& line) {
  if (o.log) *o.log << line << '\n' << std::flush;
}

json adversary_json(const AdversarySpec& a) {
  return {{"kind", to_string(a.kind)}, {"eps_x", a.eps_x}, {"eps_u", a.eps_u}};
}

void write_manifest(const RunConfig& c, const std::string& command, json extra) {
  json m;
  m["command"] = command;
  m["version"] = "0.1.0";
  m["seed"] = c.seed;
  m["threads"] = c.threads;
  m["config"] = c.resolved_text();
  for (auto& [k, v] : extra.items()) m[k] = v;
  write_text_file(c.out / ("manifest_" + command + ".json"), m.dump(2) + "\n");
}

void write_diagnostic(const RunConfig& c, const std::string& what, json detail) {
  json d = {{"error", what}};
  for (auto& [k, v] : detail.items()) d[k] = v;
  write_text_file(c.out / "diagnostic.json", d.dump(2) + "\n");
}

std::string join_names(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + xs[i];
  return out;
}

// Runs `body`, mapping library exceptions to exit codes. `c` may be null when
// the config itself failed to load.
template <class Body>
int guarded(const CommandOptions& opts, const RunConfig* c, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    say(opts, std::string("config error: ") + e.what());
    return exit_code::config_error;
  } catch (const CheckpointError& e) {
    say(opts, std::string("checkpoint error: ") + e.what());
    return exit_code::missing_checkpoint;
  } catch (const NonFiniteLoss& e) {
    say(opts, std::string("numeric failure: ") + e.what());
    if (c) write_diagnostic(*c, e.what(), {{"kind", "non_finite_loss"}, {"step", e.step()}, {"last_finite_theta", e.last_finite_theta()}});
    return exit_code::numeric_failure;
  } catch (const NonFiniteState& e) {
    say(opts, std::string("numeric failure: ") + e.what());
    if (c) write_diagnostic(*c, e.what(), {{"kind", "non_finite_state"}, {"step", e.step()}});
    return exit_code::numeric_failure;
  } catch (const BudgetViolation& e) {
    say(opts, std::string("numeric failure: ") + e.what());
    if (c) write_diagnostic(*c, e.what(), {{"kind", "budget_violation"}, {"time", e.time()}, {"excess", e.excess()}});
    return exit_code::numeric_failure;
  }
}

}  // namespace

RunConfig resolve_config(const CommandOptions& opts) {
  RunConfig c = load_config(opts.config_path);
  if (opts.out) c.out = *opts.out;
  if (opts.seed) {
    c.seed = *opts.seed;
    c.train.seed = *opts.seed;
  }
  if (opts.threads) c.threads = *opts.threads;
  return c;
}

std::vector<Vec> training_initial_conditions(const RunConfig& c) {
  return sample_initial_conditions(c.train.n_train, c.train.ic_lo, c.train.ic_hi, derive_seed(c.seed, kTrainIcs));
}

std::vector<Vec> test_initial_conditions(const RunConfig& c) {
  return sample_initial_conditions(c.evaluate.n_test, c.train.ic_lo, c.train.ic_hi, derive_seed(c.seed, kTestIcs));
}

CertificateParams training_init(const RunConfig& c) {
  MlpArchitecture arch;
  arch.input_dim = static_cast<int>(c.train.ic_lo.size());
  arch.hidden = c.train.hidden;
  return init_params(arch, derive_seed(c.seed, kInit));
}

double evaluation_eps(const RunConfig& c) { return c.evaluate.eps_x.value_or(c.train.adversary.eps_x); }

std::string perturbation_class_name(int cls) {
  switch (cls) {
    case 1: return "greedy";
    case 2: return "radial";
    case 3: return "linearized";
    case 4: return "parameters";
  }
  throw std::invalid_argument("perturbation class must be 1..4");
}

std::vector<Trajectory> perturbation_class_trajectories(int cls, const RunConfig& c,
                                                        const std::shared_ptr<const CertificateNet>& reference,
                                                        const std::vector<Vec>& ics) {
  const double eps = evaluation_eps(c);
  const double horizon = c.train.horizon, dt = c.train.dt;
  std::vector<Trajectory> out(ics.size());
  switch (cls) {
    case 1:
    case 2: {
      const AdversarySpec spec = lipschitz(eps, cls == 1 ? Strategy::GreedyCertificate : Strategy::Radial);
      if (cls == 1 && !reference) throw std::invalid_argument("class 1 needs a reference certificate");
      const Disturbance d = cls == 1 ? greedy_disturbance(reference, spec) : radial_disturbance(eps);
      const VectorField f = pendulum_field(c.pendulum);
      parallel_for(ics.size(), [&](std::size_t i) {
        out[i] = perturbed_rollout(f, d, spec, ics[i], horizon, dt, kPendulumWrap);
      });
      break;
    }
    case 3:
    case 4: {
      PendulumParams p = c.pendulum;
      if (cls == 4) {
        p.m = c.evaluate.perturbed_m;
        p.l = c.evaluate.perturbed_l;
      }
      const VectorField f = cls == 3 ? linearized_pendulum_field(p) : pendulum_field(p);
      out = rollout_all(f, ics, horizon, dt, kPendulumWrap);
      break;
    }
    default: throw std::invalid_argument("perturbation class must be 1..4");
  }
  return retain_training_samples(out);
}

// ---------------------------------------------------------------------------

int cmd_train(const CommandOptions& opts) {
  RunConfig c;
  if (int rc = guarded(opts, nullptr, [&] { c = resolve_config(opts); return 0; })) return rc;
  set_num_threads(c.threads);
  return guarded(opts, &c, [&] {
    std::filesystem::create_directories(c.out);
    const auto t0 = std::chrono::steady_clock::now();
    const VectorField f = pendulum_field(c.pendulum);
    const auto ics = training_initial_conditions(c);
    const CertificateParams init = training_init(c);
    TrainConfig tc = c.train;
    tc.seed = derive_seed(c.seed, kShuffle);

    const auto nominal_trajs = retain_training_samples(rollout_all(f, ics, tc.horizon, tc.dt, kPendulumWrap));
    const Dataset data = build_dataset(nominal_trajs);
    const std::string hash = dataset_hash(data);
    say(opts, "dataset: " + std::to_string(ics.size()) + " trajectories, " + std::to_string(data.size()) +
                  " pairs, hash " + hash);

    json outputs = json::array();
    json phases = json::object();
    if (c.train_mode != TrainMode::Adversarial) {
      const auto r = train_nominal(data, tc, init);
      save_checkpoint(c.out / "checkpoint_nominal.json", r.params);
      write_text_file(c.out / "loss_nominal.csv", loss_csv(r.epochs));
      outputs.push_back("checkpoint_nominal.json");
      outputs.push_back("loss_nominal.csv");
      say(opts, "V_nom: " + std::to_string(r.epochs.size()) + " epochs, final loss " +
                    format_double(r.phases.back().loss_end));
    }
    if (c.train_mode != TrainMode::Nominal) {
      const auto r = train_adversarial(f, ics, tc, init, kPendulumWrap);
      save_checkpoint(c.out / "checkpoint_adversarial.json", r.params);
      write_text_file(c.out / "loss_adversarial.csv", loss_csv(r.epochs));
      write_text_file(c.out / "phases_adversarial.csv", phases_csv(r.phases));
      outputs.push_back("checkpoint_adversarial.json");
      outputs.push_back("loss_adversarial.csv");
      outputs.push_back("phases_adversarial.csv");
      phases = {{"inner_minimizations", r.inner_minimizations}, {"rerollouts", r.rerollouts}};
      say(opts, "V_adv: " + std::to_string(r.inner_minimizations) + " inner minimizations, " +
                    std::to_string(r.rerollouts) + " re-rollouts, training eps_x " +
                    format_double(tc.adversary.eps_x));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(c, "train",
                   {{"dataset_hash", hash},
                    {"dataset_pairs", data.size()},
                    {"training_adversary", adversary_json(tc.adversary)},
                    {"algorithm", phases},
                    {"outputs", outputs}});
    say(opts, "train finished in " + format_double(std::round(secs * 10) / 10) + " s");
    return exit_code::ok;
  });
}

int cmd_evaluate(const CommandOptions& opts) {
  RunConfig c;
  if (int rc = guarded(opts, nullptr, [&] { c = resolve_config(opts); return 0; })) return rc;
  set_num_threads(c.threads);
  return guarded(opts, &c, [&] {
    auto certs = c.evaluate.certificates;
    if (certs.empty()) {
      certs = {{"V_nom", (c.out / "checkpoint_nominal.json").string()},
               {"V_adv", (c.out / "checkpoint_adversarial.json").string()}};
    }
    MlpArchitecture arch;
    arch.input_dim = 2;
    arch.hidden = c.train.hidden;
    std::vector<std::pair<std::string, std::shared_ptr<const CertificateNet>>> nets;
    std::shared_ptr<const CertificateNet> reference;
    for (const auto& [name, path] : certs) {
      auto net = std::make_shared<const CertificateNet>(load_checkpoint(path, arch));
      if (name == c.evaluate.greedy_reference) reference = net;
      nets.emplace_back(name, net);
    }
    const bool needs_reference =
        std::find(c.evaluate.classes.begin(), c.evaluate.classes.end(), 1) != c.evaluate.classes.end();
    if (needs_reference && !reference)
      throw ConfigError("evaluate.greedy_reference '" + c.evaluate.greedy_reference + "' is not a listed certificate");

    std::filesystem::create_directories(c.out);
    const auto ics = test_initial_conditions(c);
    const auto grid = uniform_grid(c.evaluate.eta_lo, c.evaluate.eta_hi, c.evaluate.eta_points);
    json summary = json::array();
    json outputs = json::array();
    for (int cls : c.evaluate.classes) {
      const auto trajs = perturbation_class_trajectories(cls, c, reference, ics);
      const std::string cname = std::to_string(cls) + "_" + perturbation_class_name(cls);
      for (const auto& [name, net] : nets) {
        const auto rows = satisfaction_rates(trajs, *net, grid);
        const std::string file = "satisfaction_" + name + "_class" + cname + ".csv";
        write_text_file(c.out / file, satisfaction_csv(rows, name, cname));
        outputs.push_back(file);
        const auto at_train = satisfaction_rates(trajs, *net, {c.train.eta}).front();
        summary.push_back({{"certificate", name},
                           {"perturbation_class", cname},
                           {"eta", c.train.eta},
                           {"traj_rate", at_train.traj_rate},
                           {"point_rate", at_train.point_rate}});
        say(opts, "class " + cname + " " + name + ": eta=" + format_double(c.train.eta) + " traj_rate " +
                      format_double(at_train.traj_rate) + " point_rate " + format_double(at_train.point_rate));
      }
    }
    json report = {{"evaluation_eps_x", evaluation_eps(c)},
                   {"training_adversary", adversary_json(c.train.adversary)},
                   {"n_test", c.evaluate.n_test},
                   {"rates_at_training_eta", summary}};
    write_text_file(c.out / "evaluation.json", report.dump(2) + "\n");
    outputs.push_back("evaluation.json");
    json cert_paths = json::object();
    for (const auto& [name, path] : certs) cert_paths[name] = path;
    write_manifest(c, "evaluate",
                   {{"certificates", cert_paths},
                    {"evaluation_eps_x", evaluation_eps(c)},
                    {"training_adversary", adversary_json(c.train.adversary)},
                    {"outputs", outputs}});
    return exit_code::ok;
  });
}

// ---------------------------------------------------------------------------

namespace {

json bound_json(const BoundResult& r) {
  json j = {{"formula_id", r.formula_id}, {"precondition", r.precondition}, {"inputs", r.inputs}};
  if (r.ok()) {
    j["status"] = "ok";
    j["value"] = *r.value;
  } else {
    j["status"] = "precondition_violated";
    j["value"] = nullptr;
    j["reason"] = r.reason;
  }
  return j;
}

}  // namespace

int cmd_bounds(const CommandOptions& opts) {
  RunConfig c;
  if (int rc = guarded(opts, nullptr, [&] { c = resolve_config(opts); return 0; })) return rc;
  set_num_threads(c.threads);
  return guarded(opts, &c, [&] {
    const auto& b = c.bounds;
    RegularityConstants k = b.constants;
    std::string source = "config";
    if (!b.checkpoint.empty()) {
      const CertificateNet v(load_checkpoint(b.checkpoint));
      const auto grid = box_grid(c.train.ic_lo, c.train.ic_hi, b.grid_per_dim);
      const auto corners = box_grid(c.train.ic_lo, c.train.ic_hi, 2);
      k = estimate_regularity_constants({v}, pendulum_field(c.pendulum), grid, corners, b.eta);
      source = "estimated:" + b.checkpoint;
    }
    std::filesystem::create_directories(c.out);
    json clauses = json::array();
    std::vector<std::string> violated;
    const bool ct = b.mode == TimeMode::CT;
    for (TubeKind kind : b.kinds) {
      const auto add = ct ? rademacher_additive_ct(kind, k, b.ediss, b.eps_u, b.eps_x, b.nu, b.eta, b.n)
                          : rademacher_additive_dt(kind, k, b.ediss, b.eps_u, b.eps_x, b.nu, b.eta, b.n);
      const auto dev = ct ? deviation_bound_ct(kind, b.ediss, b.eps_u, b.eps_x, b.xi_norm)
                          : deviation_bound_dt(kind, b.ediss, b.eps_u, b.eps_x, b.xi_norm, 0);
      for (const auto* r : {&add, &dev}) {
        clauses.push_back(bound_json(*r));
        if (!r->ok()) {
          violated.push_back(r->formula_id + ": " + r->reason);
          say(opts, "precondition_violated " + r->formula_id + ": " + r->reason);
        } else {
          say(opts, r->formula_id + " = " + format_double(*r->value));
        }
      }
    }
    json report = {{"mode", ct ? "ct" : "dt"},
                   {"ediss", {{"beta", b.ediss.beta}, {"rho", b.ediss.rho}, {"gamma", b.ediss.gamma}}},
                   {"constants_source", source},
                   {"constants",
                    {{"L_V", k.L_V},
                     {"L_gradV", k.L_gradV},
                     {"B_V", k.B_V},
                     {"B_gradV", k.B_gradV},
                     {"B_X", k.B_X},
                     {"B_htilde", k.B_htilde}}},
                   {"clauses", clauses},
                   {"lipschitz_htilde", lipschitz_bound_htilde(b.l_h, b.b_delta, b.mode)}};
    if (b.rn) {
      try {
        report["gen_bound"] = {{"status", "ok"},
                               {"value", gen_bound(*b.rn, b.tau, b.b_h, b.n, b.delta, b.k, b.log_inner_scale)}};
      } catch (const DomainError& e) {
        report["gen_bound"] = {{"status", "precondition_violated"}, {"reason", e.what()}};
        violated.push_back(std::string("gen_bound: ") + e.what());
        say(opts, std::string("precondition_violated gen_bound: ") + e.what());
      }
    }
    report["status"] = violated.empty() ? "ok" : "precondition_violated";
    write_text_file(c.out / "bounds.json", report.dump(2) + "\n");
    write_manifest(c, "bounds", {{"outputs", {"bounds.json"}}});
    if (!violated.empty()) {
      say(opts, "precondition violated: " + join_names(violated));
      return exit_code::precondition_violated;
    }
    return exit_code::ok;
  });
}

// ---------------------------------------------------------------------------

namespace {

struct PropertyCase {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string junit_xml(const std::vector<PropertyCase>& cases) {
  std::size_t failures = 0;
  double total = 0.0;
  for (const auto& c : cases) {
    failures += c.pass ? 0 : 1;
    total += c.seconds;
  }
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<testsuite name=\"lyapcert-verify\" tests=\"" + std::to_string(cases.size()) + "\" failures=\"" +
         std::to_string(failures) + "\" time=\"" + format_double(total) + "\">\n";
  for (const auto& c : cases) {
    out += "  <testcase classname=\"verify\" name=\"" + xml_escape(c.name) + "\" time=\"" +
           format_double(c.seconds) + "\"";
    if (c.pass) {
      out += ">\n    <system-out>" + xml_escape(c.detail) + "</system-out>\n  </testcase>\n";
    } else {
      out += ">\n    <failure message=\"" + xml_escape(c.detail) + "\"/>\n  </testcase>\n";
    }
  }
  out += "</testsuite>\n";
  return out;
}

template <class Fn>
PropertyCase timed(std::string name, Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  PropertyCase pc;
  pc.name = std::move(name);
  try {
    std::tie(pc.pass, pc.detail) = fn();
  } catch (const std::exception& e) {
    pc.pass = false;
    pc.detail = std::string("exception: ") + e.what();
  }
  pc.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return pc;
}

}  // namespace

int cmd_verify(const CommandOptions& opts) {
  RunConfig c;
  if (int rc = guarded(opts, nullptr, [&] { c = resolve_config(opts); return 0; })) return rc;
  set_num_threads(c.threads);
  return guarded(opts, &c, [&] {
    const auto& v = c.verify;
    const std::uint64_t seed = derive_seed(c.seed, kVerify);
    std::vector<PropertyCase> cases;

    for (double rho : v.rhos) {
      const EdissParams claim{v.claim_beta, v.claim_rho_scale * rho, v.claim_gamma, TimeMode::CT};
      cases.push_back(timed("ediss_ct_rho_" + format_double(rho), [&] {
        const auto r = verify_ediss(scalar_decay_field(rho), claim, v.ediss_trials, SignalFamily::Mixed, seed);
        return std::pair{r.pass, "max ratio " + format_double(r.max_ratio) + " over " + std::to_string(r.trials) +
                                     " trials"};
      }));
    }
    cases.push_back(timed("ediss_dt_rho_" + format_double(v.dt_rho), [&] {
      const EdissParams claim{v.claim_beta, std::pow(v.dt_rho, v.claim_rho_scale), v.claim_gamma, TimeMode::DT};
      const auto r = verify_ediss_dt(scalar_decay_map(v.dt_rho), claim, v.ediss_trials, SignalFamily::Mixed, seed);
      return std::pair{r.pass, "max ratio " + format_double(r.max_ratio)};
    }));

    for (TimeMode mode : {TimeMode::CT, TimeMode::DT}) {
      for (TubeKind kind : {TubeKind::NormBounded, TubeKind::Lipschitz, TubeKind::Combined}) {
        const bool ct = mode == TimeMode::CT;
        const std::string name = std::string("deviation_") + (ct ? "ct_" : "dt_") + to_string(kind);
        cases.push_back(timed(name, [&] {
          ScalarOracle oracle;
          oracle.params = ct ? EdissParams{1.0, 1.0, 1.0, TimeMode::CT} : EdissParams{1.0, v.dt_rho, 1.0, TimeMode::DT};
          AdversarySpec spec;
          spec.kind = kind;
          spec.strategy = Strategy::Custom;
          spec.eps_u = kind == TubeKind::Lipschitz ? 0.0 : v.eps_u;
          spec.eps_x = kind == TubeKind::NormBounded ? 0.0 : v.eps_x;
          const auto r = verify_deviation_bound(oracle, spec, v.deviation_trials, seed);
          bool pass = r.pass;
          std::string detail = "max deviation/bound " + format_double(r.max_ratio);
          if (r.worst_case_gap) {
            pass = pass && *r.worst_case_gap <= 1e-9;
            detail += ", worst-case tightness gap " + format_double(*r.worst_case_gap);
          }
          return std::pair{pass, detail};
        }));
      }
    }

    cases.push_back(timed("nested_sum_binomial", [&] {
      for (int t = 2; t <= v.nested_t_max; ++t)
        for (int j = 1; j <= t - 1; ++j)
          if (nested_sum_count(t, j) != binomial(t, j))
            return std::pair{false, "mismatch at t=" + std::to_string(t) + ", j=" + std::to_string(j)};
      return std::pair{true, "t <= " + std::to_string(v.nested_t_max)};
    }));

    cases.push_back(timed("peak_ct", [&] {
      for (double rho : v.rhos) {
        const auto p = peak_t_exp(rho, TimeMode::CT);
        // the closed form must dominate a dense scan and match it at the argmax
        double best = 0.0;
        for (int i = 0; i <= 100000; ++i) {
          const double t = 10.0 / rho * i / 100000.0;
          best = std::max(best, t * std::exp(-rho * t));
        }
        if (std::abs(p.t_star - 1.0 / rho) > 1e-12 || std::abs(p.value - 1.0 / (rho * std::numbers::e)) > 1e-12 ||
            best > p.value + 1e-15 || p.value - best > 1e-8)
          return std::pair{false, "rho=" + format_double(rho)};
      }
      return std::pair{true, std::string("closed form matches scan")};
    }));

    cases.push_back(timed("peak_dt", [&] {
      const auto p = peak_t_exp(v.dt_rho, TimeMode::DT);
      double best = 0.0;
      for (int t = 0; t <= 1000; ++t) best = std::max(best, t * std::pow(v.dt_rho, t - 1));
      return std::pair{best <= p.value + 1e-12, "integer max " + format_double(best) + " vs " + format_double(p.value)};
    }));

    cases.push_back(timed("contraction_scalar", [&] {
      for (double rho : v.rhos) {
        const auto grid = box_grid(Vec::Constant(1, -2.0), Vec::Constant(1, 2.0), 21);
        const auto r = check_contraction(scalar_decay_field(rho), [](const Vec&) { return Mat::Identity(1, 1); }, rho,
                                         1.0, 1.0, grid);
        if (!r.pass || std::abs(r.params->rho - rho) > 0 || r.params->beta != 1.0 || r.params->gamma != 1.0)
          return std::pair{false, "rho=" + format_double(rho) + ": " + r.failed_condition};
      }
      return std::pair{true, std::string("(1, rho, 1) recovered")};
    }));

    std::filesystem::create_directories(c.out);
    write_text_file(c.out / "verify.xml", junit_xml(cases));
    json results = json::array();
    bool all = true;
    for (const auto& pc : cases) {
      all = all && pc.pass;
      results.push_back({{"name", pc.name}, {"pass", pc.pass}, {"detail", pc.detail}});
      say(opts, std::string(pc.pass ? "PASS " : "FAIL ") + pc.name + ": " + pc.detail);
    }
    write_text_file(c.out / "verify.json", json{{"pass", all}, {"cases", results}}.dump(2) + "\n");
    write_manifest(c, "verify", {{"outputs", {"verify.xml", "verify.json"}}});
    return all ? exit_code::ok : exit_code::property_failure;
  });
}

}  // namespace lyapcert
