#include <iostream>

#include "CLI11.hpp"
#include "lyapcert/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learn and stress-test Lyapunov stability certificates"};
  app.require_subcommand(1);

  lyapcert::CommandOptions opts;
  opts.log = &std::cerr;
  std::string config, out;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "INI config or a run manifest to replay")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides run.out)");
    sub->add_option("--seed", seed, "run seed (overrides run.seed)");
    sub->add_option("--threads", threads, "worker cap; results do not depend on it")->check(CLI::Range(1u, 1024u));
    return sub;
  };
  auto* train = add("train", "train V_nom and/or V_adv on the pendulum");
  auto* evaluate = add("evaluate", "satisfaction rates over the eta grid for every perturbation class");
  auto* bounds = add("bounds", "closed-form deviation and Rademacher bounds");
  auto* verify = add("verify", "randomized property suite on the scalar oracle systems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : lyapcert::exit_code::usage;
  }

  opts.config_path = config;
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--out")) opts.out = out;
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--threads")) opts.threads = threads;
  }
  if (train->parsed()) return lyapcert::cmd_train(opts);
  if (evaluate->parsed()) return lyapcert::cmd_evaluate(opts);
  if (bounds->parsed()) return lyapcert::cmd_bounds(opts);
  if (verify->parsed()) return lyapcert::cmd_verify(opts);
  return lyapcert::exit_code::usage;
}
