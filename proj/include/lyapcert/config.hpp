#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lyapcert/adversary.hpp"
#include "lyapcert/sim.hpp"
#include "lyapcert/theory.hpp"
#include "lyapcert/trainer.hpp"

namespace lyapcert {

enum class TrainMode { Nominal, Adversarial, Both };

struct EvaluateConfig {
  // name=path pairs; empty means the two checkpoints written by `train` in the
  // output directory (V_nom and V_adv).
  std::vector<std::pair<std::string, std::string>> certificates;
  std::string greedy_reference = "V_adv";  // certificate whose gradient drives class 1
  std::vector<int> classes{1, 2, 3, 4};
  std::size_t n_test = 1000;
  double eta_lo = 0.0;
  double eta_hi = 1.0;
  std::size_t eta_points = 51;
  std::optional<double> eps_x;  // classes 1 and 2; defaults to the training budget
  double perturbed_m = 1.1;
  double perturbed_l = 1.1;
};

struct BoundsConfig {
  TimeMode mode = TimeMode::CT;
  EdissParams ediss;
  RegularityConstants constants{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  std::string checkpoint;  // when set, constants are estimated from it on a grid
  std::size_t grid_per_dim = 21;
  std::vector<TubeKind> kinds{TubeKind::NormBounded, TubeKind::Lipschitz, TubeKind::Combined};
  double eps_u = 0.1;
  double eps_x = 0.1;
  double nu = 0.0;
  double eta = 0.4;
  std::size_t n = 100;
  double xi_norm = 1.0;
  // Generalization bound; skipped unless rn is given.
  std::optional<double> rn;
  double tau = 0.1;
  double b_h = 1.0;
  double delta = 0.05;
  double k = 1.0;
  double log_inner_scale = 1.0;
  double l_h = 1.0;
  double b_delta = 0.0;
};

struct VerifyConfig {
  std::size_t ediss_trials = 200;
  std::size_t deviation_trials = 1000;
  std::vector<double> rhos{0.5, 1.0, 2.0};
  double claim_beta = 1.0;
  double claim_rho_scale = 1.0;  // > 1 over-claims the decay rate
  double claim_gamma = 1.0;
  double eps_u = 0.1;
  double eps_x = 0.2;
  double dt_rho = 0.5;
  int nested_t_max = 12;
};

struct RunConfig {
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  unsigned threads = 1;

  PendulumParams pendulum;
  TrainMode train_mode = TrainMode::Both;
  TrainConfig train;  // horizon, dt, box, seed and the training adversary live here
  EvaluateConfig evaluate;
  BoundsConfig bounds;
  VerifyConfig verify;

  void validate() const;

  /// Canonical INI text of every field, defaults included. Parsing it yields
  /// an identical config.
  std::string resolved_text() const;
};

std::string to_string(TrainMode mode);

/// Parses INI text; throws ConfigError on syntax errors, unknown sections or
/// keys, and invalid values.
RunConfig parse_config(const std::string& text);

/// Reads an INI file, or a run manifest JSON whose "config" member holds the
/// resolved INI text.
RunConfig load_config(const std::filesystem::path& path);

/// splitmix64-style stream derivation from the run seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace lyapcert
