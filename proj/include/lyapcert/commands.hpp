#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lyapcert/certnet.hpp"
#include "lyapcert/config.hpp"
#include "lyapcert/sim.hpp"

namespace lyapcert {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int usage = 1;
inline constexpr int config_error = 2;
inline constexpr int numeric_failure = 3;
inline constexpr int missing_checkpoint = 4;
inline constexpr int precondition_violated = 5;
inline constexpr int property_failure = 6;
}  // namespace exit_code

struct CommandOptions {
  std::filesystem::path config_path;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::ostream* log = nullptr;  // progress and diagnostics; nullptr silences them
};

/// Loads the config and applies the command-line overrides.
RunConfig resolve_config(const CommandOptions& opts);

int cmd_train(const CommandOptions& opts);
int cmd_evaluate(const CommandOptions& opts);
int cmd_bounds(const CommandOptions& opts);
int cmd_verify(const CommandOptions& opts);

/// Test trajectories for one evaluation class, truncated to the samples
/// strictly before the horizon:
///   1 greedy Lipschitz adversary on `reference`, budget eps_x
///   2 radial disturbance eps_x x
///   3 linearized pendulum
///   4 pendulum with m and l replaced by the configured perturbed values
std::vector<Trajectory> perturbation_class_trajectories(int cls, const RunConfig& config,
                                                        const std::shared_ptr<const CertificateNet>& reference,
                                                        const std::vector<Vec>& ics);

std::string perturbation_class_name(int cls);

/// Budget used by evaluation classes 1 and 2.
double evaluation_eps(const RunConfig& config);

/// Training initial conditions and initial parameters derived from the run seed.
std::vector<Vec> training_initial_conditions(const RunConfig& config);
std::vector<Vec> test_initial_conditions(const RunConfig& config);
CertificateParams training_init(const RunConfig& config);

}  // namespace lyapcert
