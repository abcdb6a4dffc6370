#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lyapcert/adversary.hpp"
#include "lyapcert/certnet.hpp"
#include "lyapcert/sim.hpp"

namespace lyapcert {

struct TrainConfig {
  double eta = 0.4;
  double lambda = 0.1;
  std::size_t epochs = 500;
  std::size_t batch_size = 1000;
  double base_lr = 0.005;
  std::size_t alternations = 5;
  std::size_t inner_epochs = 100;
  // The greedy Lipschitz budget is not given by the reference experiment;
  // whatever value is used must be echoed in every report.
  AdversarySpec adversary = lipschitz(0.1);
  double horizon = 8.0;
  double dt = 0.05;
  std::size_t n_train = 1000;
  Vec ic_lo = Vec::Constant(2, -2.0);
  Vec ic_hi = Vec::Constant(2, 2.0);
  std::uint64_t seed = 0;
  int hidden = 20;
  // Adversarial training only: carry Adam moments and one cosine schedule
  // across all inner minimizations (true), or restart both every phase.
  bool warm_start = true;

  void validate() const;
};

/// Flat (state, derivative) pairs; column i of both matrices is one sample.
struct Dataset {
  Mat states;
  Mat derivs;

  std::size_t size() const { return static_cast<std::size_t>(states.cols()); }
  int dim() const { return static_cast<int>(states.rows()); }
};

/// Concatenates every sample of every trajectory, in input order.
Dataset build_dataset(const std::vector<Trajectory>& trajs);

/// Keeps the samples strictly before the horizon (N of the N + 1 rollout samples).
std::vector<Trajectory> retain_training_samples(const std::vector<Trajectory>& trajs);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based, counted across all phases
  double loss = 0.0;      // mean minibatch objective over the epoch
  double lr = 0.0;        // learning rate used by the epoch's last step
};

struct PhaseLog {
  std::size_t phase = 0;  // 1-based inner minimization index
  double loss_start = 0.0;
  double loss_end = 0.0;  // full-dataset objective
};

struct TrainResult {
  CertificateParams params;
  std::vector<EpochLog> epochs;
  std::vector<PhaseLog> phases;
  std::size_t inner_minimizations = 0;
  std::size_t rerollouts = 0;
  std::vector<Trajectory> final_trajectories;  // only populated by train_adversarial
};

/// Optional per-epoch hook, e.g. for progress output.
using EpochCallback = std::function<void(const EpochLog&)>;

/// Minimizes the hinge surrogate with Adam + cosine decay for config.epochs.
/// Shuffling uses an RNG seeded from config.seed. Throws NonFiniteLoss.
TrainResult train_nominal(const Dataset& dataset, const TrainConfig& config,
                          const CertificateParams& init, const EpochCallback& on_epoch = {});

/// Alternating adversarial training: m inner minimizations of inner_epochs
/// each, with m - 1 re-rollouts of every initial condition under the greedy
/// disturbance of the current certificate in between. Adam moments and the
/// cosine schedule carry over across phases.
TrainResult train_adversarial(const VectorField& f, const std::vector<Vec>& ics,
                              const TrainConfig& config, const CertificateParams& init,
                              const std::vector<int>& wrap_dims = {},
                              const EpochCallback& on_epoch = {});

}  // namespace lyapcert
