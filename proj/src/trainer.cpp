#include "lyapcert/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

void TrainConfig::validate() const {
  if (!(eta >= 0)) throw std::invalid_argument("eta must be >= 0");
  if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
  if (alternations < 1) throw std::invalid_argument("alternations must be >= 1");
  if (inner_epochs < 1) throw std::invalid_argument("inner_epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(base_lr > 0)) throw std::invalid_argument("base_lr must be positive");
  if (hidden < 1) throw std::invalid_argument("hidden width must be >= 1");
  adversary.validate();
}

Dataset build_dataset(const std::vector<Trajectory>& trajs) {
  Dataset out;
  if (trajs.empty()) return out;
  const int p = trajs.front().dim();
  std::size_t total = 0;
  for (const auto& t : trajs) {
    if (t.dim() != p || t.derivs.rows() != t.states.rows() || t.derivs.cols() != p)
      throw ShapeMismatch("build_dataset: trajectories disagree in shape");
    total += t.size();
  }
  out.states.resize(p, static_cast<Eigen::Index>(total));
  out.derivs.resize(p, static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (const auto& t : trajs) {
    const auto n = static_cast<Eigen::Index>(t.size());
    out.states.middleCols(col, n) = t.states.transpose();
    out.derivs.middleCols(col, n) = t.derivs.transpose();
    col += n;
  }
  return out;
}

std::vector<Trajectory> retain_training_samples(const std::vector<Trajectory>& trajs) {
  std::vector<Trajectory> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(t.head(t.size() > 1 ? t.size() - 1 : t.size()));
  return out;
}

namespace {

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

class Minimizer {
 public:
  Minimizer(const TrainConfig& cfg, const CertificateParams& init, std::uint64_t total_steps)
      : cfg_(cfg),
        arch_(init.arch),
        theta_(init.flatten()),
        opt_(OptimizerState::fresh(theta_.size(), cfg.base_lr, total_steps)),
        rng_(cfg.seed) {}

  CertificateParams params() const { return CertificateParams::unflatten(arch_, theta_); }

  // Fresh moments and schedule; parameters and the shuffling stream carry on.
  void restart(std::uint64_t total_steps) { opt_ = OptimizerState::fresh(theta_.size(), cfg_.base_lr, total_steps); }

  double full_loss(const Dataset& data) const {
    return surrogate_loss(params(), data.states, data.derivs, cfg_.eta, cfg_.lambda);
  }

  void run(const Dataset& data, std::size_t epochs, std::vector<EpochLog>& log, const EpochCallback& cb) {
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("training dataset is empty");
    const std::size_t batch = std::min(cfg_.batch_size, n);
    std::vector<Eigen::Index> perm(n);
    for (std::size_t e = 0; e < epochs; ++e) {
      std::iota(perm.begin(), perm.end(), Eigen::Index{0});
      std::shuffle(perm.begin(), perm.end(), rng_);
      double loss_sum = 0.0;
      double lr = 0.0;
      std::size_t batches = 0;
      for (std::size_t lo = 0; lo < n; lo += batch) {
        const std::size_t hi = std::min(n, lo + batch);
        const std::vector<Eigen::Index> idx(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                            perm.begin() + static_cast<std::ptrdiff_t>(hi));
        const Mat xs = data.states(Eigen::all, idx);
        const Mat vs = data.derivs(Eigen::all, idx);
        const auto lg = grad_theta(params(), xs, vs, cfg_.eta, cfg_.lambda);
        const bool finite = std::isfinite(lg.loss) &&
                            std::all_of(lg.grad.begin(), lg.grad.end(), [](double g) { return std::isfinite(g); });
        if (!finite) throw NonFiniteLoss(opt_.step, theta_);
        lr = opt_.learning_rate();
        std::vector<double> next = theta_;
        adam_step(opt_, next, lg.grad);
        if (!std::all_of(next.begin(), next.end(), [](double t) { return std::isfinite(t); }))
          throw NonFiniteLoss(opt_.step, theta_);
        theta_ = std::move(next);
        loss_sum += lg.loss;
        ++batches;
      }
      EpochLog entry{log.size() + 1, loss_sum / static_cast<double>(batches), lr};
      log.push_back(entry);
      if (cb) cb(entry);
    }
  }

 private:
  const TrainConfig& cfg_;
  MlpArchitecture arch_;
  std::vector<double> theta_;
  OptimizerState opt_;
  std::mt19937_64 rng_;
};

}  // namespace

TrainResult train_nominal(const Dataset& dataset, const TrainConfig& config, const CertificateParams& init,
                          const EpochCallback& on_epoch) {
  config.validate();
  TrainResult result;
  result.params = init;
  if (config.epochs == 0) return result;
  if (dataset.size() == 0) throw std::invalid_argument("train_nominal: dataset is empty");
  if (dataset.dim() != init.arch.input_dim) throw ShapeMismatch("dataset dimension differs from certificate");
  const auto total = config.epochs * steps_per_epoch(dataset.size(), std::min(config.batch_size, dataset.size()));
  Minimizer opt(config, init, total);
  const double start = opt.full_loss(dataset);
  opt.run(dataset, config.epochs, result.epochs, on_epoch);
  result.params = opt.params();
  result.inner_minimizations = 1;
  result.phases.push_back({1, start, opt.full_loss(dataset)});
  return result;
}

TrainResult train_adversarial(const VectorField& f, const std::vector<Vec>& ics, const TrainConfig& config,
                              const CertificateParams& init, const std::vector<int>& wrap_dims,
                              const EpochCallback& on_epoch) {
  config.validate();
  if (ics.empty()) throw std::invalid_argument("train_adversarial: no initial conditions");
  const AdversarySpec& spec = config.adversary;
  if (spec.kind == TubeKind::None && config.alternations > 1)
    throw std::invalid_argument("adversarial training needs a Lipschitz, norm-bounded or combined adversary");

  TrainResult result;
  std::vector<Trajectory> trajs = retain_training_samples(rollout_all(f, ics, config.horizon, config.dt, wrap_dims));
  Dataset data = build_dataset(trajs);
  const auto phase_steps = config.inner_epochs * steps_per_epoch(data.size(), std::min(config.batch_size, data.size()));
  Minimizer opt(config, init, config.warm_start ? config.alternations * phase_steps : phase_steps);

  auto minimize = [&] {
    if (!config.warm_start && result.inner_minimizations > 0) opt.restart(phase_steps);
    const double start = opt.full_loss(data);
    opt.run(data, config.inner_epochs, result.epochs, on_epoch);
    ++result.inner_minimizations;
    result.phases.push_back({result.inner_minimizations, start, opt.full_loss(data)});
  };

  for (std::size_t i = 1; i < config.alternations; ++i) {
    minimize();
    const auto v = std::make_shared<const CertificateNet>(opt.params());
    const Disturbance d = greedy_disturbance(v, spec);
    std::vector<Trajectory> fresh(ics.size());
    parallel_for(ics.size(), [&](std::size_t j) {
      fresh[j] = perturbed_rollout(f, d, spec, ics[j], config.horizon, config.dt, wrap_dims);
    });
    trajs = retain_training_samples(fresh);
    data = build_dataset(trajs);
    ++result.rerollouts;
  }
  minimize();
  result.params = opt.params();
  result.final_trajectories = std::move(trajs);
  return result;
}

}  // namespace lyapcert
