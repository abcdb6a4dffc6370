#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lyapcert/sim.hpp"

namespace lyapcert {

/// p -> h -> h -> 2p*p tanh network. The output is read row-major as the
/// 2p x p matrix L(x).
struct MlpArchitecture {
  int input_dim = 2;
  int hidden = 20;

  int output_dim() const { return 2 * input_dim * input_dim; }
  int rows_of_l() const { return 2 * input_dim; }
  std::size_t param_count() const;
  void validate() const;
};

/// Weights of the certificate V(x) = x^T (L(x)^T L(x) + I) x.
struct CertificateParams {
  MlpArchitecture arch;
  Mat w1;  // h x p
  Vec b1;
  Mat w2;  // h x h
  Vec b2;
  Mat w3;  // 2p^2 x h
  Vec b3;

  static CertificateParams zeros(const MlpArchitecture& arch);

  /// Layer order w1, b1, w2, b2, w3, b3; matrices row-major.
  std::vector<double> flatten() const;
  static CertificateParams unflatten(const MlpArchitecture& arch, std::span<const double> theta);

  double squared_norm() const;
  bool all_finite() const;
};

/// Glorot-uniform weights, zero biases.
CertificateParams init_params(const MlpArchitecture& arch, std::uint64_t seed);

/// Certificate with L(x) identically zero, i.e. V(x) = |x|^2.
CertificateParams quadratic_params(const MlpArchitecture& arch);

class CertificateNet {
 public:
  explicit CertificateNet(CertificateParams params) : params_(std::move(params)) {}

  const CertificateParams& params() const { return params_; }
  int dim() const { return params_.arch.input_dim; }

  double value(const Vec& x) const;
  Vec grad(const Vec& x) const;

  /// Batched evaluation; columns of `xs` are states.
  Vec values(const Mat& xs) const;
  Mat grads(const Mat& xs) const;

  /// <grad V(x_i), v_i> for each column, using one forward tangent pass.
  Vec directional(const Mat& xs, const Mat& vs) const;

  /// L(x) as a 2p x p matrix.
  Mat l_matrix(const Vec& x) const;

 private:
  CertificateParams params_;
};

double eval_V(const CertificateParams& theta, const Vec& x);
Vec grad_x_V(const CertificateParams& theta, const Vec& x);

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
  std::size_t active = 0;  // points with a positive hinge term
};

/// Hinge surrogate  sum_i ReLU(<grad V(x_i), xdot_i> + eta V(x_i)) + lambda |theta|^2
/// and its exact parameter gradient. Columns of `xs`/`xdots` are samples.
/// The ReLU subgradient at zero is zero.
LossAndGrad grad_theta(const CertificateParams& theta, const Mat& xs, const Mat& xdots, double eta,
                       double lambda);

/// Loss only, without the backward pass.
double surrogate_loss(const CertificateParams& theta, const Mat& xs, const Mat& xdots, double eta,
                      double lambda);

struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double base_lr = 0.005;
  std::uint64_t total_steps = 0;  // 0 disables the cosine schedule
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState fresh(std::size_t k, double base_lr, std::uint64_t total_steps);

  /// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), clamped to 0 past the end.
  double learning_rate() const;
};

/// One bias-corrected Adam update, in place.
void adam_step(OptimizerState& state, std::vector<double>& theta, std::span<const double> grad);

}  // namespace lyapcert
