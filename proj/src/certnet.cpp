#include "lyapcert/certnet.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "lyapcert/errors.hpp"
#include "lyapcert/parallel.hpp"

namespace lyapcert {

std::size_t MlpArchitecture::param_count() const {
  const std::size_t p = static_cast<std::size_t>(input_dim);
  const std::size_t h = static_cast<std::size_t>(hidden);
  const std::size_t q = static_cast<std::size_t>(output_dim());
  return h * p + h + h * h + h + q * h + q;
}

void MlpArchitecture::validate() const {
  if (input_dim < 1 || hidden < 1) throw std::invalid_argument("architecture needs p >= 1 and h >= 1");
}

CertificateParams CertificateParams::zeros(const MlpArchitecture& arch) {
  arch.validate();
  const int p = arch.input_dim, h = arch.hidden, q = arch.output_dim();
  return CertificateParams{arch,          Mat::Zero(h, p), Vec::Zero(h), Mat::Zero(h, h),
                           Vec::Zero(h),  Mat::Zero(q, h), Vec::Zero(q)};
}

namespace {

template <typename F>
void for_each_block(const CertificateParams& c, F&& visit) {
  visit(c.w1);
  visit(c.b1);
  visit(c.w2);
  visit(c.b2);
  visit(c.w3);
  visit(c.b3);
}

template <typename F>
void for_each_block_mut(CertificateParams& c, F&& visit) {
  visit(c.w1);
  visit(c.b1);
  visit(c.w2);
  visit(c.b2);
  visit(c.w3);
  visit(c.b3);
}

template <typename Derived>
void append_row_major(std::vector<double>& out, const Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

template <typename Derived>
void read_row_major(std::span<const double> theta, std::size_t& pos, Eigen::MatrixBase<Derived>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = theta[pos++];
}

}  // namespace

std::vector<double> CertificateParams::flatten() const {
  std::vector<double> out;
  out.reserve(arch.param_count());
  for_each_block(*this, [&](const auto& m) { append_row_major(out, m); });
  return out;
}

CertificateParams CertificateParams::unflatten(const MlpArchitecture& arch,
                                               std::span<const double> theta) {
  if (theta.size() != arch.param_count())
    throw ShapeMismatch("parameter vector length " + std::to_string(theta.size()) +
                        " does not match architecture (" + std::to_string(arch.param_count()) + ")");
  CertificateParams out = zeros(arch);
  std::size_t pos = 0;
  for_each_block_mut(out, [&](auto& m) { read_row_major(theta, pos, m); });
  return out;
}

double CertificateParams::squared_norm() const {
  double s = 0.0;
  for_each_block(*this, [&](const auto& m) { s += m.squaredNorm(); });
  return s;
}

bool CertificateParams::all_finite() const {
  bool ok = true;
  for_each_block(*this, [&](const auto& m) { ok = ok && m.allFinite(); });
  return ok;
}

CertificateParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  CertificateParams out = CertificateParams::zeros(arch);
  std::mt19937_64 rng(seed);
  auto glorot = [&](Mat& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
  };
  glorot(out.w1);
  glorot(out.w2);
  glorot(out.w3);
  return out;
}

CertificateParams quadratic_params(const MlpArchitecture& arch) { return CertificateParams::zeros(arch); }

// ---------------------------------------------------------------------------
// Batched forward pass with one tangent direction per column.
//
// For a state x and direction v the network gives o = vec(L(x)) and its
// directional derivative od = dL[v]. Then y = L x, yd = L v + dL[v] x and
//   V(x)            = |y|^2 + |x|^2
//   <grad V(x), v>  = 2<x, v> + 2<y, yd>.
// ---------------------------------------------------------------------------
namespace {

struct Pass {
  Mat a1, s1, u1, d1;
  Mat a2, s2, u2, d2;
  Mat o, od;
  Mat y, yd;
};

// out(r, b) = sum_c vecL(r*p + c, b) * z(c, b)
Mat apply_l(const Mat& vec_l, const Mat& z, int p) {
  const int rows = 2 * p;
  Mat out = Mat::Zero(rows, z.cols());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < p; ++c) out.row(r).array() += vec_l.row(r * p + c).array() * z.row(c).array();
  return out;
}

void hidden_forward(const CertificateParams& th, const Mat& xs, Pass& f) {
  f.a1 = ((th.w1 * xs).colwise() + th.b1).array().tanh().matrix();
  f.s1 = (1.0 - f.a1.array().square()).matrix();
  f.a2 = ((th.w2 * f.a1).colwise() + th.b2).array().tanh().matrix();
  f.s2 = (1.0 - f.a2.array().square()).matrix();
  f.o = (th.w3 * f.a2).colwise() + th.b3;
  f.y = apply_l(f.o, xs, th.arch.input_dim);
}

void tangent_forward(const CertificateParams& th, const Mat& xs, const Mat& vs, Pass& f) {
  hidden_forward(th, xs, f);
  f.u1 = th.w1 * vs;
  f.d1 = f.s1.cwiseProduct(f.u1);
  f.u2 = th.w2 * f.d1;
  f.d2 = f.s2.cwiseProduct(f.u2);
  f.od = th.w3 * f.d2;
  const int p = th.arch.input_dim;
  f.yd = apply_l(f.o, vs, p) + apply_l(f.od, xs, p);
}

Vec decrease_terms(const Mat& xs, const Mat& vs, const Pass& f, double eta) {
  const Eigen::ArrayXd xv = xs.cwiseProduct(vs).colwise().sum().transpose().array();
  const Eigen::ArrayXd yyd = f.y.cwiseProduct(f.yd).colwise().sum().transpose().array();
  const Eigen::ArrayXd vvals =
      (f.y.colwise().squaredNorm() + xs.colwise().squaredNorm()).transpose().array();
  return (2.0 * xv + 2.0 * yyd + eta * vvals).matrix();
}

struct Grads {
  Mat w1, w2, w3;
  Vec b1, b2, b3;
  double hinge = 0.0;
  std::size_t active = 0;
};

// Reverse pass of the hinge sum over columns that are all active.
void hinge_backward(const CertificateParams& th, const Mat& xs, const Mat& vs, double eta, Grads& g) {
  Pass f;
  tangent_forward(th, xs, vs, f);
  const int p = th.arch.input_dim;
  const int rows = 2 * p;
  const Mat g_y = 2.0 * f.yd + 2.0 * eta * f.y;
  const Mat g_yd = 2.0 * f.y;

  const Eigen::Index q = th.arch.output_dim();
  Mat g_o(q, xs.cols()), g_od(q, xs.cols());
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < p; ++c) {
      g_o.row(r * p + c) = g_y.row(r).cwiseProduct(xs.row(c)) + g_yd.row(r).cwiseProduct(vs.row(c));
      g_od.row(r * p + c) = g_yd.row(r).cwiseProduct(xs.row(c));
    }
  }
  g.w3.noalias() += g_o * f.a2.transpose();
  g.w3.noalias() += g_od * f.d2.transpose();
  g.b3 += g_o.rowwise().sum();

  Mat g_a2 = th.w3.transpose() * g_o;
  const Mat g_d2 = th.w3.transpose() * g_od;
  const Mat g_u2 = f.s2.cwiseProduct(g_d2);
  g_a2.array() -= 2.0 * g_d2.array() * f.u2.array() * f.a2.array();
  const Mat g_z2 = g_a2.cwiseProduct(f.s2);
  g.w2.noalias() += g_z2 * f.a1.transpose();
  g.w2.noalias() += g_u2 * f.d1.transpose();
  g.b2 += g_z2.rowwise().sum();

  Mat g_a1 = th.w2.transpose() * g_z2;
  const Mat g_d1 = th.w2.transpose() * g_u2;
  const Mat g_u1 = f.s1.cwiseProduct(g_d1);
  g_a1.array() -= 2.0 * g_d1.array() * f.u1.array() * f.a1.array();
  const Mat g_z1 = g_a1.cwiseProduct(f.s1);
  g.w1.noalias() += g_z1 * xs.transpose();
  g.w1.noalias() += g_u1 * vs.transpose();
  g.b1 += g_z1.rowwise().sum();
}

constexpr Eigen::Index kChunk = 256;

Grads zero_grads(const CertificateParams& th) {
  const auto z = CertificateParams::zeros(th.arch);
  return Grads{z.w1, z.w2, z.w3, z.b1, z.b2, z.b3, 0.0, 0};
}

void hinge_chunk(const CertificateParams& th, const Mat& xs, const Mat& vs, double eta, bool backward,
                 Grads& g) {
  Pass f;
  tangent_forward(th, xs, vs, f);
  const Vec s = decrease_terms(xs, vs, f, eta);
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > 0.0) {
      g.hinge += s[i];
      active.push_back(i);
    }
  }
  g.active += active.size();
  if (!backward || active.empty()) return;
  const Mat xa = xs(Eigen::all, active);
  const Mat va = vs(Eigen::all, active);
  hinge_backward(th, xa, va, eta, g);
}

std::vector<Grads> hinge_chunks(const CertificateParams& th, const Mat& xs, const Mat& xdots, double eta,
                                bool backward) {
  if (xs.rows() != th.arch.input_dim || xdots.rows() != xs.rows() || xdots.cols() != xs.cols())
    throw ShapeMismatch("batch shapes do not match the certificate dimension");
  const Eigen::Index n = xs.cols();
  const std::size_t chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
  std::vector<Grads> parts(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index lo = static_cast<Eigen::Index>(c) * kChunk;
    const Eigen::Index len = std::min(kChunk, n - lo);
    parts[c] = backward ? zero_grads(th) : Grads{};
    hinge_chunk(th, xs.middleCols(lo, len), xdots.middleCols(lo, len), eta, backward, parts[c]);
  });
  return parts;
}

}  // namespace

LossAndGrad grad_theta(const CertificateParams& theta, const Mat& xs, const Mat& xdots, double eta,
                       double lambda) {
  auto parts = hinge_chunks(theta, xs, xdots, eta, true);
  Grads total = zero_grads(theta);
  for (const auto& part : parts) {  // fixed order: results independent of thread count
    total.hinge += part.hinge;
    total.active += part.active;
    total.w1 += part.w1;
    total.b1 += part.b1;
    total.w2 += part.w2;
    total.b2 += part.b2;
    total.w3 += part.w3;
    total.b3 += part.b3;
  }
  CertificateParams g{theta.arch, total.w1, total.b1, total.w2, total.b2, total.w3, total.b3};
  LossAndGrad out;
  out.loss = total.hinge + lambda * theta.squared_norm();
  out.active = total.active;
  out.grad = g.flatten();
  const auto flat = theta.flatten();
  for (std::size_t i = 0; i < flat.size(); ++i) out.grad[i] += 2.0 * lambda * flat[i];
  return out;
}

double surrogate_loss(const CertificateParams& theta, const Mat& xs, const Mat& xdots, double eta,
                      double lambda) {
  double hinge = 0.0;
  for (const auto& part : hinge_chunks(theta, xs, xdots, eta, false)) hinge += part.hinge;
  return hinge + lambda * theta.squared_norm();
}

// ---------------------------------------------------------------------------

Vec CertificateNet::values(const Mat& xs) const {
  Pass f;
  hidden_forward(params_, xs, f);
  return (f.y.colwise().squaredNorm() + xs.colwise().squaredNorm()).transpose();
}

Mat CertificateNet::grads(const Mat& xs) const {
  const auto& th = params_;
  const int p = th.arch.input_dim;
  Pass f;
  hidden_forward(th, xs, f);
  const Mat g_y = 2.0 * f.y;
  Mat g_o(th.arch.output_dim(), xs.cols());
  Mat gx = 2.0 * xs;
  for (int r = 0; r < 2 * p; ++r) {
    for (int c = 0; c < p; ++c) {
      g_o.row(r * p + c) = g_y.row(r).cwiseProduct(xs.row(c));
      gx.row(c) += f.o.row(r * p + c).cwiseProduct(g_y.row(r));
    }
  }
  const Mat g_z2 = (th.w3.transpose() * g_o).cwiseProduct(f.s2);
  const Mat g_z1 = (th.w2.transpose() * g_z2).cwiseProduct(f.s1);
  gx.noalias() += th.w1.transpose() * g_z1;
  return gx;
}

Vec CertificateNet::directional(const Mat& xs, const Mat& vs) const {
  Pass f;
  tangent_forward(params_, xs, vs, f);
  return decrease_terms(xs, vs, f, 0.0);
}

double CertificateNet::value(const Vec& x) const { return values(x)[0]; }

Vec CertificateNet::grad(const Vec& x) const { return grads(x).col(0); }

Mat CertificateNet::l_matrix(const Vec& x) const {
  Pass f;
  hidden_forward(params_, x, f);
  const int p = params_.arch.input_dim;
  Mat l(2 * p, p);
  for (int r = 0; r < 2 * p; ++r)
    for (int c = 0; c < p; ++c) l(r, c) = f.o(r * p + c, 0);
  return l;
}

double eval_V(const CertificateParams& theta, const Vec& x) { return CertificateNet(theta).value(x); }

Vec grad_x_V(const CertificateParams& theta, const Vec& x) { return CertificateNet(theta).grad(x); }

// ---------------------------------------------------------------------------

OptimizerState OptimizerState::fresh(std::size_t k, double base_lr, std::uint64_t total_steps) {
  OptimizerState s;
  s.m.assign(k, 0.0);
  s.v.assign(k, 0.0);
  s.base_lr = base_lr;
  s.total_steps = total_steps;
  return s;
}

double OptimizerState::learning_rate() const {
  if (total_steps == 0) return base_lr;
  if (step >= total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void adam_step(OptimizerState& state, std::vector<double>& theta, std::span<const double> grad) {
  if (grad.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size())
    throw ShapeMismatch("adam_step: parameter, gradient and moment sizes differ");
  const double lr = state.learning_rate();
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  ++state.step;
}

}  // namespace lyapcert
