#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "lyapcert/certnet.hpp"
#include "lyapcert/sim.hpp"

namespace testing {

using lyapcert::Mat;
using lyapcert::Vec;

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec vec1(double a) { return Vec::Constant(1, a); }

// theta_i = 0.3 sin(1.7 i + 0.2); mirrored by tests/oracles/certificate_oracle.py.
inline lyapcert::CertificateParams deterministic_params(int p = 2, int h = 20) {
  lyapcert::MlpArchitecture arch;
  arch.input_dim = p;
  arch.hidden = h;
  std::vector<double> theta(arch.param_count());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = 0.3 * std::sin(1.7 * static_cast<double>(i) + 0.2);
  return lyapcert::CertificateParams::unflatten(arch, theta);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

inline double rel_err(const Vec& a, const Vec& b) {
  return (a - b).norm() / std::max({1.0, a.norm(), b.norm()});
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lyapcert_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
