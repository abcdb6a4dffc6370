#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lyapcert {

// A vector field or map produced NaN/Inf during integration.
class NonFiniteState : public std::runtime_error {
 public:
  NonFiniteState(std::size_t step, const std::string& what)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class BudgetViolation : public std::runtime_error {
 public:
  BudgetViolation(double time, double excess)
      : std::runtime_error("disturbance exceeds its budget at t=" + std::to_string(time) +
                           " by " + std::to_string(excess)),
        time_(time),
        excess_(excess) {}
  double time() const noexcept { return time_; }
  double excess() const noexcept { return excess_; }

 private:
  double time_;
  double excess_;
};

// Training diverged; carries the last parameter vector that produced a finite loss.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t step, std::vector<double> last_finite_theta)
      : std::runtime_error("non-finite loss at optimizer step " + std::to_string(step)),
        step_(step),
        last_finite_theta_(std::move(last_finite_theta)) {}
  std::size_t step() const noexcept { return step_; }
  const std::vector<double>& last_finite_theta() const noexcept { return last_finite_theta_; }

 private:
  std::size_t step_;
  std::vector<double> last_finite_theta_;
};

struct InvalidBox : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lyapcert
