#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace slowfast {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// What went wrong, for mapping onto process exit codes.
enum class FaultKind {
  numerical,    // grid too small, CFL violated, blow-up, singular solve, ...
  assumption,   // a standing-assumption check failed where it must hold
  usage,        // bad configuration or precondition violation
};

class Fault : public std::runtime_error {
 public:
  Fault(FaultKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FaultKind kind() const { return kind_; }

 private:
  FaultKind kind_;
};

[[noreturn]] inline void fault(FaultKind k, const std::string& msg) {
  throw Fault(k, msg);
}

/// Uniform symmetric grid on [-half_width, half_width]. Node count is kept
/// odd so 0 is always a node; the cumulative integrals are anchored there.
struct GridSpec {
  double half_width = 10.0;
  int n = 2049;

  double dx() const { return 2.0 * half_width / static_cast<double>(n - 1); }
  ArrayXd nodes() const {
    return ArrayXd::LinSpaced(n, -half_width, half_width);
  }
  void validate() const {
    if (n < 9 || n % 2 == 0)
      fault(FaultKind::usage, "grid node count must be odd and >= 9");
    if (!(half_width > 0.0) || !std::isfinite(half_width))
      fault(FaultKind::usage, "grid half-width must be positive and finite");
  }
};

}  // namespace slowfast
