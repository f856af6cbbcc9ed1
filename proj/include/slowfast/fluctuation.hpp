#pragma once

#include "slowfast/simulate.hpp"

#include <vector>

namespace slowfast {

/// Dictionary of rapidly decaying test functions with derivatives up to
/// order 6. The default family is the Hermite functions
///   h_j(x) = H_j(x) exp(-x^2/2) / sqrt(2^j j! sqrt(pi)),
/// whose derivative ladder is analytic. Custom members can be supplied for
/// tests.
class TestDictionary {
 public:
  struct Member {
    std::function<double(int /*order <= 6*/, double)> eval;
    std::string label;
  };

  static TestDictionary hermite(int count);
  static TestDictionary from_members(std::vector<Member> members);

  int size() const { return static_cast<int>(members_.size()); }
  double value(int j, double x) const { return members_[j].eval(0, x); }
  double derivative(int j, int order, double x) const {
    return members_[j].eval(order, x);
  }
  const std::string& label(int j) const { return members_[j].label; }

  /// Batched evaluation: matrix (points x size) of the order-th derivative.
  MatrixXd eval_all(const ArrayXd& points, int order) const;

  /// Cross-check first derivatives against central differences; faults when
  /// the relative mismatch exceeds tol.
  void verify_derivatives(double tol = 1e-5) const;

 private:
  std::vector<Member> members_;
};

/// Matrix of pairings z[j][t] = a_N sqrt(N) ( <emp_t, phi_j> - <limit_t, phi_j> ).
struct FluctuationField {
  ArrayXd times;
  MatrixXd z;  // size x (steps+1)
  double a_n = 1.0;
  std::string provenance;
};

FluctuationField fluctuation_pairings(const EnsemblePath& emp,
                                      const EnsemblePath& limit, double a_n,
                                      const TestDictionary& dict);

/// Weighted Sobolev norm
///   ||phi||_n = sqrt( sum_{k<=n} int (1+x^2)^{2n} (phi^(k))^2 dx )
/// on a uniform grid, with a decay check at the grid ends.
struct NormResult {
  double value = 0.0;
  double tail_estimate = 0.0;
};

struct SmoothFn {
  std::function<double(int /*order*/, double)> eval;
};

NormResult sobolev_norm(const SmoothFn& phi, int n, const GridSpec& grid);

/// Sup seminorm |phi|_n = sum_{k<=n} sup |phi^(k)| over the grid.
NormResult sup_seminorm(const SmoothFn& phi, int n, const GridSpec& grid);

inline SmoothFn as_smooth(const TestDictionary& dict, int j) {
  return SmoothFn{[&dict, j](int order, double x) {
    return dict.derivative(j, order, x);
  }};
}

}  // namespace slowfast
