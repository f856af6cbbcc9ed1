#pragma once

#include "slowfast/equilibrium.hpp"

namespace slowfast {

/// Centered solution of the frozen Poisson problem L_{x,mu} u = -B on the
/// equilibrium grid, with u_y from the first cumulative integral and u_yy
/// recovered algebraically from the equation.
struct CellSolution {
  ArrayXd y;
  ArrayXd u, u_y, u_yy;
  double frozen_x = 0.0;
  MeasureHandle frozen_mu = MeasureHandle::dirac(0.0);
  std::string inhomogeneity;  // "phi" (B = b) or "xi" (centered user F)
  double residual = 0.0;      // finite-difference residual on the bulk
  double centering = 0.0;     // |int u dpi| after the shift
  bool degenerate = false;

  double value_at(double yq) const { return interp_linear(y, u, yq); }
  double deriv_at(double yq) const { return interp_linear(y, u_y, yq); }
};

/// Cell problem L Phi = -b with int Phi dpi = 0. The centering of b is
/// checked against the same quadrature, not assumed.
CellSolution solve_cell_problem(const ModelSpec& model, double x,
                                const MeasureHandle& mu,
                                const FrozenEquilibrium& eq,
                                double centering_tol = 1e-6);

/// Auxiliary problem L Xi = -(F - int F dpi); the inhomogeneity is centered
/// by construction.
CellSolution solve_centered_poisson(const CoefficientFn& F,
                                    const ModelSpec& model, double x,
                                    const MeasureHandle& mu,
                                    const FrozenEquilibrium& eq);

/// Measure derivative of the cell solution in the direction of atom j of the
/// empirical measure the cell was solved at: a central difference of the
/// empirical projection, scaled by the atom count. Returned on the cell's
/// y-grid.
ArrayXd cell_measure_derivative(const ModelSpec& model, const CellSolution& cell,
                                const MeasureHandle& atoms, Eigen::Index j,
                                double step_scale = 1e-4);

/// Tensor-grid solution of the two-copy Poisson problem
///   L2_{x,xbar,mu} chi(y,ybar) = -b(x,y,mu) G(xbar,ybar,mu)
/// built by Feynman-Kac factorization over the two independent frozen
/// copies: chi = int_0^Tmax (P_t b)(y) (P_t G)(ybar) dt.
struct TensorCellSolution {
  ArrayXd y, ybar;
  MatrixXd chi;
  double frozen_x = 0.0, frozen_xbar = 0.0;
  MeasureHandle frozen_mu = MeasureHandle::dirac(0.0);
  double t_max = 0.0;
  double tail_estimate = 0.0;
  double residual = 0.0;       // finite-difference residual, interior nodes
  double centering = 0.0;      // |int int chi dpi dpibar| before subtraction
};

struct TensorOptions {
  double t_max = 0.0;         // 0 => 20 / kappa
  double dt = 0.0;            // 0 => 0.4 * dy^2 / a_max
  int prop_n = 1025;          // semigroup propagation nodes per copy
  int tensor_n = 129;         // output tensor nodes per axis
  double quad_interval = 1e-3;  // time-quadrature accumulation interval
  double tail_tol = 1e-4;
};

enum class CorrectorVariant { chi, chi_tilde };

/// Doubled corrector (variant chi pairs b with the measure derivative of the
/// cell solution, which requires x to coincide with an atom of mu; variant
/// chi_tilde pairs b with the cell solution itself).
TensorCellSolution solve_doubled_corrector(const ModelSpec& model, double x,
                                           double xbar, const MeasureHandle& mu,
                                           CorrectorVariant variant,
                                           const TensorOptions& opts = {});

/// Factorized tensor solver for a caller-supplied kernel pair: lhs is the
/// first-copy inhomogeneity as a function of y (must be centered under the
/// first copy's equilibrium), rhs the second-copy profile as a function of
/// ybar. Exposed so synthetic pairs can be driven directly.
TensorCellSolution solve_tensor_poisson(
    const ModelSpec& model, double x, double xbar, const MeasureHandle& mu,
    const std::function<double(double)>& lhs,
    const std::function<double(double)>& rhs, const TensorOptions& opts = {});

}  // namespace slowfast
