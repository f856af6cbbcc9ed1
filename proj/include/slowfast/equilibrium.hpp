#pragma once

#include "slowfast/model.hpp"

#include <functional>

namespace slowfast {

/// Invariant density of the frozen fast process at fixed (x, mu), realized
/// through the explicit 1-D formula
///   pi(y) = Z / a(x,y,mu) * exp( int_0^y f/a )
/// on a uniform grid. Degenerate models (frozen fast block) carry a point
/// mass at the initial fast state instead of a density.
struct FrozenEquilibrium {
  GridSpec grid;
  ArrayXd y;            // nodes
  ArrayXd density;      // normalized, positive
  ArrayXd log_weight;   // int_0^y f/a - log a (before normalization)
  double log_z = 0.0;   // log normalization constant
  double tail_mass = 0.0;
  ArrayXd moments;      // orders 0..8
  double frozen_x = 0.0;
  MeasureHandle frozen_mu = MeasureHandle::dirac(0.0);
  double a_max = 0.0;

  bool degenerate = false;
  double atom = 0.0;    // point-mass location when degenerate

  double dy() const { return grid.dx(); }
};

struct EquilibriumOptions {
  GridSpec grid{};        // half_width <= 0 => auto 10*sqrt(a_max/kappa)
  double tail_tol = 1e-8;
  double moment_cap = 1e12;

  EquilibriumOptions() { grid.half_width = 0.0; }
};

FrozenEquilibrium invariant_density(const ModelSpec& model, double x,
                                    const MeasureHandle& mu,
                                    const EquilibriumOptions& opts = {});

/// Trapezoid quadrature of fn against the equilibrium density.
double equilibrium_average(const std::function<double(double)>& fn,
                           const FrozenEquilibrium& eq);

/// Quadrature of node-aligned samples against the density.
double equilibrium_average_nodes(const ArrayXd& values,
                                 const FrozenEquilibrium& eq);

/// Test function with two derivatives, for the weak-form residual.
struct TestFn2 {
  std::function<double(double)> value;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
};

/// | int (f * phi' + a * phi'') dpi |, which vanishes for the true
/// invariant measure.
double invariance_residual(const ModelSpec& model, const FrozenEquilibrium& eq,
                           const TestFn2& testfn);

}  // namespace slowfast
