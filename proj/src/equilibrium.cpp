#include "slowfast/equilibrium.hpp"

#include "slowfast/quadrature.hpp"

#include <cmath>

namespace slowfast {

namespace {

double estimate_a_max(const ModelSpec& model, double x, const MeasureHandle& mu,
                      double half_width) {
  double a_max = 0.0;
  const int probes = 129;
  for (int i = 0; i < probes; ++i) {
    const double y = -half_width + 2.0 * half_width * i / (probes - 1);
    a_max = std::max(a_max, model.a(x, y, mu));
  }
  return a_max;
}

}  // namespace

FrozenEquilibrium invariant_density(const ModelSpec& model, double x,
                                    const MeasureHandle& mu,
                                    const EquilibriumOptions& opts) {
  FrozenEquilibrium eq;
  eq.frozen_x = x;
  eq.frozen_mu = mu;

  if (model.degenerate_fast) {
    eq.degenerate = true;
    eq.atom = model.init_y;
    eq.moments = ArrayXd(9);
    for (int k = 0; k <= 8; ++k) eq.moments(k) = std::pow(eq.atom, k);
    return eq;
  }

  GridSpec grid = opts.grid;
  const double a_probe = estimate_a_max(model, x, mu, 10.0);
  if (!(grid.half_width > 0.0))
    grid.half_width = 10.0 * std::sqrt(std::max(a_probe, 1e-12) / model.kappa);
  grid.validate();

  eq.grid = grid;
  eq.y = grid.nodes();
  const double dy = grid.dx();
  const Eigen::Index n = eq.y.size();

  ArrayXd a_vals(n), drift_over_a(n);
  double a_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = model.a(x, eq.y(i), mu);
    if (!(a > 0.0))
      fault(FaultKind::numerical,
            "ellipticity fault: a(x,y,mu) <= 0 at y=" + std::to_string(eq.y(i)));
    a_vals(i) = a;
    a_max = std::max(a_max, a);
    drift_over_a(i) = model.f(x, eq.y(i), mu) / a;
  }
  eq.a_max = a_max;

  if (grid.half_width < 6.0 * std::sqrt(a_max / model.kappa))
    fault(FaultKind::usage,
          "equilibrium grid half-width below 6*sqrt(a_max/kappa)");

  // int_0^y f/a, accumulated once and reused by every downstream solve.
  ArrayXd s = cum_quartic(drift_over_a, dy);
  const Eigen::Index i0 = (n - 1) / 2;  // node at y = 0
  s -= s(i0);

  eq.log_weight = s - a_vals.log();
  const double m = eq.log_weight.maxCoeff();
  ArrayXd unnorm = (eq.log_weight - m).exp();
  const double z = trapezoid(unnorm, dy);
  eq.log_z = -(std::log(z) + m);
  eq.density = unnorm / z;

  // Gaussian-type tail estimate: p(L) * a(L) / |f(L)| per side.
  auto side_tail = [&](Eigen::Index i) {
    const double f_abs = std::fabs(model.f(x, eq.y(i), mu));
    return eq.density(i) * a_vals(i) / std::max(f_abs, 1e-12);
  };
  eq.tail_mass = side_tail(0) + side_tail(n - 1);
  if (eq.tail_mass > opts.tail_tol)
    fault(FaultKind::numerical,
          "equilibrium grid too small: estimated tail mass " +
              std::to_string(eq.tail_mass));

  eq.moments = ArrayXd(9);
  ArrayXd pow_y = ArrayXd::Ones(n);
  for (int k = 0; k <= 8; ++k) {
    eq.moments(k) = trapezoid(pow_y * eq.density, dy);
    pow_y *= eq.y;
  }
  for (int k = 0; k <= 8; k += 2)
    if (!(std::fabs(eq.moments(k)) <= opts.moment_cap))
      fault(FaultKind::numerical,
            "equilibrium moment of order " + std::to_string(k) +
                " exceeds the configured cap");
  return eq;
}

double equilibrium_average(const std::function<double(double)>& fn,
                           const FrozenEquilibrium& eq) {
  if (eq.degenerate) return fn(eq.atom);
  ArrayXd vals(eq.y.size());
  for (Eigen::Index i = 0; i < eq.y.size(); ++i) {
    const double v = fn(eq.y(i));
    if (!std::isfinite(v))
      fault(FaultKind::numerical,
            "non-finite integrand at node " + std::to_string(i));
    vals(i) = v;
  }
  return trapezoid(vals * eq.density, eq.dy());
}

double equilibrium_average_nodes(const ArrayXd& values,
                                 const FrozenEquilibrium& eq) {
  if (eq.degenerate)
    fault(FaultKind::usage, "node-aligned average on a degenerate equilibrium");
  if (values.size() != eq.y.size())
    fault(FaultKind::usage, "node count mismatch in equilibrium average");
  return trapezoid(values * eq.density, eq.dy());
}

double invariance_residual(const ModelSpec& model, const FrozenEquilibrium& eq,
                           const TestFn2& testfn) {
  if (eq.degenerate) return 0.0;
  ArrayXd vals(eq.y.size());
  for (Eigen::Index i = 0; i < eq.y.size(); ++i) {
    const double y = eq.y(i);
    const double v = model.f(eq.frozen_x, y, eq.frozen_mu) * testfn.d1(y) +
                     model.a(eq.frozen_x, y, eq.frozen_mu) * testfn.d2(y);
    if (!std::isfinite(v))
      fault(FaultKind::numerical,
            "non-finite generator value at node " + std::to_string(i));
    vals(i) = v;
  }
  return std::fabs(trapezoid(vals * eq.density, eq.dy()));
}

}  // namespace slowfast
