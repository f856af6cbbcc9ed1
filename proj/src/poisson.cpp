#include "slowfast/poisson.hpp"

#include "slowfast/quadrature.hpp"

#include <cmath>

namespace slowfast {

namespace {

/// Shared solve: L u = -B_c with B_c the discretely centered inhomogeneity,
/// through the explicit double-integral representation
///   u_y(y) = -(1/(a pi)) int_{-inf}^y B_c pi,   u = int u_y,
/// shifted so int u dpi = 0. The flux is accumulated toward the center from
/// both edges: B_c integrates to zero, so each tail's flux decays and a
/// sweep across the bulk would destroy its relative accuracy.
CellSolution solve_with_inhomogeneity(const ModelSpec& model, double x,
                                      const MeasureHandle& mu,
                                      const FrozenEquilibrium& eq,
                                      const ArrayXd& B, const char* tag) {
  CellSolution cell;
  cell.frozen_x = x;
  cell.frozen_mu = mu;
  cell.inhomogeneity = tag;
  cell.y = eq.y;

  const Eigen::Index n = eq.y.size();
  const double dy = eq.dy();

  ArrayXd a_vals(n), f_vals(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a_vals(i) = model.a(x, eq.y(i), mu);
    f_vals(i) = model.f(x, eq.y(i), mu);
    if (!(a_vals(i) > 0.0))
      fault(FaultKind::numerical, "ellipticity fault in cell solve");
  }

  const ArrayXd B_c = B - trapezoid(B * eq.density, dy);
  const ArrayXd g_pi = B_c * eq.density;
  const ArrayXd wf = cum_quartic(g_pi, dy);
  const ArrayXd wb = cum_quartic(ArrayXd(g_pi.reverse()), dy);
  ArrayXd flux(n);
  const Eigen::Index mid = (n - 1) / 2;
  for (Eigen::Index i = 0; i < n; ++i)
    flux(i) = i <= mid ? wf(i) : -wb(n - 1 - i);
  cell.u_y = -flux / (a_vals * eq.density);

  // Anchor the outer integral at the center node: accumulation error grows
  // outward into the tails, where the equilibrium weight kills it, instead
  // of sweeping across the bulk.
  cell.u = cum_quartic(cell.u_y, dy);
  cell.u -= cell.u(mid);
  const double shift = trapezoid(cell.u * eq.density, dy);
  cell.u -= shift;
  cell.centering = std::fabs(trapezoid(cell.u * eq.density, dy));
  cell.u_yy = (-B_c - f_vals * cell.u_y) / a_vals;

  // Independent residual: re-derive both derivatives from u by central
  // differences and apply the generator, restricted to nodes carrying mass.
  const ArrayXd du = diff_central(cell.u, dy);
  const ArrayXd d2u = diff2_central(cell.u, dy);
  const double pmax = eq.density.maxCoeff();
  double res = 0.0;
  for (Eigen::Index i = 2; i + 2 < n; ++i) {
    if (eq.density(i) < 1e-8 * pmax) continue;
    res = std::max(res,
                   std::fabs(f_vals(i) * du(i) + a_vals(i) * d2u(i) + B_c(i)));
  }
  cell.residual = res;
  return cell;
}

CellSolution degenerate_cell(const ModelSpec& model, double x,
                             const MeasureHandle& mu,
                             const FrozenEquilibrium& eq, const char* tag) {
  CellSolution cell;
  cell.frozen_x = x;
  cell.frozen_mu = mu;
  cell.inhomogeneity = tag;
  cell.degenerate = true;
  // A frozen fast block has no corrector: represent it as the zero function
  // on a token grid around the atom.
  GridSpec g{1.0, 9};
  cell.y = g.nodes() + eq.atom;
  cell.u = ArrayXd::Zero(cell.y.size());
  cell.u_y = ArrayXd::Zero(cell.y.size());
  cell.u_yy = ArrayXd::Zero(cell.y.size());
  (void)model;
  return cell;
}

}  // namespace

CellSolution solve_cell_problem(const ModelSpec& model, double x,
                                const MeasureHandle& mu,
                                const FrozenEquilibrium& eq,
                                double centering_tol) {
  if (model.degenerate_fast || eq.degenerate)
    return degenerate_cell(model, x, mu, eq, "phi");

  ArrayXd B(eq.y.size());
  for (Eigen::Index i = 0; i < eq.y.size(); ++i) B(i) = model.b(x, eq.y(i), mu);
  const double defect = std::fabs(trapezoid(B * eq.density, eq.dy()));
  if (defect > centering_tol)
    fault(FaultKind::assumption,
          "centering violation: |int b dpi| = " + std::to_string(defect));
  return solve_with_inhomogeneity(model, x, mu, eq, B, "phi");
}

CellSolution solve_centered_poisson(const CoefficientFn& F,
                                    const ModelSpec& model, double x,
                                    const MeasureHandle& mu,
                                    const FrozenEquilibrium& eq) {
  if (model.degenerate_fast || eq.degenerate)
    return degenerate_cell(model, x, mu, eq, "xi");

  ArrayXd B(eq.y.size());
  for (Eigen::Index i = 0; i < eq.y.size(); ++i) {
    B(i) = F(x, eq.y(i), mu);
    if (!std::isfinite(B(i)))
      fault(FaultKind::numerical,
            "non-finite inhomogeneity at node " + std::to_string(i));
  }
  B -= trapezoid(B * eq.density, eq.dy());
  return solve_with_inhomogeneity(model, x, mu, eq, B, "xi");
}

ArrayXd cell_measure_derivative(const ModelSpec& model, const CellSolution& cell,
                                const MeasureHandle& atoms, Eigen::Index j,
                                double step_scale) {
  if (atoms.kind() != MeasureHandle::Kind::empirical)
    fault(FaultKind::usage, "measure derivative needs an empirical measure");
  if (j < 0 || j >= atoms.atoms().size())
    fault(FaultKind::usage, "atom index out of range");
  if (cell.degenerate) return ArrayXd::Zero(cell.y.size());

  const double n_atoms = static_cast<double>(atoms.atoms().size());
  const double xj = atoms.atoms()(j);
  const double delta = step_scale * (1.0 + std::fabs(xj));

  EquilibriumOptions opts;
  opts.grid = GridSpec{cell.y(cell.y.size() - 1), static_cast<int>(cell.y.size())};

  auto solve_at = [&](double z) {
    const MeasureHandle shifted = atoms.with_atom_moved(j, z);
    const auto eq = invariant_density(model, cell.frozen_x, shifted, opts);
    return solve_cell_problem(model, cell.frozen_x, shifted, eq);
  };
  const CellSolution plus = solve_at(xj + delta);
  const CellSolution minus = solve_at(xj - delta);

  ArrayXd out = n_atoms * (plus.u - minus.u) / (2.0 * delta);
  if (!out.allFinite())
    fault(FaultKind::numerical, "perturbation fault in measure derivative");
  return out;
}

namespace {

/// Generator application on a uniform grid; ghost nodes extend linearly so
/// affine profiles are reproduced exactly.
void apply_generator(const ArrayXd& u, const ArrayXd& f_vals,
                     const ArrayXd& a_vals, double dy, ArrayXd& out) {
  const Eigen::Index n = u.size();
  out.resize(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    const double uy = (u(i + 1) - u(i - 1)) / (2.0 * dy);
    const double uyy = (u(i + 1) - 2.0 * u(i) + u(i - 1)) / (dy * dy);
    out(i) = f_vals(i) * uy + a_vals(i) * uyy;
  }
  out(0) = f_vals(0) * (u(1) - u(0)) / dy;
  out(n - 1) = f_vals(n - 1) * (u(n - 1) - u(n - 2)) / dy;
}

/// One Heun step of the frozen backward semigroup (the first-order bias of
/// plain Euler is visible against the tensor-solution tolerances).
void semigroup_step(ArrayXd& u, const ArrayXd& f_vals, const ArrayXd& a_vals,
                    double dy, double dt, ArrayXd& k1, ArrayXd& k2,
                    ArrayXd& pred) {
  apply_generator(u, f_vals, a_vals, dy, k1);
  pred = u + dt * k1;
  apply_generator(pred, f_vals, a_vals, dy, k2);
  u += 0.5 * dt * (k1 + k2);
}

}  // namespace

TensorCellSolution solve_tensor_poisson(
    const ModelSpec& model, double x, double xbar, const MeasureHandle& mu,
    const std::function<double(double)>& lhs,
    const std::function<double(double)>& rhs, const TensorOptions& opts) {
  if (model.degenerate_fast)
    fault(FaultKind::usage, "tensor corrector needs a live fast block");
  if (opts.prop_n < 2 * opts.tensor_n || (opts.prop_n - 1) % (opts.tensor_n - 1) != 0)
    fault(FaultKind::usage, "tensor grid must subsample the propagation grid");

  EquilibriumOptions eopts;
  eopts.grid.n = opts.prop_n;
  const FrozenEquilibrium eq1 = invariant_density(model, x, mu, eopts);
  eopts.grid = eq1.grid;
  const FrozenEquilibrium eq2 = invariant_density(model, xbar, mu, eopts);

  const ArrayXd& y = eq1.y;
  const Eigen::Index n = y.size();
  const double dy = eq1.dy();

  ArrayXd f1(n), a1(n), f2(n), a2(n), u(n), v(n);
  double a_max = 0.0, f_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    f1(i) = model.f(x, y(i), mu);
    a1(i) = model.a(x, y(i), mu);
    f2(i) = model.f(xbar, y(i), mu);
    a2(i) = model.a(xbar, y(i), mu);
    u(i) = lhs(y(i));
    v(i) = rhs(y(i));
    a_max = std::max(a_max, std::max(a1(i), a2(i)));
    f_max = std::max(f_max, std::max(std::fabs(f1(i)), std::fabs(f2(i))));
  }
  const ArrayXd u0 = u, v0 = v;

  const double dt_stable = 0.4 * dy * dy / a_max;
  const double dt = opts.dt > 0.0 ? opts.dt : dt_stable;
  if (dt > 0.5 * dy * dy / a_max || f_max * dt / dy > 0.9)
    fault(FaultKind::numerical, "CFL fault: semigroup step too large");
  const double t_max = opts.t_max > 0.0 ? opts.t_max : 20.0 / model.kappa;
  const long steps = std::lround(std::ceil(t_max / dt));
  const long qstride = std::max(1L, std::lround(opts.quad_interval / dt));

  const Eigen::Index stride = (n - 1) / (opts.tensor_n - 1);
  TensorCellSolution sol;
  sol.frozen_x = x;
  sol.frozen_xbar = xbar;
  sol.frozen_mu = mu;
  sol.t_max = t_max;
  sol.y = ArrayXd(opts.tensor_n);
  for (int i = 0; i < opts.tensor_n; ++i) sol.y(i) = y(i * stride);
  sol.ybar = sol.y;
  sol.chi = MatrixXd::Zero(opts.tensor_n, opts.tensor_n);

  VectorXd uc(opts.tensor_n), vc(opts.tensor_n);
  auto accumulate = [&](double weight) {
    for (int i = 0; i < opts.tensor_n; ++i) {
      uc(i) = u(i * stride);
      vc(i) = v(i * stride);
    }
    sol.chi.noalias() += weight * uc * vc.transpose();
  };

  ArrayXd k1, k2, pred;
  double prev_amp = 0.0, last_amp = 0.0;
  accumulate(0.5 * qstride * dt);
  for (long s = 1; s <= steps; ++s) {
    semigroup_step(u, f1, a1, dy, dt, k1, k2, pred);
    semigroup_step(v, f2, a2, dy, dt, k1, k2, pred);
    if (s % qstride == 0 || s == steps) {
      const bool at_end = (s == steps);
      const double w = (at_end ? 0.5 : 1.0) * qstride * dt;
      accumulate(w);
      prev_amp = last_amp;
      last_amp = u.abs().maxCoeff() * v.abs().maxCoeff();
    }
  }

  // Exponential-decay tail estimate from the last two checkpoints.
  if (prev_amp > 0.0 && last_amp > 0.0 && last_amp < prev_amp) {
    const double rate = std::log(prev_amp / last_amp) / (qstride * dt);
    sol.tail_estimate = last_amp / rate;
  } else {
    sol.tail_estimate = last_amp > 0.0 ? std::numeric_limits<double>::infinity()
                                       : 0.0;
  }
  if (sol.tail_estimate > opts.tail_tol)
    fault(FaultKind::numerical,
          "corrector horizon too short: tail estimate " +
              std::to_string(sol.tail_estimate));

  // Double centering under pi x pibar on the tensor grid.
  const double dyc = sol.y(1) - sol.y(0);
  ArrayXd p1(opts.tensor_n), p2(opts.tensor_n);
  for (int i = 0; i < opts.tensor_n; ++i) {
    p1(i) = eq1.density(i * stride);
    p2(i) = eq2.density(i * stride);
  }
  p1 /= trapezoid(p1, dyc);
  p2 /= trapezoid(p2, dyc);
  ArrayXd row_avg(opts.tensor_n);
  for (int i = 0; i < opts.tensor_n; ++i)
    row_avg(i) = trapezoid(ArrayXd(sol.chi.row(i).transpose().array()) * p2, dyc);
  const double cshift = trapezoid(row_avg * p1, dyc);
  sol.centering = std::fabs(cshift);
  sol.chi.array() -= cshift;

  // Finite-difference residual of the two-copy generator on interior nodes
  // carrying equilibrium mass.
  double res = 0.0;
  const double pmax = p1.maxCoeff() * p2.maxCoeff();
  for (int i = 1; i + 1 < opts.tensor_n; ++i) {
    for (int k = 1; k + 1 < opts.tensor_n; ++k) {
      if (p1(i) * p2(k) < 1e-8 * pmax) continue;
      const double cy =
          (sol.chi(i + 1, k) - sol.chi(i - 1, k)) / (2.0 * dyc);
      const double cyy = (sol.chi(i + 1, k) - 2.0 * sol.chi(i, k) +
                          sol.chi(i - 1, k)) /
                         (dyc * dyc);
      const double cb =
          (sol.chi(i, k + 1) - sol.chi(i, k - 1)) / (2.0 * dyc);
      const double cbb = (sol.chi(i, k + 1) - 2.0 * sol.chi(i, k) +
                          sol.chi(i, k - 1)) /
                         (dyc * dyc);
      const Eigen::Index gi = i * stride, gk = k * stride;
      const double gen_val = f1(gi) * cy + a1(gi) * cyy + f2(gk) * cb +
                             a2(gk) * cbb;
      res = std::max(res, std::fabs(gen_val + u0(gi) * v0(gk)));
    }
  }
  sol.residual = res;
  return sol;
}

TensorCellSolution solve_doubled_corrector(const ModelSpec& model, double x,
                                           double xbar, const MeasureHandle& mu,
                                           CorrectorVariant variant,
                                           const TensorOptions& opts) {
  EquilibriumOptions eopts;
  const FrozenEquilibrium eq_bar = invariant_density(model, xbar, mu, eopts);
  const CellSolution cell_bar = solve_cell_problem(model, xbar, mu, eq_bar);

  std::function<double(double)> rhs;
  if (variant == CorrectorVariant::chi_tilde) {
    rhs = [cell_bar](double yb) { return cell_bar.value_at(yb); };
  } else {
    if (mu.kind() != MeasureHandle::Kind::empirical)
      fault(FaultKind::usage, "variant chi needs an empirical measure");
    Eigen::Index j = -1;
    for (Eigen::Index i = 0; i < mu.atoms().size(); ++i)
      if (std::fabs(mu.atoms()(i) - x) < 1e-12) j = i;
    if (j < 0)
      fault(FaultKind::usage,
            "variant chi pairs b with the measure derivative at an atom; x "
            "must coincide with an atom of mu");
    const ArrayXd dmu = cell_measure_derivative(model, cell_bar, mu, j);
    const ArrayXd grid = cell_bar.y;
    rhs = [grid, dmu](double yb) { return interp_linear(grid, dmu, yb); };
  }
  auto lhs = [&model, x, mu](double yv) { return model.b(x, yv, mu); };
  return solve_tensor_poisson(model, x, xbar, mu, lhs, rhs, opts);
}

}  // namespace slowfast
