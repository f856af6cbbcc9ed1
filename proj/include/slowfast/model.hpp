#pragma once

#include "slowfast/measure.hpp"

#include <functional>
#include <optional>
#include <string>

namespace slowfast {

using CoefficientFn = std::function<double(double, double, const MeasureHandle&)>;

/// A coefficient callback plus its declared argument dependence. The flags
/// let the equilibrium/cell caches collapse keys (a coefficient that ignores
/// x never forces an x-indexed re-solve) and let simulators freeze the right
/// amount of work per macro step.
struct Coefficient {
  CoefficientFn fn;
  bool depends_x = true;
  bool depends_y = true;
  bool depends_mu = true;

  double operator()(double x, double y, const MeasureHandle& mu) const {
    return fn(x, y, mu);
  }

  static Coefficient zero() {
    return Coefficient{[](double, double, const MeasureHandle&) { return 0.0; },
                       false, false, false};
  }
  static Coefficient constant(double v) {
    return Coefficient{
        [v](double, double, const MeasureHandle&) { return v; }, false, false,
        false};
  }
};

/// Linear functional derivative of an averaged coefficient, normalized so it
/// integrates to zero against mu.
using LfdFn =
    std::function<double(double /*x*/, const MeasureHandle&, double /*z*/)>;

/// Linear functional derivative of a raw coefficient, used as given.
using CoefLfdFn = std::function<double(double /*x*/, double /*y*/,
                                       const MeasureHandle&, double /*z*/)>;

/// The seven coefficient callbacks of the two-scale interacting system plus
/// the structural data the solvers rely on. The fast drift is stored as the
/// mean-reversion rate kappa and the bounded perturbation eta, and
/// f(x,y,mu) = -kappa*y + eta(x,y,mu) is synthesized from them.
struct ModelSpec {
  std::string name;

  Coefficient b, c, sigma, g, tau1, tau2;
  Coefficient eta;  // f = -kappa*y + eta
  double kappa = 1.0;

  double init_x = 0.0;
  double init_y = 0.0;

  /// All of b, f, g, tau1, tau2 identically zero: the fast block is frozen
  /// and the invariant measure degenerates to a point mass at init_y.
  bool degenerate_fast = false;

  /// Optional analytic linear functional derivatives of the averaged drift
  /// and diffusion; the numeric atom-insertion path is used when absent.
  std::optional<LfdFn> lfd_gamma_bar;
  std::optional<LfdFn> lfd_D_bar;

  /// Optional analytic measure derivatives of the raw slow-drift
  /// coefficients. When the frozen fast block does not depend on the
  /// measure, the averaging module composes these into the derivative of
  /// the averaged drift instead of differencing.
  std::optional<CoefLfdFn> lfd_c;
  std::optional<CoefLfdFn> lfd_g;

  double f(double x, double y, const MeasureHandle& mu) const {
    if (degenerate_fast) return 0.0;
    return -kappa * y + eta(x, y, mu);
  }

  double a(double x, double y, const MeasureHandle& mu) const {
    const double t1 = tau1(x, y, mu);
    const double t2 = tau2(x, y, mu);
    return 0.5 * (t1 * t1 + t2 * t2);
  }

  bool fast_depends_x() const {
    return !degenerate_fast &&
           (eta.depends_x || tau1.depends_x || tau2.depends_x);
  }
  bool fast_depends_mu() const {
    return !degenerate_fast &&
           (eta.depends_mu || tau1.depends_mu || tau2.depends_mu);
  }
  bool cell_depends_x() const { return fast_depends_x() || b.depends_x; }
  bool cell_depends_mu() const { return fast_depends_mu() || b.depends_mu; }
};

/// Built-in examples: "ou_linear", "mean_field_ou", "mean_field_fast",
/// "two_scale_langevin", "no_multiscale". Overrides apply to the scalar parameters a builtin
/// exposes (kappa, sigma, tau1, tau2, init_x, init_y, interaction strengths
/// where meaningful).
struct BuiltinOverrides {
  std::optional<double> kappa, sigma, tau1, tau2, init_x, init_y;
};

ModelSpec make_builtin(const std::string& name,
                       const BuiltinOverrides& ov = {});

/// Builds a ModelSpec from a JSON document: either {"example": name,
/// "overrides": {...}} or {"coefficients": {"b": expr, ...}, "kappa": r,
/// "init": [x0, y0]}. The fast drift is given as "eta", not "f".
ModelSpec build_model(const std::string& json_text);

}  // namespace slowfast
