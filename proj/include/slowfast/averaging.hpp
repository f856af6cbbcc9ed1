#pragma once

#include "slowfast/poisson.hpp"

#include <memory>
#include <optional>
#include <utility>

namespace slowfast {

struct LocalCoefficients {
  double gamma = 0.0, gamma1 = 0.0, D = 0.0, D1 = 0.0;
};

/// Snapshot row for table dumps.
struct AveragedCoefficients {
  double x = 0.0;
  double gamma_bar = 0.0;
  double D_bar = 0.0;
  double D_bar_alt = 0.0;
  double alpha_tilde = 0.0;  // int Phi' dpi when the fast block is frozen-free
  double alpha = 0.0;        // int (Phi')^2 dpi
  std::string provenance;
};

/// Corrected local and averaged coefficients built from the frozen
/// equilibrium and cell solutions, with caching keyed by (x rounded to a
/// fine grid, measure fingerprint); the key collapses along arguments the
/// model does not depend on, so the simulation loops pay one solve per
/// frozen measure in the common cases.
class AveragedModel {
 public:
  explicit AveragedModel(const ModelSpec& model,
                         EquilibriumOptions eq_opts = {});

  const ModelSpec& model() const { return *model_; }

  LocalCoefficients local_coefficients(double x, double y,
                                       const MeasureHandle& mu) const;
  double gamma_bar(double x, const MeasureHandle& mu) const;
  double D_bar(double x, const MeasureHandle& mu) const;
  double D_bar_alt(double x, const MeasureHandle& mu) const;

  /// Linear functional derivatives of the averaged drift and diffusion at
  /// (x, mu) in direction z. Analytic callbacks win; composition through the
  /// coefficient derivatives is used when the cell block ignores the
  /// measure; the last resort is atom insertion with Richardson
  /// extrapolation (empirical measures only).
  std::pair<double, double> lfd_averaged(double x, const MeasureHandle& mu,
                                         double z) const;

  /// Example constants when the frozen fast block depends on neither x nor
  /// the measure.
  std::optional<double> alpha_tilde() const;
  std::optional<double> alpha() const;

  /// Access to the cached frozen solve; used by the rate module for
  /// pi-quadratures along the limit law.
  struct Solved {
    FrozenEquilibrium eq;
    CellSolution cell;
    ArrayXd phi_x, phi_xy;   // zero when the cell ignores x
    double alpha_tilde_loc = 0.0;
    double alpha_loc = 0.0;
    double int_b_phi = 0.0;  // int b Phi dpi
    bool has_x_derivatives = false;
  };
  std::shared_ptr<const Solved> solve(double x, const MeasureHandle& mu) const;

  AveragedCoefficients snapshot(double x, const MeasureHandle& mu) const;

 private:
  double gamma_bar_generic(double x, const MeasureHandle& mu,
                           const Solved& s) const;
  double d_bar_generic(double x, const MeasureHandle& mu,
                       const Solved& s) const;
  double d_bar_alt_generic(double x, const MeasureHandle& mu,
                           const Solved& s) const;

  std::shared_ptr<const ModelSpec> model_;
  EquilibriumOptions eq_opts_;
  struct State;
  std::shared_ptr<State> state_;
};

}  // namespace slowfast
