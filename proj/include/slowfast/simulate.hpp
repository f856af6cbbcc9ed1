#pragma once

#include "slowfast/averaging.hpp"
#include "slowfast/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace slowfast {

/// Micro-step policy: the fast block is integrated with a single uniform
/// micro step eps^2/K; macro steps (measure refresh + recording) are aligned
/// to delta_report.
struct StepPolicy {
  int micro_substeps = 20;      // K
  double delta_report = 1e-2;
};

/// Feedback control h(t, x, y) -> (h1, h2).
struct ControlField {
  std::function<void(double, double, double, double&, double&)> h;
  bool is_zero = false;
  bool y_independent = false;
  double bound_estimate = 0.0;

  /// Set when the control is the recovered feedback form
  /// (sigma + tau1 Phi_y, tau2 Phi_y) * hbar / (2 Dbar): the pi-quadratures
  /// of such a control collapse in closed form, which the rate module
  /// exploits.
  struct RieszFeedback {
    std::function<double(double /*t*/, double /*x*/)> hbar;
    std::function<double(double /*t*/, double /*x*/)> d_bar;
  };
  std::shared_ptr<const RieszFeedback> riesz;

  static ControlField zero() {
    ControlField c;
    c.h = [](double, double, double, double& h1, double& h2) {
      h1 = 0.0;
      h2 = 0.0;
    };
    c.is_zero = true;
    c.y_independent = true;
    return c;
  }
};

/// Time-indexed particle trajectories at macro resolution. Slow states are
/// always present; fast states and control samples depend on the run type.
struct EnsemblePath {
  ArrayXd times;     // macro grid, 0 .. T_eff
  MatrixXd X;        // n_particles x (n_macro+1)
  MatrixXd Y;        // empty when the run has no fast block
  MatrixXd U1, U2;   // control samples at macro times, empty if uncontrolled
  std::uint64_t seed = 0;
  double eps = 0.0;  // 0 for averaged runs
  int n_particles = 0;
  int m_aux = 0;     // auxiliary ensemble size for the law approximation
  double a_n = 1.0;
  bool aux_degenerate_warning = false;  // M_aux == N
  bool has_fast = false;
  bool has_controls = false;

  int n_steps() const { return static_cast<int>(times.size()) - 1; }
  double dt_macro() const { return times(1) - times(0); }
  MeasureHandle empirical_at(int k) const {
    return MeasureHandle::empirical(X.col(k).array());
  }
};

struct MultiscaleOptions {
  const ControlField* control = nullptr;  // null and zero() step identically
  double a_n = 1.0;
  double blowup_threshold = 1e6;
  std::vector<std::uint32_t> stream_ids;  // optional particle relabeling
};

/// Two-scale interacting system, Euler-Maruyama over micro steps with the
/// empirical measure frozen across each macro step.
EnsemblePath simulate_multiscale(const ModelSpec& model, int n_particles,
                                 double eps, double t_final,
                                 const StepPolicy& policy, std::uint64_t seed,
                                 const MultiscaleOptions& opts = {});

/// IID slow-fast system: the law of the solution is approximated by a
/// self-interacting auxiliary ensemble of m_aux particles; the first
/// n_particles share their noise streams with simulate_multiscale under the
/// same seed.
EnsemblePath simulate_iid_mv(const ModelSpec& model, int n_particles,
                             int m_aux, double eps, double t_final,
                             const StepPolicy& policy, std::uint64_t seed);

/// Optional coupling of an averaged run to a micro grid: Brownian
/// increments are aggregated from the same micro draws a multiscale run
/// consumes, so the two runs ride the same noise.
struct MicroCoupling {
  double eps = 0.1;
  int micro_substeps = 20;
};

EnsemblePath simulate_averaged(const AveragedModel& avg, int n_particles,
                               double t_final, double step, std::uint64_t seed,
                               const std::optional<MicroCoupling>& couple = {});

/// sup over macro steps of the per-particle mean-square slow-state gap.
double coupling_error(const EnsemblePath& a, const EnsemblePath& b);

/// Exact 1-D Wasserstein-2 between two equal-size empirical measures
/// (order-statistics pairing).
double w2_empirical(const ArrayXd& mu1_sorted, const ArrayXd& mu2_sorted);

/// Left-endpoint Riemann sum of the mean squared control norm, halved.
double occupation_cost(const EnsemblePath& run, double dt);

/// Worker count for particle loops (env SLOWFAST_WORKERS; results are
/// bitwise independent of it).
int worker_count();

}  // namespace slowfast
