#include "slowfast/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace slowfast {

int worker_count() {
  if (const char* env = std::getenv("SLOWFAST_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::min(4u, hw == 0 ? 1u : hw));
}

namespace {

/// Chunked parallel loop. Each index is touched by exactly one worker and
/// workers only write their own particles, so the result does not depend on
/// the worker count.
void parallel_for(int n, const std::function<void(int, int)>& body) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(body, lo, hi);
  }
  for (auto& t : pool) t.join();
}

struct MacroGrid {
  double h_micro = 0.0;
  int n_per_macro = 1;
  double h_macro = 0.0;
  int n_macro = 1;
};

MacroGrid resolve_grid(double eps, double t_final, const StepPolicy& policy) {
  if (!(eps > 0.0) || eps > 1.0)
    fault(FaultKind::usage, "eps must lie in (0, 1]");
  if (policy.micro_substeps < 1 || !(policy.delta_report > 0.0))
    fault(FaultKind::usage, "invalid step policy");
  MacroGrid g;
  g.h_micro = eps * eps / policy.micro_substeps;
  g.n_per_macro =
      std::max(1, static_cast<int>(std::llround(policy.delta_report / g.h_micro)));
  g.h_macro = g.n_per_macro * g.h_micro;
  g.n_macro = std::max(1, static_cast<int>(std::llround(t_final / g.h_macro)));
  return g;
}

[[noreturn]] void blowup_fault(const char* what, int particle, long step) {
  fault(FaultKind::numerical,
        std::string("stiffness fault: ") + what + " exceeded threshold at "
            "particle " + std::to_string(particle) + ", micro step " +
            std::to_string(step));
}

/// Shared two-scale stepper. n_total particles evolve; the interaction
/// measure is the empirical measure of those particles (multiscale) and the
/// recorded block is the first n_record of them (IID runs track fewer
/// particles than they evolve).
EnsemblePath run_two_scale(const ModelSpec& model, int n_total, int n_record,
                           double eps, double t_final, const StepPolicy& policy,
                           std::uint64_t seed, const MultiscaleOptions& opts) {
  if (n_total < 2) fault(FaultKind::usage, "need at least 2 particles");
  if (!(opts.a_n > 0.0)) fault(FaultKind::usage, "a_N must be positive");
  if (!opts.stream_ids.empty() &&
      static_cast<int>(opts.stream_ids.size()) != n_total)
    fault(FaultKind::usage, "stream id relabeling must cover all particles");

  const MacroGrid g = resolve_grid(eps, t_final, policy);
  // A declared-zero control steps exactly like no control but still records
  // (zero) samples, so its occupation cost is well defined.
  const bool has_control = opts.control != nullptr;
  const bool controlled = has_control && !opts.control->is_zero;
  const double control_scale =
      1.0 / (opts.a_n * std::sqrt(static_cast<double>(n_total)));

  EnsemblePath path;
  path.seed = seed;
  path.eps = eps;
  path.n_particles = n_record;
  path.m_aux = n_total;
  path.a_n = opts.a_n;
  path.has_fast = true;
  path.has_controls = has_control;
  path.times = ArrayXd::LinSpaced(g.n_macro + 1, 0.0, g.n_macro * g.h_macro);
  path.X.resize(n_record, g.n_macro + 1);
  path.Y.resize(n_record, g.n_macro + 1);
  if (has_control) {
    path.U1.resize(n_record, g.n_macro + 1);
    path.U2.resize(n_record, g.n_macro + 1);
  }

  ArrayXd x = ArrayXd::Constant(n_total, model.init_x);
  ArrayXd y = ArrayXd::Constant(n_total, model.init_y);
  ArrayXd xn(n_total), yn(n_total);

  auto stream_of = [&opts](int i) {
    return opts.stream_ids.empty() ? static_cast<std::uint32_t>(i)
                                   : opts.stream_ids[i];
  };

  auto record = [&](int k, const MeasureHandle&) {
    path.X.col(k) = x.head(n_record);
    path.Y.col(k) = y.head(n_record);
    if (has_control) {
      const double t = path.times(k);
      for (int i = 0; i < n_record; ++i) {
        double h1 = 0.0, h2 = 0.0;
        opts.control->h(t, x(i), y(i), h1, h2);
        path.U1(i, k) = h1;
        path.U2(i, k) = h2;
      }
    }
  };

  const double h = g.h_micro;
  const double sqrt_h = std::sqrt(h);
  const double inv_eps = 1.0 / eps;

  MeasureHandle measure = MeasureHandle::empirical(x);
  record(0, measure);

  for (int k = 0; k < g.n_macro; ++k) {
    const double t_macro = path.times(k);
    for (int m = 0; m < g.n_per_macro; ++m) {
      const long step = static_cast<long>(k) * g.n_per_macro + m;
      const double t = t_macro + m * h;
      parallel_for(n_total, [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
          const std::uint32_t sid = stream_of(i);
          const double xi_w = normal_draw(seed, sid, NoiseTag::W, step);
          const double xi_b = normal_draw(seed, sid, NoiseTag::B, step);
          const double xv = x(i), yv = y(i);
          const double bv = model.b(xv, yv, measure);
          const double cv = model.c(xv, yv, measure);
          const double sv = model.sigma(xv, yv, measure);
          const double fv = model.f(xv, yv, measure);
          const double gv = model.g(xv, yv, measure);
          const double t1 = model.tau1(xv, yv, measure);
          const double t2 = model.tau2(xv, yv, measure);
          double u1 = 0.0, u2 = 0.0;
          if (controlled) opts.control->h(t, xv, yv, u1, u2);

          double drift_x = inv_eps * bv + cv;
          double drift_y = inv_eps * (inv_eps * fv + gv);
          if (controlled) {
            drift_x += sv * u1 * control_scale;
            drift_y += inv_eps * (t1 * u1 + t2 * u2) * control_scale;
          }
          const double x_new = xv + h * drift_x + sv * sqrt_h * xi_w;
          const double y_new =
              yv + h * drift_y + inv_eps * sqrt_h * (t1 * xi_w + t2 * xi_b);
          if (!(std::fabs(y_new) <= 1e6) || !std::isfinite(y_new))
            blowup_fault("|Y|", i, step);
          if (!(std::fabs(x_new) <= 1e6) || !std::isfinite(x_new))
            blowup_fault("|X|", i, step);
          xn(i) = x_new;
          yn(i) = y_new;
        }
      });
      x.swap(xn);
      y.swap(yn);
    }
    measure = MeasureHandle::empirical(x);
    record(k + 1, measure);
  }
  return path;
}

}  // namespace

EnsemblePath simulate_multiscale(const ModelSpec& model, int n_particles,
                                 double eps, double t_final,
                                 const StepPolicy& policy, std::uint64_t seed,
                                 const MultiscaleOptions& opts) {
  EnsemblePath p =
      run_two_scale(model, n_particles, n_particles, eps, t_final, policy,
                    seed, opts);
  p.m_aux = 0;
  return p;
}

EnsemblePath simulate_iid_mv(const ModelSpec& model, int n_particles,
                             int m_aux, double eps, double t_final,
                             const StepPolicy& policy, std::uint64_t seed) {
  if (m_aux < n_particles)
    fault(FaultKind::usage, "auxiliary ensemble must be at least N");
  MultiscaleOptions opts;
  EnsemblePath p = run_two_scale(model, m_aux, n_particles, eps, t_final,
                                 policy, seed, opts);
  p.n_particles = n_particles;
  p.m_aux = m_aux;
  p.aux_degenerate_warning = (m_aux == n_particles);
  return p;
}

EnsemblePath simulate_averaged(const AveragedModel& avg, int n_particles,
                               double t_final, double step, std::uint64_t seed,
                               const std::optional<MicroCoupling>& couple) {
  if (n_particles < 1) fault(FaultKind::usage, "need at least 1 particle");
  if (!(step > 0.0)) fault(FaultKind::usage, "step must be positive");

  // When coupled, macro steps are rebuilt from the paired micro grid so the
  // Brownian increments aggregate the same draws.
  int n_per_macro = 1;
  double h_micro = step;
  if (couple) {
    StepPolicy pol;
    pol.micro_substeps = couple->micro_substeps;
    pol.delta_report = step;
    const MacroGrid g = resolve_grid(couple->eps, t_final, pol);
    n_per_macro = g.n_per_macro;
    h_micro = g.h_micro;
    step = g.h_macro;
  }
  const int n_macro = std::max(1, static_cast<int>(std::llround(t_final / step)));

  EnsemblePath path;
  path.seed = seed;
  path.eps = 0.0;
  path.n_particles = n_particles;
  path.has_fast = false;
  path.times = ArrayXd::LinSpaced(n_macro + 1, 0.0, n_macro * step);
  path.X.resize(n_particles, n_macro + 1);

  const ModelSpec& model = avg.model();
  ArrayXd x = ArrayXd::Constant(n_particles, model.init_x);
  ArrayXd xn(n_particles);
  path.X.col(0) = x;

  for (int k = 0; k < n_macro; ++k) {
    const MeasureHandle measure = MeasureHandle::empirical(x);
    parallel_for(n_particles, [&](int lo, int hi) {
      for (int i = lo; i < hi; ++i) {
        double dw = 0.0;
        if (couple) {
          for (int m = 0; m < n_per_macro; ++m) {
            const long mstep = static_cast<long>(k) * n_per_macro + m;
            dw += std::sqrt(h_micro) *
                  normal_draw(seed, static_cast<std::uint32_t>(i), NoiseTag::W,
                              mstep);
          }
        } else {
          dw = std::sqrt(step) *
               normal_draw(seed, static_cast<std::uint32_t>(i), NoiseTag::W, k);
        }
        const double drift = avg.gamma_bar(x(i), measure);
        const double diff = avg.D_bar(x(i), measure);
        if (diff < 0.0)
          fault(FaultKind::numerical,
                "averaged diffusion negative at x=" + std::to_string(x(i)));
        const double x_new = x(i) + step * drift + std::sqrt(2.0 * diff) * dw;
        if (!(std::fabs(x_new) <= 1e6) || !std::isfinite(x_new))
          blowup_fault("|X|", i, k);
        xn(i) = x_new;
      }
    });
    x.swap(xn);
    path.X.col(k + 1) = x;
  }
  return path;
}

double coupling_error(const EnsemblePath& a, const EnsemblePath& b) {
  if (a.n_particles != b.n_particles || a.times.size() != b.times.size())
    fault(FaultKind::usage, "coupling error needs matching shapes");
  if (((a.times - b.times).abs() > 1e-12).any())
    fault(FaultKind::usage, "coupling error needs matching time grids");
  double worst = 0.0;
  for (int k = 0; k < a.times.size(); ++k) {
    const double gap =
        (a.X.col(k) - b.X.col(k)).array().square().mean();
    worst = std::max(worst, gap);
  }
  return worst;
}

double w2_empirical(const ArrayXd& mu1_sorted, const ArrayXd& mu2_sorted) {
  if (mu1_sorted.size() != mu2_sorted.size())
    fault(FaultKind::usage, "W2 needs equal atom counts");
  ArrayXd a = mu1_sorted, b = mu2_sorted;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return std::sqrt((a - b).square().mean());
}

double occupation_cost(const EnsemblePath& run, double dt) {
  if (!run.has_controls)
    fault(FaultKind::usage, "occupation cost needs control samples");
  double acc = 0.0;
  const int n_steps = run.n_steps();
  for (int k = 0; k < n_steps; ++k)
    acc += (run.U1.col(k).array().square() + run.U2.col(k).array().square())
               .mean();
  return 0.5 * acc * dt;
}

}  // namespace slowfast
