#include "slowfast/mdp_rate.hpp"

#include "slowfast/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <memory>

namespace slowfast {

namespace {

bool slow_parts_y_independent(const ModelSpec& m) {
  return !m.c.depends_y && !m.g.depends_y && !m.sigma.depends_y &&
         !m.tau1.depends_y && !m.tau2.depends_y;
}

bool model_measure_free(const ModelSpec& m) {
  return !m.b.depends_mu && !m.c.depends_mu && !m.sigma.depends_mu &&
         !m.g.depends_mu && !m.eta.depends_mu && !m.tau1.depends_mu &&
         !m.tau2.depends_mu;
}

ArrayXd quantile_points(const ArrayXd& samples, int count) {
  ArrayXd sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  ArrayXd out(count);
  const double scale =
      static_cast<double>(sorted.size() - 1) / std::max(1, count - 1);
  for (int i = 0; i < count; ++i)
    out(i) = sorted(static_cast<Eigen::Index>(std::llround(i * scale)));
  return out;
}

/// pi-quadrature of fn(y) on a decimated equilibrium grid (renormalized so
/// a constant integrates to exactly 1).
double pi_quadrature(const AveragedModel::Solved& s,
                     const std::function<double(double)>& fn, int stride) {
  if (s.eq.degenerate) return fn(s.eq.atom);
  const Eigen::Index n = s.eq.y.size();
  const Eigen::Index st = std::max<Eigen::Index>(1, stride);
  double acc = 0.0, norm = 0.0;
  for (Eigen::Index i = 0; i < n; i += st) {
    const double w = (i == 0 || i + st >= n) ? 0.5 : 1.0;
    acc += w * fn(s.eq.y(i)) * s.eq.density(i);
    norm += w * s.eq.density(i);
  }
  return acc / norm;
}

/// Pseudoinverse solve of a symmetric PSD system with relative eigenvalue
/// threshold. Returns the effective rank through *rank.
VectorXd psd_solve(const MatrixXd& G, const VectorXd& rhs, double rel_tol,
                   int* rank_out = nullptr, double* cond_out = nullptr) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
  const VectorXd& ev = es.eigenvalues();
  const double cutoff = rel_tol * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  VectorXd inv_ev = VectorXd::Zero(ev.size());
  int rank = 0;
  double min_kept = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) {
      inv_ev(i) = 1.0 / ev(i);
      if (rank == 0 || ev(i) < min_kept) min_kept = ev(i);
      ++rank;
    }
  }
  if (rank_out) *rank_out = rank;
  if (cond_out)
    *cond_out = rank > 0 ? ev.cwiseAbs().maxCoeff() / min_kept
                         : std::numeric_limits<double>::infinity();
  return es.eigenvectors() *
         (inv_ev.asDiagonal() * (es.eigenvectors().transpose() * rhs));
}

}  // namespace

GeneratorMatrix assemble_limit_generator(const AveragedModel& avg,
                                         const EnsemblePath& limit,
                                         const TestDictionary& dict,
                                         const GeneratorOptions& opts) {
  const ModelSpec& model = avg.model();
  const int n_slices = static_cast<int>(limit.times.size());
  const int J = dict.size();

  GeneratorMatrix gen;
  gen.times = limit.times;
  gen.M.resize(n_slices);
  gen.residual = MatrixXd::Zero(J, n_slices);
  gen.laws.reserve(n_slices);
  const bool measure_free = model_measure_free(model);
  gen.lfd_mode = measure_free ? "none"
                              : (model.lfd_gamma_bar || model.lfd_c
                                     ? "analytic"
                                     : "numeric");

  double worst_res = 0.0;
  int worst_j = 0;
  for (int k = 0; k < n_slices; ++k) {
    const ArrayXd ens = limit.X.col(k).array();
    const MeasureHandle law = MeasureHandle::empirical(ens);
    gen.laws.push_back(law);

    const ArrayXd xs = quantile_points(ens, opts.collocation_points);
    const MatrixXd P0 = dict.eval_all(xs, 0);
    const MatrixXd P1 = dict.eval_all(xs, 1);
    const MatrixXd P2 = dict.eval_all(xs, 2);

    ArrayXd gb(xs.size()), db(xs.size());
    for (Eigen::Index p = 0; p < xs.size(); ++p) {
      gb(p) = avg.gamma_bar(xs(p), law);
      db(p) = avg.D_bar(xs(p), law);
    }

    MatrixXd rhs =
        (P1.array().colwise() * gb).matrix() +
        (P2.array().colwise() * db).matrix();

    if (!measure_free) {
      const ArrayXd zq = quantile_points(ens, opts.nonlocal_quad_points);
      const MatrixXd Z1 = dict.eval_all(zq, 1);
      const MatrixXd Z2 = dict.eval_all(zq, 2);
      MatrixXd A1(zq.size(), xs.size()), A2(zq.size(), xs.size());
      for (Eigen::Index q = 0; q < zq.size(); ++q)
        for (Eigen::Index p = 0; p < xs.size(); ++p) {
          const auto d = avg.lfd_averaged(zq(q), law, xs(p));
          A1(q, p) = d.first;
          A2(q, p) = d.second;
        }
      const double w = 1.0 / static_cast<double>(zq.size());
      rhs += w * (A1.transpose() * Z1 + A2.transpose() * Z2);
    }

    Eigen::BDCSVD<MatrixXd> svd(P0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(opts.svd_tol);
    MatrixXd C = svd.solve(rhs);
    gen.M[k] = C.transpose();

    const MatrixXd fit_err = P0 * C - rhs;
    for (int j = 0; j < J; ++j) {
      const double scale = rhs.col(j).norm();
      const double res =
          scale > 1e-12 ? fit_err.col(j).norm() / scale : fit_err.col(j).norm();
      gen.residual(j, k) = res;
      if (res > worst_res) {
        worst_res = res;
        worst_j = j;
      }
    }
  }
  if (worst_res > opts.galerkin_tol)
    fault(FaultKind::numerical,
          "dictionary too small: generator expansion residual " +
              std::to_string(worst_res) + " at member " +
              dict.label(worst_j));
  return gen;
}

FluctuationField solve_limit_ode(const GeneratorMatrix& gen,
                                 const MatrixXd& forcing, double dt) {
  const int n_slices = gen.slices();
  const int J = static_cast<int>(gen.M[0].rows());
  if (forcing.rows() != J || forcing.cols() != n_slices)
    fault(FaultKind::usage, "forcing shape must match generator slices");
  if (!(dt > 0.0)) fault(FaultKind::usage, "dt must be positive");

  const double delta = gen.dt();
  const int sub = std::max(1, static_cast<int>(std::ceil(delta / dt)));
  const double h = delta / sub;

  auto deriv = [&](int k, double w, const VectorXd& z) -> VectorXd {
    const int k1 = std::min(k + 1, n_slices - 1);
    const MatrixXd m = (1.0 - w) * gen.M[k] + w * gen.M[k1];
    const VectorXd f = (1.0 - w) * forcing.col(k) + w * forcing.col(k1);
    return m * z + f;
  };

  FluctuationField field;
  field.times = gen.times;
  field.z = MatrixXd::Zero(J, n_slices);
  field.provenance = "limit_ode";

  VectorXd z = VectorXd::Zero(J);
  for (int k = 0; k + 1 < n_slices; ++k) {
    for (int s = 0; s < sub; ++s) {
      const double w0 = static_cast<double>(s) / sub;
      const double wh = (s + 0.5) / sub;
      const double w1 = static_cast<double>(s + 1) / sub;
      const VectorXd k1 = deriv(k, w0, z);
      const VectorXd k2 = deriv(k, wh, z + 0.5 * h * k1);
      const VectorXd k3 = deriv(k, wh, z + 0.5 * h * k2);
      const VectorXd k4 = deriv(k, w1, z + h * k3);
      z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!z.allFinite() || z.cwiseAbs().maxCoeff() > 1e8)
        fault(FaultKind::numerical,
              "limit equation step instability; reduce dt");
    }
    field.z.col(k + 1) = z;
  }
  return field;
}

MatrixXd control_forcing(const AveragedModel& avg, const EnsemblePath& limit,
                         const ControlField& control, const TestDictionary& dict,
                         int quad_stride) {
  const ModelSpec& model = avg.model();
  const int n_slices = static_cast<int>(limit.times.size());
  const int J = dict.size();
  MatrixXd forcing = MatrixXd::Zero(J, n_slices);
  if (control.is_zero) return forcing;

  if (control.riesz) {
    // Feedback structure: int (sigma h1 + [tau1 h1 + tau2 h2] Phi_y) dpi
    // collapses to 2 Dbar * hbar / (2 Dbar) = hbar.
    for (int k = 0; k < n_slices; ++k) {
      const double t = limit.times(k);
      const ArrayXd ens = limit.X.col(k).array();
      ArrayXd weight(ens.size());
      for (Eigen::Index m = 0; m < ens.size(); ++m)
        weight(m) = control.riesz->hbar(t, ens(m));
      const MatrixXd P1 = dict.eval_all(ens, 1);
      forcing.col(k) =
          P1.transpose() * weight.matrix() / static_cast<double>(ens.size());
    }
    return forcing;
  }

  const bool fast_path =
      control.y_independent && slow_parts_y_independent(model);

  for (int k = 0; k < n_slices; ++k) {
    const double t = limit.times(k);
    const ArrayXd ens = limit.X.col(k).array();
    const MeasureHandle law = MeasureHandle::empirical(ens);
    ArrayXd weight(ens.size());
    for (Eigen::Index m = 0; m < ens.size(); ++m) {
      const double x = ens(m);
      double val = 0.0;
      if (model.degenerate_fast) {
        double h1 = 0.0, h2 = 0.0;
        control.h(t, x, model.init_y, h1, h2);
        val = model.sigma(x, model.init_y, law) * h1;
      } else if (fast_path) {
        const auto s = avg.solve(x, law);
        double h1 = 0.0, h2 = 0.0;
        control.h(t, x, 0.0, h1, h2);
        val = model.sigma(x, 0.0, law) * h1 +
              (model.tau1(x, 0.0, law) * h1 + model.tau2(x, 0.0, law) * h2) *
                  s->alpha_tilde_loc;
      } else {
        const auto s = avg.solve(x, law);
        val = pi_quadrature(
            *s,
            [&](double y) {
              double h1 = 0.0, h2 = 0.0;
              control.h(t, x, y, h1, h2);
              const double phi_y = s->cell.deriv_at(y);
              return model.sigma(x, y, law) * h1 +
                     (model.tau1(x, y, law) * h1 +
                      model.tau2(x, y, law) * h2) *
                         phi_y;
            },
            quad_stride);
      }
      weight(m) = val;
    }
    const MatrixXd P1 = dict.eval_all(ens, 1);
    forcing.col(k) =
        P1.transpose() * weight.matrix() / static_cast<double>(ens.size());
  }
  return forcing;
}

double variational_cost(const AveragedModel& avg, const EnsemblePath& limit,
                        const ControlField& control, int quad_stride) {
  if (control.is_zero) return 0.0;
  const ModelSpec& model = avg.model();
  const int n_slices = static_cast<int>(limit.times.size());
  ArrayXd per_slice(n_slices);
  if (control.riesz) {
    // |h|^2 integrates against pi to hbar^2 / (2 Dbar), so the cost is
    // (1/4) int E[ Dbar^{-1} hbar^2 ].
    for (int k = 0; k < n_slices; ++k) {
      const double t = limit.times(k);
      const ArrayXd ens = limit.X.col(k).array();
      double acc = 0.0;
      for (Eigen::Index m = 0; m < ens.size(); ++m) {
        const double hb = control.riesz->hbar(t, ens(m));
        acc += hb * hb / (2.0 * control.riesz->d_bar(t, ens(m)));
      }
      per_slice(k) = acc / static_cast<double>(ens.size());
    }
    return 0.5 * trapezoid(per_slice, limit.times(1) - limit.times(0));
  }
  for (int k = 0; k < n_slices; ++k) {
    const double t = limit.times(k);
    const ArrayXd ens = limit.X.col(k).array();
    const MeasureHandle law = MeasureHandle::empirical(ens);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < ens.size(); ++m) {
      const double x = ens(m);
      if (model.degenerate_fast || control.y_independent) {
        double h1 = 0.0, h2 = 0.0;
        control.h(t, x, model.degenerate_fast ? model.init_y : 0.0, h1, h2);
        acc += h1 * h1 + h2 * h2;
      } else {
        const auto s = avg.solve(x, law);
        acc += pi_quadrature(
            *s,
            [&](double y) {
              double h1 = 0.0, h2 = 0.0;
              control.h(t, x, y, h1, h2);
              return h1 * h1 + h2 * h2;
            },
            quad_stride);
      }
    }
    per_slice(k) = acc / static_cast<double>(ens.size());
  }
  return 0.5 * trapezoid(per_slice, limit.times(1) - limit.times(0));
}

namespace {

MatrixXd numerator_matrix(const FluctuationField& z, const GeneratorMatrix& gen) {
  const int n_slices = gen.slices();
  const int J = static_cast<int>(z.z.rows());
  const double delta = gen.dt();
  MatrixXd F(J, n_slices);
  for (int k = 0; k < n_slices; ++k) {
    VectorXd zdot(J);
    if (k == 0)
      zdot = (z.z.col(1) - z.z.col(0)) / delta;
    else if (k == n_slices - 1)
      zdot = (z.z.col(k) - z.z.col(k - 1)) / delta;
    else
      zdot = (z.z.col(k + 1) - z.z.col(k - 1)) / (2.0 * delta);
    F.col(k) = zdot - gen.M[k] * z.z.col(k);
  }
  return F;
}

}  // namespace

ControlField optimal_control_from_target(const AveragedModel& avg,
                                         const EnsemblePath& limit,
                                         const FluctuationField& z_target,
                                         const GeneratorMatrix& gen,
                                         const TestDictionary& dict) {
  const int n_slices = gen.slices();
  const int J = dict.size();
  if (z_target.z.rows() != J || z_target.z.cols() != n_slices)
    fault(FaultKind::usage, "target field shape must match the generator");

  const MatrixXd F = numerator_matrix(z_target, gen);
  auto coeffs = std::make_shared<MatrixXd>(J, n_slices);
  auto laws = std::make_shared<std::vector<MeasureHandle>>(gen.laws);

  for (int k = 0; k < n_slices; ++k) {
    const ArrayXd ens = limit.X.col(k).array();
    const MatrixXd P1 = dict.eval_all(ens, 1);
    const MatrixXd G0 =
        P1.transpose() * P1 / static_cast<double>(ens.size());
    int rank = 0;
    double cond = 0.0;
    const VectorXd c = psd_solve(G0, F.col(k), 1e-10, &rank, &cond);
    if (rank == 0)
      fault(FaultKind::numerical,
            "rank fault in the Riesz recovery (condition number " +
                std::to_string(cond) + ")");
    coeffs->col(k) = c;
    for (Eigen::Index m = 0; m < ens.size(); ++m)
      if (avg.D_bar(ens(m), (*laws)[k]) < 1e-8)
        fault(FaultKind::numerical, "degeneracy fault: Dbar below 1e-8");
  }

  // Feedback form, with coefficients interpolated between slices and the
  // law taken from the nearest slice.
  const double t0 = gen.times(0);
  const double delta = gen.dt();
  AveragedModel avg_copy = avg;
  TestDictionary dict_copy = dict;
  ControlField field;
  field.is_zero = false;
  field.y_independent = false;
  field.h = [coeffs, laws, avg_copy, dict_copy, t0, delta, n_slices, J](
                double t, double x, double y, double& h1, double& h2) {
    double s = (t - t0) / delta;
    s = std::max(0.0, std::min(s, static_cast<double>(n_slices - 1)));
    const int k0 = std::min(static_cast<int>(s), n_slices - 2 >= 0 ? n_slices - 2 : 0);
    const double w = std::min(1.0, std::max(0.0, s - k0));
    double hbar = 0.0;
    for (int m = 0; m < J; ++m) {
      const double cm =
          (1.0 - w) * (*coeffs)(m, k0) +
          w * (*coeffs)(m, std::min(k0 + 1, n_slices - 1));
      hbar += cm * dict_copy.derivative(m, 1, x);
    }
    const int k_near = w < 0.5 ? k0 : std::min(k0 + 1, n_slices - 1);
    const MeasureHandle& law = (*laws)[k_near];
    const ModelSpec& model = avg_copy.model();
    const double dbar = avg_copy.D_bar(x, law);
    double phi_y = 0.0;
    if (!model.degenerate_fast) {
      const auto sv = avg_copy.solve(x, law);
      const double y_lo = sv->cell.y(0), y_hi = sv->cell.y(sv->cell.y.size() - 1);
      const double yc = std::min(std::max(y, y_lo), y_hi);
      phi_y = sv->cell.deriv_at(yc);
    }
    const double pref = hbar / (2.0 * dbar);
    h1 = (model.sigma(x, y, law) + model.tau1(x, y, law) * phi_y) * pref;
    h2 = model.tau2(x, y, law) * phi_y * pref;
  };

  auto riesz = std::make_shared<ControlField::RieszFeedback>();
  AveragedModel avg_r = avg;
  TestDictionary dict_r = dict;
  riesz->hbar = [coeffs, dict_r, t0, delta, n_slices, J](double t, double x) {
    double s = (t - t0) / delta;
    s = std::max(0.0, std::min(s, static_cast<double>(n_slices - 1)));
    const int k0 =
        std::min(static_cast<int>(s), n_slices - 2 >= 0 ? n_slices - 2 : 0);
    const double w = std::min(1.0, std::max(0.0, s - k0));
    double hbar = 0.0;
    for (int m = 0; m < J; ++m) {
      const double cm = (1.0 - w) * (*coeffs)(m, k0) +
                        w * (*coeffs)(m, std::min(k0 + 1, n_slices - 1));
      hbar += cm * dict_r.derivative(m, 1, x);
    }
    return hbar;
  };
  riesz->d_bar = [laws, avg_r, t0, delta, n_slices](double t, double x) {
    double s = (t - t0) / delta;
    s = std::max(0.0, std::min(s, static_cast<double>(n_slices - 1)));
    const int k = static_cast<int>(std::llround(s));
    return avg_r.D_bar(x, (*laws)[std::min(k, n_slices - 1)]);
  };
  field.riesz = riesz;
  return field;
}

double dg_rate(const FluctuationField& z, const GeneratorMatrix& gen,
               const AveragedModel& avg, const EnsemblePath& limit,
               const TestDictionary& dict, RateDiagnostics* diag) {
  const int n_slices = gen.slices();
  const int J = dict.size();
  if (z.z.rows() != J || z.z.cols() != n_slices)
    fault(FaultKind::usage, "field shape must match the generator");

  const MatrixXd F = numerator_matrix(z, gen);
  ArrayXd span_vals = ArrayXd::Zero(n_slices);
  ArrayXd member_vals = ArrayXd::Zero(n_slices);
  Eigen::ArrayXi attain = Eigen::ArrayXi::Zero(n_slices);
  int skipped = 0;

  for (int k = 0; k < n_slices; ++k) {
    const ArrayXd ens = limit.X.col(k).array();
    const MeasureHandle& law = gen.laws[k];
    const MatrixXd P1 = dict.eval_all(ens, 1);
    ArrayXd dvals(ens.size());
    for (Eigen::Index m = 0; m < ens.size(); ++m)
      dvals(m) = avg.D_bar(ens(m), law);
    const MatrixXd G =
        P1.transpose() * (dvals.matrix().asDiagonal() * P1) /
        static_cast<double>(ens.size());

    const ArrayXd denom =
        (P1.array().square().colwise() * dvals).colwise().mean();
    double best = 0.0;
    int best_j = -1;
    for (int j = 0; j < J; ++j) {
      if (denom(j) < 1e-10) continue;
      const double v = F(j, k) * F(j, k) / (4.0 * denom(j));
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < 0 && denom.maxCoeff() < 1e-10) {
      ++skipped;
      continue;
    }
    member_vals(k) = best;
    attain(k) = best_j < 0 ? 0 : best_j;
    const VectorXd sol = psd_solve(G, F.col(k), 1e-10);
    span_vals(k) = 0.25 * F.col(k).dot(sol);
  }

  if (diag) {
    diag->slice_times = gen.times;
    diag->slice_value_span = span_vals;
    diag->slice_value_member = member_vals;
    diag->attaining_index = attain;
    diag->skipped_slices = skipped;
  }
  return trapezoid(span_vals, gen.dt());
}

}  // namespace slowfast
