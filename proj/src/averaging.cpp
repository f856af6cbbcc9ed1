#include "slowfast/averaging.hpp"

#include "slowfast/quadrature.hpp"

#include <cmath>
#include <mutex>
#include <unordered_map>

namespace slowfast {

namespace {

struct Key {
  long long xq;
  std::uint64_t mu;
  bool operator==(const Key& o) const { return xq == o.xq && mu == o.mu; }
};

struct KeyHash {
  std::size_t operator()(const Key& k) const {
    return std::hash<long long>()(k.xq) ^
           (std::hash<std::uint64_t>()(k.mu) << 1);
  }
};

bool slow_parts_y_independent(const ModelSpec& m) {
  return !m.c.depends_y && !m.g.depends_y && !m.sigma.depends_y &&
         !m.tau1.depends_y && !m.tau2.depends_y;
}

}  // namespace

struct AveragedModel::State {
  std::mutex mu;
  std::unordered_map<Key, std::shared_ptr<const Solved>, KeyHash> solves;
};

AveragedModel::AveragedModel(const ModelSpec& model, EquilibriumOptions eq_opts)
    : model_(std::make_shared<ModelSpec>(model)),
      eq_opts_(eq_opts),
      state_(std::make_shared<State>()) {}

std::shared_ptr<const AveragedModel::Solved> AveragedModel::solve(
    double x, const MeasureHandle& mu) const {
  const ModelSpec& m = *model_;
  Key key{0, 0};
  if (m.cell_depends_x()) key.xq = std::llround(x * 1e4);
  if (m.cell_depends_mu()) key.mu = mu.fingerprint();
  {
    std::lock_guard<std::mutex> lock(state_->mu);
    auto it = state_->solves.find(key);
    if (it != state_->solves.end()) return it->second;
  }

  auto s = std::make_shared<Solved>();
  s->eq = invariant_density(m, x, mu, eq_opts_);
  s->cell = solve_cell_problem(m, x, mu, s->eq);
  if (m.degenerate_fast) {
    s->phi_x = ArrayXd::Zero(s->cell.y.size());
    s->phi_xy = s->phi_x;
  } else {
    if (m.cell_depends_x()) {
      // Central differences in the frozen slow state; re-solve on the same
      // grid so node-wise differences are meaningful.
      const double dx = 1e-4 * (1.0 + std::fabs(x));
      EquilibriumOptions o = eq_opts_;
      o.grid = s->eq.grid;
      const auto eq_p = invariant_density(m, x + dx, mu, o);
      const auto eq_m = invariant_density(m, x - dx, mu, o);
      const auto cell_p = solve_cell_problem(m, x + dx, mu, eq_p);
      const auto cell_m = solve_cell_problem(m, x - dx, mu, eq_m);
      s->phi_x = (cell_p.u - cell_m.u) / (2.0 * dx);
      s->phi_xy = (cell_p.u_y - cell_m.u_y) / (2.0 * dx);
      s->has_x_derivatives = true;
    } else {
      s->phi_x = ArrayXd::Zero(s->cell.y.size());
      s->phi_xy = s->phi_x;
    }
    s->alpha_tilde_loc = equilibrium_average_nodes(s->cell.u_y, s->eq);
    s->alpha_loc = equilibrium_average_nodes(s->cell.u_y * s->cell.u_y, s->eq);
    ArrayXd b_vals(s->eq.y.size());
    for (Eigen::Index i = 0; i < s->eq.y.size(); ++i)
      b_vals(i) = m.b(x, s->eq.y(i), mu);
    s->int_b_phi = equilibrium_average_nodes(b_vals * s->cell.u, s->eq);
  }

  std::lock_guard<std::mutex> lock(state_->mu);
  if (state_->solves.size() > 4096) state_->solves.clear();
  state_->solves.emplace(key, s);
  return s;
}

LocalCoefficients AveragedModel::local_coefficients(
    double x, double y, const MeasureHandle& mu) const {
  const ModelSpec& m = *model_;
  LocalCoefficients lc;
  if (m.degenerate_fast) {
    lc.gamma1 = 0.0;
    lc.D1 = 0.0;
    lc.gamma = m.c(x, y, mu);
    const double sig = m.sigma(x, y, mu);
    lc.D = 0.5 * sig * sig;
    return lc;
  }
  const auto s = solve(x, mu);
  if (y < s->cell.y(0) || y > s->cell.y(s->cell.y.size() - 1))
    fault(FaultKind::numerical, "extrapolation fault: y outside cell grid");
  const double phi = s->cell.value_at(y);
  const double phi_y = s->cell.deriv_at(y);
  const double phi_x = interp_linear(s->cell.y, s->phi_x, y);
  const double phi_xy = interp_linear(s->cell.y, s->phi_xy, y);
  const double sig = m.sigma(x, y, mu);
  lc.gamma1 = m.b(x, y, mu) * phi_x + m.g(x, y, mu) * phi_y +
              sig * m.tau1(x, y, mu) * phi_xy;
  lc.D1 = m.b(x, y, mu) * phi + sig * m.tau1(x, y, mu) * phi_y;
  lc.gamma = lc.gamma1 + m.c(x, y, mu);
  lc.D = lc.D1 + 0.5 * sig * sig;
  return lc;
}

double AveragedModel::gamma_bar_generic(double x, const MeasureHandle& mu,
                                        const Solved& s) const {
  const ModelSpec& m = *model_;
  ArrayXd vals(s.eq.y.size());
  for (Eigen::Index i = 0; i < s.eq.y.size(); ++i) {
    const double y = s.eq.y(i);
    vals(i) = m.b(x, y, mu) * s.phi_x(i) + m.g(x, y, mu) * s.cell.u_y(i) +
              m.sigma(x, y, mu) * m.tau1(x, y, mu) * s.phi_xy(i) +
              m.c(x, y, mu);
  }
  return equilibrium_average_nodes(vals, s.eq);
}

double AveragedModel::d_bar_generic(double x, const MeasureHandle& mu,
                                    const Solved& s) const {
  const ModelSpec& m = *model_;
  ArrayXd vals(s.eq.y.size());
  for (Eigen::Index i = 0; i < s.eq.y.size(); ++i) {
    const double y = s.eq.y(i);
    const double sig = m.sigma(x, y, mu);
    vals(i) = m.b(x, y, mu) * s.cell.u(i) +
              sig * m.tau1(x, y, mu) * s.cell.u_y(i) + 0.5 * sig * sig;
  }
  return equilibrium_average_nodes(vals, s.eq);
}

double AveragedModel::d_bar_alt_generic(double x, const MeasureHandle& mu,
                                        const Solved& s) const {
  const ModelSpec& m = *model_;
  ArrayXd vals(s.eq.y.size());
  for (Eigen::Index i = 0; i < s.eq.y.size(); ++i) {
    const double y = s.eq.y(i);
    const double t2p = m.tau2(x, y, mu) * s.cell.u_y(i);
    const double sp = m.sigma(x, y, mu) + m.tau1(x, y, mu) * s.cell.u_y(i);
    vals(i) = 0.5 * (t2p * t2p + sp * sp);
  }
  return equilibrium_average_nodes(vals, s.eq);
}

double AveragedModel::gamma_bar(double x, const MeasureHandle& mu) const {
  const ModelSpec& m = *model_;
  if (m.degenerate_fast) return m.c(x, m.init_y, mu);
  const auto s = solve(x, mu);
  if (slow_parts_y_independent(m) && !s->has_x_derivatives) {
    // int (g Phi' + c) dpi with y-independent g and c.
    return m.g(x, 0.0, mu) * s->alpha_tilde_loc + m.c(x, 0.0, mu);
  }
  return gamma_bar_generic(x, mu, *s);
}

double AveragedModel::D_bar(double x, const MeasureHandle& mu) const {
  const ModelSpec& m = *model_;
  if (m.degenerate_fast) {
    const double sig = m.sigma(x, m.init_y, mu);
    return 0.5 * sig * sig;
  }
  const auto s = solve(x, mu);
  if (slow_parts_y_independent(m)) {
    const double sig = m.sigma(x, 0.0, mu);
    return s->int_b_phi + sig * m.tau1(x, 0.0, mu) * s->alpha_tilde_loc +
           0.5 * sig * sig;
  }
  return d_bar_generic(x, mu, *s);
}

double AveragedModel::D_bar_alt(double x, const MeasureHandle& mu) const {
  const ModelSpec& m = *model_;
  if (m.degenerate_fast) {
    const double sig = m.sigma(x, m.init_y, mu);
    return 0.5 * sig * sig;
  }
  const auto s = solve(x, mu);
  if (slow_parts_y_independent(m)) {
    const double sig = m.sigma(x, 0.0, mu);
    const double t1 = m.tau1(x, 0.0, mu);
    const double t2 = m.tau2(x, 0.0, mu);
    return 0.5 * (sig * sig + 2.0 * sig * t1 * s->alpha_tilde_loc +
                  (t1 * t1 + t2 * t2) * s->alpha_loc);
  }
  return d_bar_alt_generic(x, mu, *s);
}

std::pair<double, double> AveragedModel::lfd_averaged(
    double x, const MeasureHandle& mu, double z) const {
  const ModelSpec& m = *model_;
  std::optional<double> dgamma, dD;
  if (m.lfd_gamma_bar) dgamma = (*m.lfd_gamma_bar)(x, mu, z);
  if (m.lfd_D_bar) dD = (*m.lfd_D_bar)(x, mu, z);

  if ((!dgamma || !dD) && !m.cell_depends_mu() && !m.sigma.depends_mu &&
      !m.tau1.depends_mu && !m.tau2.depends_mu) {
    // The cell block ignores the measure, so only the raw slow coefficients
    // contribute; absent callbacks mean a measure-free coefficient.
    if (!dD) dD = 0.0;
    if (!dgamma) {
      if (m.degenerate_fast) {
        if (m.lfd_c)
          dgamma = (*m.lfd_c)(x, m.init_y, mu, z);
        else if (!m.c.depends_mu)
          dgamma = 0.0;
      } else if (m.lfd_c || m.lfd_g) {
        const auto s = solve(x, mu);
        ArrayXd vals = ArrayXd::Zero(s->eq.y.size());
        for (Eigen::Index i = 0; i < s->eq.y.size(); ++i) {
          const double y = s->eq.y(i);
          double v = 0.0;
          if (m.lfd_c) v += (*m.lfd_c)(x, y, mu, z);
          if (m.lfd_g) v += (*m.lfd_g)(x, y, mu, z) * s->cell.u_y(i);
          vals(i) = v;
        }
        dgamma = equilibrium_average_nodes(vals, s->eq);
      } else if (!m.c.depends_mu && !m.g.depends_mu) {
        dgamma = 0.0;
      }
    }
  }
  if (dgamma && dD) return {*dgamma, *dD};

  if (mu.kind() != MeasureHandle::Kind::empirical)
    fault(FaultKind::usage,
          "unsupported: numeric functional derivative needs an empirical "
          "measure or analytic callbacks");

  // Atom-insertion differences at two insertion weights, Richardson
  // extrapolated; the estimator is centered against mu by construction.
  auto estimate = [&](auto&& eval) {
    const double n1 = static_cast<double>(mu.atoms().size());
    const MeasureHandle mu2 = mu.duplicated();
    const double e1 = (n1 + 1.0) * (eval(mu.with_atom_inserted(z)) - eval(mu));
    const double e2 =
        (2.0 * n1 + 1.0) * (eval(mu2.with_atom_inserted(z)) - eval(mu2));
    const double eps1 = 1.0 / (n1 + 1.0), eps2 = 1.0 / (2.0 * n1 + 1.0);
    return (eps1 * e2 - eps2 * e1) / (eps1 - eps2);
  };
  if (!dgamma)
    dgamma = estimate(
        [&](const MeasureHandle& nu) { return gamma_bar(x, nu); });
  if (!dD)
    dD = estimate([&](const MeasureHandle& nu) { return D_bar(x, nu); });
  return {*dgamma, *dD};
}

std::optional<double> AveragedModel::alpha_tilde() const {
  const ModelSpec& m = *model_;
  if (m.degenerate_fast || m.cell_depends_x() || m.cell_depends_mu())
    return std::nullopt;
  return solve(0.0, MeasureHandle::dirac(0.0))->alpha_tilde_loc;
}

std::optional<double> AveragedModel::alpha() const {
  const ModelSpec& m = *model_;
  if (m.degenerate_fast || m.cell_depends_x() || m.cell_depends_mu())
    return std::nullopt;
  return solve(0.0, MeasureHandle::dirac(0.0))->alpha_loc;
}

AveragedCoefficients AveragedModel::snapshot(double x,
                                             const MeasureHandle& mu) const {
  AveragedCoefficients row;
  row.x = x;
  row.gamma_bar = gamma_bar(x, mu);
  row.D_bar = D_bar(x, mu);
  row.D_bar_alt = D_bar_alt(x, mu);
  row.alpha_tilde = alpha_tilde().value_or(0.0);
  row.alpha = alpha().value_or(0.0);
  row.provenance = model_->name + (model_->degenerate_fast
                                       ? std::string(":degenerate")
                                       : std::string(":cell"));
  return row;
}

}  // namespace slowfast
