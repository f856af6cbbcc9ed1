#include "slowfast/assumptions.hpp"

#include "slowfast/equilibrium.hpp"

#include <cmath>

namespace slowfast {

ArrayXXd halton(int count, int dim) {
  static const int bases[] = {2, 3, 5, 7, 11, 13};
  if (dim > 6) fault(FaultKind::usage, "halton supports up to 6 dimensions");
  ArrayXXd out(count, dim);
  for (int d = 0; d < dim; ++d) {
    const int base = bases[d];
    for (int i = 0; i < count; ++i) {
      double f = 1.0, r = 0.0;
      int k = i + 1;
      while (k > 0) {
        f /= base;
        r += f * (k % base);
        k /= base;
      }
      out(i, d) = r;
    }
  }
  return out;
}

namespace {

std::vector<MeasureHandle> probe_measures(const ValidationBudget& b) {
  std::vector<MeasureHandle> out;
  const ArrayXXd u = halton(b.measure_probes * b.atoms_per_measure, 2);
  for (int m = 0; m < b.measure_probes; ++m) {
    ArrayXd atoms(b.atoms_per_measure);
    // Spread the probe measures over centers and widths inside the box.
    const double center = -0.5 * b.box_half_width +
                          b.box_half_width * (m + 0.5) / b.measure_probes;
    const double width = 0.25 + 1.5 * (m % 3);
    for (int i = 0; i < b.atoms_per_measure; ++i) {
      const int row = m * b.atoms_per_measure + i;
      atoms(i) = center + width * (2.0 * u(row, 0) - 1.0);
    }
    out.push_back(MeasureHandle::empirical(std::move(atoms)));
  }
  return out;
}

std::string describe(const MeasureHandle& mu) {
  return "empirical(" + std::to_string(mu.atoms().size()) +
         " atoms, mean=" + std::to_string(mu.mean()) + ")";
}

}  // namespace

AssumptionReport validate_assumptions(const ModelSpec& model,
                                      const ValidationBudget& budget) {
  if (budget.probes <= 0 || budget.measure_probes <= 0)
    fault(FaultKind::usage, "validation budget must be positive");
  if (!std::isfinite(budget.box_half_width) || budget.box_half_width <= 0.0)
    fault(FaultKind::usage, "validation box bounds must be finite");

  AssumptionReport report;
  const auto measures = probe_measures(budget);
  const ArrayXXd pts = halton(budget.probes, 3);
  const double L = budget.box_half_width;

  // A degenerate fast block claims neither ellipticity nor dissipativity:
  // those checks concern the frozen fast process, which is absent.
  const bool fast_live = !model.degenerate_fast;

  // A1: ellipticity window.
  if (fast_live) {
    AssumptionCheck c;
    c.id = "A1";
    c.detail = "tau1^2 + tau2^2 within [lambda_min, lambda_max]";
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < budget.probes; ++i) {
      const double x = L * (2.0 * pts(i, 0) - 1.0);
      const double y = L * (2.0 * pts(i, 1) - 1.0);
      const auto& mu = measures[i % measures.size()];
      const double t1 = model.tau1(x, y, mu);
      const double t2 = model.tau2(x, y, mu);
      const double s = t1 * t1 + t2 * t2;
      const double margin =
          std::min(s - budget.lambda_min, budget.lambda_max - s);
      if (margin < worst) {
        worst = margin;
        c.witness_x = x;
        c.witness_y1 = y;
        c.witness_measure = describe(mu);
      }
    }
    c.margin = worst;
    c.pass = worst >= 0.0;
    report.checks.push_back(c);
  } else {
    report.checks.push_back(
        {"A1", "not applicable: frozen fast block", true, 0.0, 0, 0, 0, ""});
  }

  // A2: dissipativity of the fast block. beta defaults to an estimate from
  // the sampled Lipschitz constant of eta in y.
  if (fast_live) {
    AssumptionCheck c;
    c.id = "A2";
    c.detail =
        "2(f(y1)-f(y2))(y1-y2) + 3|dtau1|^2 + 3|dtau2|^2 <= -beta |y1-y2|^2";
    double lip = 0.0;
    for (int i = 0; i < budget.probes; ++i) {
      const double x = L * (2.0 * pts(i, 0) - 1.0);
      const double y1 = L * (2.0 * pts(i, 1) - 1.0);
      const double y2 = L * (2.0 * pts(i, 2) - 1.0);
      if (std::fabs(y1 - y2) < 1e-9) continue;
      const auto& mu = measures[i % measures.size()];
      lip = std::max(lip, std::fabs(model.eta(x, y1, mu) - model.eta(x, y2, mu)) /
                              std::fabs(y1 - y2));
    }
    report.estimated_lip_eta = lip;
    const double beta = budget.beta > 0.0
                            ? budget.beta
                            : 0.9 * (2.0 * model.kappa - 2.0 * lip);
    report.beta_used = beta;
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < budget.probes; ++i) {
      const double x = L * (2.0 * pts(i, 0) - 1.0);
      const double y1 = L * (2.0 * pts(i, 1) - 1.0);
      const double y2 = L * (2.0 * pts(i, 2) - 1.0);
      const double dy = y1 - y2;
      if (std::fabs(dy) < 1e-9) continue;
      const auto& mu = measures[i % measures.size()];
      const double df = model.f(x, y1, mu) - model.f(x, y2, mu);
      const double dt1 = model.tau1(x, y1, mu) - model.tau1(x, y2, mu);
      const double dt2 = model.tau2(x, y1, mu) - model.tau2(x, y2, mu);
      const double lhs = 2.0 * df * dy + 3.0 * dt1 * dt1 + 3.0 * dt2 * dt2;
      const double margin = (-beta * dy * dy - lhs) / (dy * dy);
      if (margin < worst) {
        worst = margin;
        c.witness_x = x;
        c.witness_y1 = y1;
        c.witness_y2 = y2;
        c.witness_measure = describe(mu);
      }
    }
    c.margin = worst;
    c.pass = worst >= 0.0 && beta > 0.0;
    report.checks.push_back(c);
  } else {
    report.checks.push_back(
        {"A2", "not applicable: frozen fast block", true, 0.0, 0, 0, 0, ""});
  }

  // A5: boundedness of g, sigma and linear growth of b, c.
  {
    AssumptionCheck c;
    c.id = "A5";
    c.detail = "|g|,|sigma| bounded; |b|,|c| at most linear in y";
    double sup = 0.0;
    for (int i = 0; i < budget.probes; ++i) {
      const double x = L * (2.0 * pts(i, 0) - 1.0);
      const double y = L * (2.0 * pts(i, 1) - 1.0);
      const auto& mu = measures[i % measures.size()];
      const double lin = 1.0 + std::fabs(y);
      const double v = std::max(
          std::max(std::fabs(model.g(x, y, mu)), std::fabs(model.sigma(x, y, mu))),
          std::max(std::fabs(model.b(x, y, mu)) / lin,
                   std::fabs(model.c(x, y, mu)) / lin));
      if (v > sup) {
        sup = v;
        c.witness_x = x;
        c.witness_y1 = y;
        c.witness_measure = describe(mu);
      }
    }
    c.margin = budget.growth_cap - sup;
    c.pass = c.margin >= 0.0;
    report.checks.push_back(c);
  }

  // A3: centering of b against the frozen equilibrium.
  {
    AssumptionCheck c;
    c.id = "A3";
    c.detail = "|int b dpi| <= tol";
    double worst = 0.0;
    bool ok = true;
    for (int i = 0; i < budget.centering_probes; ++i) {
      const double x =
          -L + 2.0 * L * (i + 0.5) / std::max(1, budget.centering_probes);
      const auto& mu = measures[i % measures.size()];
      double defect = 0.0;
      if (model.degenerate_fast) {
        defect = std::fabs(model.b(x, model.init_y, mu));
      } else {
        try {
          const auto eq = invariant_density(model, x, mu);
          defect = std::fabs(equilibrium_average(
              [&](double y) { return model.b(x, y, mu); }, eq));
        } catch (const Fault& f) {
          ok = false;
          c.witness_measure = f.what();
          defect = std::numeric_limits<double>::infinity();
        }
      }
      if (defect > worst) {
        worst = defect;
        c.witness_x = x;
        if (ok) c.witness_measure = describe(mu);
      }
    }
    c.margin = budget.centering_tol - worst;
    c.pass = ok && c.margin >= 0.0;
    report.checks.push_back(c);
  }

  return report;
}

}  // namespace slowfast
