#include "slowfast/fluctuation.hpp"

#include "slowfast/quadrature.hpp"

#include <cmath>

namespace slowfast {

namespace {

/// Hermite function values h_0..h_{top}(x) by the stable recurrence.
void hermite_values(double x, int top, std::vector<double>& out) {
  out.resize(top + 1);
  const double h0 = std::exp(-0.5 * x * x) / std::pow(M_PI, 0.25);
  out[0] = h0;
  if (top >= 1) out[1] = std::sqrt(2.0) * x * h0;
  for (int j = 1; j < top; ++j)
    out[j + 1] = std::sqrt(2.0 / (j + 1.0)) * x * out[j] -
                 std::sqrt(j / (j + 1.0)) * out[j - 1];
}

/// d^order h_j via the ladder h_j' = sqrt(j/2) h_{j-1} - sqrt((j+1)/2) h_{j+1},
/// expressed as a coefficient vector over basis indices 0..j+order.
double hermite_derivative(int j, int order, double x) {
  std::vector<double> coef(j + order + 2, 0.0);
  coef[j] = 1.0;
  for (int k = 0; k < order; ++k) {
    std::vector<double> next(coef.size(), 0.0);
    for (int idx = 0; idx < static_cast<int>(coef.size()) - 1; ++idx) {
      if (coef[idx] == 0.0) continue;
      if (idx > 0) next[idx - 1] += coef[idx] * std::sqrt(idx / 2.0);
      next[idx + 1] -= coef[idx] * std::sqrt((idx + 1) / 2.0);
    }
    coef.swap(next);
  }
  std::vector<double> vals;
  hermite_values(x, static_cast<int>(coef.size()) - 1, vals);
  double acc = 0.0;
  for (std::size_t i = 0; i < coef.size(); ++i)
    if (coef[i] != 0.0) acc += coef[i] * vals[i];
  return acc;
}

}  // namespace

TestDictionary TestDictionary::hermite(int count) {
  if (count < 1) fault(FaultKind::usage, "dictionary needs at least 1 member");
  std::vector<Member> members;
  members.reserve(count);
  for (int j = 0; j < count; ++j) {
    Member m;
    m.label = "hermite_" + std::to_string(j);
    m.eval = [j](int order, double x) {
      if (order < 0 || order > 6)
        fault(FaultKind::usage, "dictionary derivatives go up to order 6");
      if (order == 0) {
        std::vector<double> vals;
        hermite_values(x, j, vals);
        return vals[j];
      }
      return hermite_derivative(j, order, x);
    };
    members.push_back(std::move(m));
  }
  TestDictionary dict;
  dict.members_ = std::move(members);
  dict.verify_derivatives();
  return dict;
}

TestDictionary TestDictionary::from_members(std::vector<Member> members) {
  if (members.empty())
    fault(FaultKind::usage, "dictionary needs at least 1 member");
  TestDictionary dict;
  dict.members_ = std::move(members);
  return dict;
}

MatrixXd TestDictionary::eval_all(const ArrayXd& points, int order) const {
  MatrixXd out(points.size(), size());
  for (int j = 0; j < size(); ++j)
    for (Eigen::Index p = 0; p < points.size(); ++p)
      out(p, j) = members_[j].eval(order, points(p));
  return out;
}

void TestDictionary::verify_derivatives(double tol) const {
  const double dx = 1e-5;
  for (int j = 0; j < size(); ++j) {
    double worst = 0.0;
    for (double x : {-2.3, -0.7, 0.0, 0.4, 1.9}) {
      const double fd =
          (members_[j].eval(0, x + dx) - members_[j].eval(0, x - dx)) /
          (2.0 * dx);
      const double an = members_[j].eval(1, x);
      worst = std::max(worst, std::fabs(fd - an) / (1.0 + std::fabs(an)));
    }
    if (worst > tol)
      fault(FaultKind::numerical,
            "dictionary member " + members_[j].label +
                " fails the derivative cross-check");
  }
}

FluctuationField fluctuation_pairings(const EnsemblePath& emp,
                                      const EnsemblePath& limit, double a_n,
                                      const TestDictionary& dict) {
  const bool same_object = &emp == &limit;
  if (emp.times.size() != limit.times.size() ||
      ((emp.times - limit.times).abs() > 1e-12).any())
    fault(FaultKind::usage, "fluctuation pairing needs matching time grids");
  if (!same_object && limit.n_particles < 10 * emp.n_particles)
    fault(FaultKind::usage,
          "limit ensemble too small to stand in for the limiting law "
          "(need M >= 10 N)");

  FluctuationField field;
  field.times = emp.times;
  field.a_n = a_n;
  field.provenance = "emp(N=" + std::to_string(emp.n_particles) + ") vs limit(M=" +
                     std::to_string(limit.n_particles) + ")";
  const int steps = static_cast<int>(emp.times.size());
  field.z.resize(dict.size(), steps);
  const double scale = a_n * std::sqrt(static_cast<double>(emp.n_particles));
  for (int k = 0; k < steps; ++k) {
    for (int j = 0; j < dict.size(); ++j) {
      double m_emp = 0.0;
      for (int i = 0; i < emp.n_particles; ++i)
        m_emp += dict.value(j, emp.X(i, k));
      m_emp /= emp.n_particles;
      double m_lim = 0.0;
      if (same_object) {
        m_lim = m_emp;
      } else {
        for (int i = 0; i < limit.n_particles; ++i)
          m_lim += dict.value(j, limit.X(i, k));
        m_lim /= limit.n_particles;
      }
      field.z(j, k) = scale * (m_emp - m_lim);
      if (!std::isfinite(field.z(j, k)))
        fault(FaultKind::numerical, "non-finite pairing entry");
    }
  }
  return field;
}

NormResult sobolev_norm(const SmoothFn& phi, int n, const GridSpec& grid) {
  grid.validate();
  const ArrayXd x = grid.nodes();
  const double dx = grid.dx();
  ArrayXd integrand = ArrayXd::Zero(x.size());
  for (int k = 0; k <= n; ++k) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double w = std::pow(1.0 + x(i) * x(i), 2 * n);
      const double v = phi.eval(k, x(i));
      integrand(i) += w * v * v;
    }
  }
  const double interior_max = integrand.maxCoeff();
  const double edge = std::max(integrand(0), integrand(integrand.size() - 1));
  if (interior_max > 0.0 && edge > 1e-10 * interior_max)
    fault(FaultKind::numerical,
          "norm integrand does not decay within the grid (divergence)");
  NormResult res;
  res.tail_estimate = edge * grid.half_width;
  res.value = std::sqrt(trapezoid(integrand, dx));
  return res;
}

NormResult sup_seminorm(const SmoothFn& phi, int n, const GridSpec& grid) {
  grid.validate();
  const ArrayXd x = grid.nodes();
  NormResult res;
  for (int k = 0; k <= n; ++k) {
    double sup = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      sup = std::max(sup, std::fabs(phi.eval(k, x(i))));
    res.value += sup;
  }
  return res;
}

}  // namespace slowfast
