#pragma once

#include "slowfast/types.hpp"

namespace slowfast {

/// Composite trapezoid on a uniform grid.
inline double trapezoid(const ArrayXd& f, double dx) {
  const auto n = f.size();
  if (n < 2) return 0.0;
  return dx * (f.sum() - 0.5 * (f(0) + f(n - 1)));
}

/// Cumulative trapezoid, F(0)=0.
inline ArrayXd cum_trapezoid(const ArrayXd& f, double dx) {
  ArrayXd out(f.size());
  out(0) = 0.0;
  for (Eigen::Index i = 1; i < f.size(); ++i)
    out(i) = out(i - 1) + 0.5 * dx * (f(i - 1) + f(i));
  return out;
}

/// Fourth-order cumulative integral on a uniform grid (local cubic through
/// four points per cell, one-sided cubics in the first and last cell).
/// Plain averages stay on the trapezoid rule; this is for the nested
/// integrals where O(dx^2) bias is visible downstream.
inline ArrayXd cum_quartic(const ArrayXd& f, double dx) {
  const Eigen::Index n = f.size();
  ArrayXd out(n);
  out(0) = 0.0;
  if (n < 4) {
    for (Eigen::Index i = 1; i < n; ++i)
      out(i) = out(i - 1) + 0.5 * dx * (f(i - 1) + f(i));
    return out;
  }
  const double c = dx / 24.0;
  out(1) = out(0) + c * (9.0 * f(0) + 19.0 * f(1) - 5.0 * f(2) + f(3));
  for (Eigen::Index i = 1; i + 2 < n; ++i)
    out(i + 1) =
        out(i) + c * (-f(i - 1) + 13.0 * f(i) + 13.0 * f(i + 1) - f(i + 2));
  out(n - 1) = out(n - 2) + c * (9.0 * f(n - 1) + 19.0 * f(n - 2) -
                                 5.0 * f(n - 3) + f(n - 4));
  return out;
}

/// Central first derivative on a uniform grid, one-sided second order at the
/// ends.
inline ArrayXd diff_central(const ArrayXd& f, double dx) {
  const Eigen::Index n = f.size();
  ArrayXd out(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) out(i) = (f(i + 1) - f(i - 1)) / (2 * dx);
  out(0) = (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2 * dx);
  out(n - 1) = (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2 * dx);
  return out;
}

/// Central second derivative, interior only meaningful; ends copied inward.
inline ArrayXd diff2_central(const ArrayXd& f, double dx) {
  const Eigen::Index n = f.size();
  ArrayXd out(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    out(i) = (f(i + 1) - 2.0 * f(i) + f(i - 1)) / (dx * dx);
  out(0) = out(1);
  out(n - 1) = out(n - 2);
  return out;
}

/// Linear interpolation of grid samples; faults outside the grid.
inline double interp_linear(const ArrayXd& x, const ArrayXd& f, double xq) {
  const Eigen::Index n = x.size();
  if (xq < x(0) || xq > x(n - 1))
    fault(FaultKind::numerical, "interpolation query outside grid");
  const double dx = x(1) - x(0);
  Eigen::Index i = static_cast<Eigen::Index>((xq - x(0)) / dx);
  if (i >= n - 1) i = n - 2;
  const double w = (xq - x(i)) / dx;
  return (1.0 - w) * f(i) + w * f(i + 1);
}

/// Least-squares slope of y against x with its standard error.
struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
};

inline SlopeFit fit_slope(const ArrayXd& x, const ArrayXd& y) {
  const double n = static_cast<double>(x.size());
  const double mx = x.mean(), my = y.mean();
  const double sxx = ((x - mx) * (x - mx)).sum();
  const double sxy = ((x - mx) * (y - my)).sum();
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    const ArrayXd r = y - fit.intercept - fit.slope * x;
    fit.stderr_slope = std::sqrt((r * r).sum() / ((n - 2.0) * sxx));
  }
  return fit;
}

}  // namespace slowfast
