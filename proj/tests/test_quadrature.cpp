#include <doctest.h>

#include "slowfast/quadrature.hpp"
#include "slowfast/rng.hpp"

#include <cmath>

using namespace slowfast;

TEST_CASE("trapezoid integrates a decaying Gaussian spectrally") {
  GridSpec g{10.0, 2049};
  const ArrayXd x = g.nodes();
  const ArrayXd f = (-x * x / 2).exp();
  CHECK(trapezoid(f, g.dx()) ==
        doctest::Approx(std::sqrt(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("fourth-order cumulative rule is exact on cubics") {
  GridSpec g{2.0, 41};
  const ArrayXd x = g.nodes();
  const ArrayXd f = x * x * x - 2.0 * x + 1.0;
  const ArrayXd F = cum_quartic(f, g.dx());
  // antiderivative x^4/4 - x^2 + x anchored at the left grid edge
  auto exact = [&](double v) {
    auto A = [](double u) { return u * u * u * u / 4.0 - u * u + u; };
    return A(v) - A(x(0));
  };
  for (Eigen::Index i = 0; i < x.size(); ++i)
    CHECK(F(i) == doctest::Approx(exact(x(i))).epsilon(1e-13));
}

TEST_CASE("fourth-order cumulative beats trapezoid on smooth integrands") {
  GridSpec g{3.0, 101};
  const ArrayXd x = g.nodes();
  const ArrayXd f = (2.0 * x).sin();
  const ArrayXd F4 = cum_quartic(f, g.dx());
  const ArrayXd F2 = cum_trapezoid(f, g.dx());
  auto exact = [&](double v) {
    return -0.5 * (std::cos(2.0 * v) - std::cos(2.0 * x(0)));
  };
  double err4 = 0.0, err2 = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    err4 = std::max(err4, std::fabs(F4(i) - exact(x(i))));
    err2 = std::max(err2, std::fabs(F2(i) - exact(x(i))));
  }
  CHECK(err4 < 1e-5);
  CHECK(err4 * 50.0 < err2);
}

TEST_CASE("slope fit recovers a linear relation") {
  ArrayXd x(4), y(4);
  x << 0, 1, 2, 3;
  y = 2.5 * x - 1.0;
  const SlopeFit fit = fit_slope(x, y);
  CHECK(fit.slope == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(fit.stderr_slope == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("counter rng draws are reproducible and roughly standard normal") {
  const double a = normal_draw(42, 3, NoiseTag::W, 17);
  CHECK(a == normal_draw(42, 3, NoiseTag::W, 17));
  CHECK(a != normal_draw(42, 3, NoiseTag::B, 17));
  CHECK(a != normal_draw(43, 3, NoiseTag::W, 17));

  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = normal_draw(7, static_cast<std::uint32_t>(i % 64),
                                 NoiseTag::W, i / 64);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}
