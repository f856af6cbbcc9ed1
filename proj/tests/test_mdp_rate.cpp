#include <doctest.h>

#include "slowfast/mdp_rate.hpp"

#include <cmath>

using namespace slowfast;

namespace {

struct RateFixture {
  ModelSpec model = make_builtin("ou_linear");
  AveragedModel avg{model};
  TestDictionary dict = TestDictionary::hermite(16);
  EnsemblePath limit;
  GeneratorOptions gopts;

  RateFixture() {
    limit = simulate_averaged(avg, 2048, 0.5, 5e-3, 1);
    gopts.galerkin_tol = 0.5;  // top modes spill; residuals stay reported
  }
};

ControlField constant_control(double h1, double h2) {
  ControlField c;
  c.h = [h1, h2](double, double, double, double& o1, double& o2) {
    o1 = h1;
    o2 = h2;
  };
  c.y_independent = true;
  return c;
}

}  // namespace

TEST_CASE("generator expansion matches the Hermite ladder for constant Dbar") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);
  // gamma_bar = 0 and D_bar = 1.5 for the ou example, so
  //   L phi_j = 1.5 phi_j'' and
  //   phi_j'' = [sqrt(j(j-1)) phi_{j-2} - (2j+1) phi_j
  //              + sqrt((j+1)(j+2)) phi_{j+2}] / 2.
  const int k_mid = gen.slices() / 2;
  const MatrixXd& M = gen.M[k_mid];
  for (int j = 2; j <= 13; ++j) {
    CHECK(M(j, j) == doctest::Approx(-1.5 * (2.0 * j + 1.0) / 2.0).epsilon(1e-6));
    CHECK(M(j, j - 2) ==
          doctest::Approx(1.5 * std::sqrt(j * (j - 1.0)) / 2.0).epsilon(1e-6));
    CHECK(M(j, j + 2) ==
          doctest::Approx(1.5 * std::sqrt((j + 1.0) * (j + 2.0)) / 2.0)
              .epsilon(1e-6));
    CHECK(gen.residual(j, k_mid) < 1e-8);
  }
}

TEST_CASE("a zero dictionary member yields a zero generator row") {
  RateFixture fx;
  std::vector<TestDictionary::Member> members;
  members.push_back(
      {[&fx](int o, double x) { return fx.dict.derivative(0, o, x); }, "h0"});
  members.push_back({[](int, double) { return 0.0; }, "null"});
  const TestDictionary dict = TestDictionary::from_members(std::move(members));
  GeneratorOptions gopts;
  gopts.galerkin_tol = 1.0;  // a two-member span cannot absorb h0''
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, dict, gopts);
  for (const auto& M : gen.M) CHECK(M.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an obviously undersized dictionary faults the assembly") {
  RateFixture fx;
  const TestDictionary small = TestDictionary::hermite(4);
  GeneratorOptions strict;
  strict.galerkin_tol = 1e-3;
  CHECK_THROWS_WITH_AS(
      (void)assemble_limit_generator(fx.avg, fx.limit, small, strict),
      doctest::Contains("dictionary too small"), Fault);
}

TEST_CASE("nonlocal generator term: analytic and numeric derivative paths") {
  // the measure-derivative term of the linearized generator must agree
  // whether the averaged-coefficient derivatives come from callbacks or
  // from atom-insertion differencing
  const ModelSpec with_cb = make_builtin("no_multiscale");
  ModelSpec without_cb = with_cb;
  without_cb.lfd_gamma_bar.reset();
  without_cb.lfd_D_bar.reset();
  const AveragedModel avg_a(with_cb);
  const AveragedModel avg_n(without_cb);
  const TestDictionary dict = TestDictionary::hermite(6);
  const EnsemblePath limit = simulate_averaged(avg_a, 128, 0.1, 1e-2, 4);
  GeneratorOptions gopts;
  gopts.galerkin_tol = 1.0;
  gopts.collocation_points = 33;
  gopts.nonlocal_quad_points = 16;
  const GeneratorMatrix ga = assemble_limit_generator(avg_a, limit, dict, gopts);
  const GeneratorMatrix gn = assemble_limit_generator(avg_n, limit, dict, gopts);
  CHECK(ga.lfd_mode == "analytic");
  CHECK(gn.lfd_mode == "numeric");
  double worst = 0.0;
  for (int k = 0; k < ga.slices(); ++k)
    worst = std::max(worst, (ga.M[k] - gn.M[k]).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-3);

  // and the term genuinely matters: dropping it moves the matrix
  ModelSpec no_interaction = with_cb;
  no_interaction.lfd_gamma_bar = [](double, const MeasureHandle&, double) {
    return 0.0;
  };
  no_interaction.lfd_D_bar = [](double, const MeasureHandle&, double) {
    return 0.0;
  };
  const AveragedModel avg_0(no_interaction);
  const GeneratorMatrix g0 = assemble_limit_generator(avg_0, limit, dict, gopts);
  double moved = 0.0;
  for (int k = 0; k < ga.slices(); ++k)
    moved = std::max(moved, (ga.M[k] - g0.M[k]).cwiseAbs().maxCoeff());
  CHECK(moved > 1e-3);
}

TEST_CASE("limit equation basics: zero forcing and pure integration") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);
  const MatrixXd zero_forcing = MatrixXd::Zero(16, gen.slices());
  const FluctuationField z = solve_limit_ode(gen, zero_forcing, 1e-3);
  CHECK(z.z.cwiseAbs().maxCoeff() == 0.0);

  GeneratorMatrix trivial;
  trivial.times = ArrayXd::LinSpaced(101, 0.0, 1.0);
  trivial.M.assign(101, MatrixXd::Zero(2, 2));
  trivial.residual = MatrixXd::Zero(2, 101);
  MatrixXd forcing = MatrixXd::Zero(2, 101);
  forcing.row(0).setOnes();
  const FluctuationField lin = solve_limit_ode(trivial, forcing, 1e-3);
  for (int k = 0; k < 101; ++k) {
    CHECK(lin.z(0, k) == doctest::Approx(trivial.times(k)).epsilon(1e-12));
    CHECK(lin.z(1, k) == 0.0);
  }
}

TEST_CASE("step doubling leaves the solved field unchanged") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);
  const ControlField h = constant_control(1.0, 0.0);
  const MatrixXd forcing = control_forcing(fx.avg, fx.limit, h, fx.dict);
  const FluctuationField z1 = solve_limit_ode(gen, forcing, 1e-3);
  const FluctuationField z2 = solve_limit_ode(gen, forcing, 5e-4);
  CHECK((z1.z - z2.z).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("forcing of simple controls") {
  RateFixture fx;
  const ControlField zero = ControlField::zero();
  const MatrixXd f0 = control_forcing(fx.avg, fx.limit, zero, fx.dict);
  CHECK(f0.cwiseAbs().maxCoeff() == 0.0);

  // sigma + tau1 Phi_y = 1 for the ou example, so the forcing of (1, 0) is
  // the plain ensemble mean of phi_j'
  const ControlField h = constant_control(1.0, 0.0);
  const MatrixXd f = control_forcing(fx.avg, fx.limit, h, fx.dict);
  for (int k : {0, 25, 100}) {
    const ArrayXd ens = fx.limit.X.col(k).array();
    for (int j : {0, 5, 11}) {
      double direct = 0.0;
      for (Eigen::Index i = 0; i < ens.size(); ++i)
        direct += fx.dict.derivative(j, 1, ens(i));
      direct /= static_cast<double>(ens.size());
      CHECK(f(j, k) == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("forcing through the degenerate fast block") {
  const ModelSpec m = make_builtin("no_multiscale");
  const AveragedModel avg(m);
  const TestDictionary dict = TestDictionary::hermite(8);
  const EnsemblePath limit = simulate_averaged(avg, 512, 0.3, 1e-2, 7);
  const ControlField h = constant_control(0.7, 0.0);
  const MatrixXd f = control_forcing(avg, limit, h, dict);
  const int k = 12;
  const ArrayXd ens = limit.X.col(k).array();
  const MeasureHandle law = MeasureHandle::empirical(ens);
  for (int j : {1, 4}) {
    double direct = 0.0;
    for (Eigen::Index i = 0; i < ens.size(); ++i)
      direct += m.sigma(ens(i), m.init_y, law) * 0.7 *
                dict.derivative(j, 1, ens(i));
    direct /= static_cast<double>(ens.size());
    CHECK(f(j, k) == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("variational cost of simple controls") {
  RateFixture fx;
  CHECK(variational_cost(fx.avg, fx.limit, ControlField::zero()) == 0.0);
  // constant (1,0) over T = 0.5: (1/2) * T * 1 = 0.25
  CHECK(variational_cost(fx.avg, fx.limit, constant_control(1.0, 0.0)) ==
        doctest::Approx(0.25).epsilon(1e-10));

  // y-dependent control, against an independent quadrature oracle
  ControlField hy;
  hy.h = [](double, double, double y, double& o1, double& o2) {
    o1 = 1.0 / (1.0 + y * y);
    o2 = 0.0;
  };
  const double cost = variational_cost(fx.avg, fx.limit, hy);
  const FrozenEquilibrium eq =
      invariant_density(fx.model, 0.0, MeasureHandle::dirac(0.0));
  const double pi_avg = equilibrium_average(
      [](double y) {
        const double v = 1.0 / (1.0 + y * y);
        return v * v;
      },
      eq);
  CHECK(cost == doctest::Approx(0.5 * 0.5 * pi_avg).epsilon(1e-3));
}

TEST_CASE("quadratic-sup slice algebra on a handmade field") {
  // one member with phi' = 1, Dbar = 1: numerator 2, denominator 1 gives
  // 2^2/(4*1) = 1 per unit time
  BuiltinOverrides ov;
  ov.sigma = std::sqrt(2.0);
  const ModelSpec m = make_builtin("no_multiscale", ov);
  const AveragedModel avg(m);
  std::vector<TestDictionary::Member> members;
  members.push_back({[](int o, double x) {
                       if (o == 0) return x;
                       return o == 1 ? 1.0 : 0.0;
                     },
                     "ramp"});
  const TestDictionary dict = TestDictionary::from_members(std::move(members));

  const int slices = 11;
  EnsemblePath limit;
  limit.times = ArrayXd::LinSpaced(slices, 0.0, 1.0);
  limit.X = MatrixXd::Zero(4, slices);
  limit.n_particles = 4;

  GeneratorMatrix gen;
  gen.times = limit.times;
  gen.M.assign(slices, MatrixXd::Zero(1, 1));
  gen.residual = MatrixXd::Zero(1, slices);
  for (int k = 0; k < slices; ++k)
    gen.laws.push_back(MeasureHandle::empirical(limit.X.col(k).array()));

  FluctuationField z;
  z.times = gen.times;
  z.z = 2.0 * gen.times.transpose().matrix();  // zdot = 2

  RateDiagnostics diag;
  const double dg = dg_rate(z, gen, avg, limit, dict, &diag);
  CHECK(dg == doctest::Approx(1.0).epsilon(1e-12));
  for (int k = 0; k < slices; ++k) {
    CHECK(diag.slice_value_member(k) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(diag.attaining_index(k) == 0);
  }

  // closed-form scalar sup against a brute-force grid search
  const double F = 2.0, D = 1.0;
  double brute = -1e300;
  for (double c = -10.0; c <= 10.0; c += 1e-3)
    brute = std::max(brute, c * F - c * c * D);
  CHECK(F * F / (4.0 * D) == doctest::Approx(brute).epsilon(1e-6));
}

TEST_CASE("rate of the zero field vanishes") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);
  FluctuationField z;
  z.times = gen.times;
  z.z = MatrixXd::Zero(16, gen.slices());
  CHECK(dg_rate(z, gen, fx.avg, fx.limit, fx.dict) == 0.0);
}

TEST_CASE("field scales linearly in the control") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);
  const MatrixXd f1 =
      control_forcing(fx.avg, fx.limit, constant_control(0.6, 0.2), fx.dict);
  const MatrixXd f2 =
      control_forcing(fx.avg, fx.limit, constant_control(1.2, 0.4), fx.dict);
  const FluctuationField z1 = solve_limit_ode(gen, f1, 1e-3);
  const FluctuationField z2 = solve_limit_ode(gen, f2, 1e-3);
  CHECK((z2.z - 2.0 * z1.z).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero target recovers the zero control") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);
  FluctuationField z;
  z.times = gen.times;
  z.z = MatrixXd::Zero(16, gen.slices());
  const ControlField h = optimal_control_from_target(fx.avg, fx.limit, z, gen,
                                                     fx.dict);
  double h1 = 1.0, h2 = 1.0;
  h.h(0.21, 0.4, -0.3, h1, h2);
  CHECK(h1 == 0.0);
  CHECK(h2 == 0.0);
}

TEST_CASE("feedback cost identity: generic quadrature vs closed form") {
  // small path: the generic pi-quadrature path costs a per-node closure
  const ModelSpec model = make_builtin("ou_linear");
  const AveragedModel avg(model);
  const TestDictionary dict = TestDictionary::hermite(8);
  const EnsemblePath limit = simulate_averaged(avg, 256, 0.2, 1e-2, 1);
  GeneratorOptions gopts;
  gopts.galerkin_tol = 1.0;
  const GeneratorMatrix gen = assemble_limit_generator(avg, limit, dict, gopts);
  const ControlField h = constant_control(1.0, 0.0);
  const MatrixXd forcing = control_forcing(avg, limit, h, dict);
  const FluctuationField z = solve_limit_ode(gen, forcing, 1e-3);
  ControlField opt = optimal_control_from_target(avg, limit, z, gen, dict);
  // closed form (1/4) int E[ Dbar^{-1} hbar^2 ]
  const double fast = variational_cost(avg, limit, opt);
  ControlField generic = opt;
  generic.riesz.reset();  // forces the pi-quadrature path
  const double slow = variational_cost(avg, limit, generic);
  CHECK(std::fabs(fast - slow) < 1e-4 * std::max(fast, slow));

  const MatrixXd f_fast = control_forcing(avg, limit, opt, dict);
  const MatrixXd f_slow = control_forcing(avg, limit, generic, dict);
  CHECK((f_fast - f_slow).cwiseAbs().maxCoeff() <
        1e-4 * (1.0 + f_fast.cwiseAbs().maxCoeff()));
}

TEST_CASE("recovered feedback degenerates to sigma hbar/(2 Dbar)") {
  const ModelSpec m = make_builtin("no_multiscale");
  const AveragedModel avg(m);
  const TestDictionary dict = TestDictionary::hermite(12);
  const EnsemblePath limit = simulate_averaged(avg, 512, 0.3, 5e-3, 3);
  GeneratorOptions gopts;
  gopts.galerkin_tol = 1.0;
  const GeneratorMatrix gen = assemble_limit_generator(avg, limit, dict, gopts);
  const ControlField h = constant_control(0.8, 0.0);
  const MatrixXd forcing = control_forcing(avg, limit, h, dict);
  const FluctuationField z = solve_limit_ode(gen, forcing, 1e-3);
  const ControlField opt = optimal_control_from_target(avg, limit, z, gen, dict);
  // Phi_y = 0: the second component vanishes and the first ignores y
  double h1a = 0, h2a = 0, h1b = 0, h2b = 0;
  opt.h(0.15, 0.4, -1.0, h1a, h2a);
  opt.h(0.15, 0.4, 2.0, h1b, h2b);
  CHECK(h2a == 0.0);
  CHECK(h2b == 0.0);
  CHECK(h1a == h1b);
  CHECK(h1a != 0.0);
}

TEST_CASE("slices without usable denominators are skipped with a warning") {
  RateFixture fx;
  std::vector<TestDictionary::Member> members;
  members.push_back({[](int o, double) { return o == 0 ? 1.0 : 0.0; },
                     "constant"});
  const TestDictionary dict = TestDictionary::from_members(std::move(members));
  GeneratorOptions gopts;
  gopts.galerkin_tol = 1.0;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, dict, gopts);
  FluctuationField z;
  z.times = gen.times;
  z.z = MatrixXd::Ones(1, gen.slices());
  RateDiagnostics diag;
  const double dg = dg_rate(z, gen, fx.avg, fx.limit, dict, &diag);
  CHECK(dg == 0.0);
  CHECK(diag.skipped_slices == gen.slices());
}

TEST_CASE("one-sided bound and feedback round trip") {
  RateFixture fx;
  const GeneratorMatrix gen =
      assemble_limit_generator(fx.avg, fx.limit, fx.dict, fx.gopts);

  const ControlField h = constant_control(1.0, 0.0);
  const MatrixXd forcing = control_forcing(fx.avg, fx.limit, h, fx.dict);
  const FluctuationField z = solve_limit_ode(gen, forcing, 1e-3);
  const double cost = variational_cost(fx.avg, fx.limit, h);
  const double dg = dg_rate(z, gen, fx.avg, fx.limit, fx.dict);
  CHECK(dg <= cost + 1e-3);
  CHECK(dg > 0.0);

  const ControlField ht =
      optimal_control_from_target(fx.avg, fx.limit, z, gen, fx.dict);
  const double cost_opt = variational_cost(fx.avg, fx.limit, ht);
  CHECK(cost_opt <= cost + 1e-6);
  CHECK(std::fabs(dg - cost_opt) < 0.05 * std::max(dg, cost_opt));

  // feeding the recovered control back reproduces the field
  const MatrixXd forcing_rt = control_forcing(fx.avg, fx.limit, ht, fx.dict);
  const FluctuationField z_rt = solve_limit_ode(gen, forcing_rt, 1e-3);
  const double scale = z.z.cwiseAbs().maxCoeff();
  CHECK((z_rt.z - z.z).cwiseAbs().maxCoeff() < 0.05 * scale);
}
