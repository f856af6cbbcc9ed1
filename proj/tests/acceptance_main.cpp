// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Every tolerance is pinned here; runs are deterministic for the pinned
// seeds and independent of the worker count.

#include "slowfast/cli_runner.hpp"
#include "slowfast/csv.hpp"
#include "slowfast/mdp_rate.hpp"
#include "slowfast/quadrature.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

using namespace slowfast;

namespace {

int g_failures = 0;

void report(int id, const char* name, bool pass, double seconds,
            const std::string& detail) {
  std::printf("[%2d] %s %-28s (%6.2f s)  %s\n", id, pass ? "PASS" : "FAIL",
              name, seconds, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v);

void run(int id, const char* name, double time_limit,
         const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    const auto r = body();
    pass = r.first;
    detail = r.second;
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (secs > time_limit) {
    pass = false;
    detail += " [over the " + fmt(time_limit) + " s budget]";
  }
  report(id, name, pass, secs, detail);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const MeasureHandle kUnit = MeasureHandle::dirac(0.0);

double hermite_tanh(int order, double x) {
  const double t = std::tanh(x);
  if (order == 0) return t;
  if (order == 1) return 1.0 - t * t;
  return -2.0 * t * (1.0 - t * t);
}

TestDictionary tanh_dictionary() {
  std::vector<TestDictionary::Member> members;
  members.push_back({hermite_tanh, "tanh"});
  return TestDictionary::from_members(std::move(members));
}

// --------------------------------------------------------------------------

std::pair<bool, std::string> equilibrium_correctness() {
  const ModelSpec m = make_builtin("ou_linear");
  const FrozenEquilibrium eq = invariant_density(m, 0.0, kUnit);
  double pi_err = 0.0;
  const double pmax = eq.density.maxCoeff();
  for (Eigen::Index i = 0; i < eq.y.size(); ++i) {
    if (eq.density(i) < 1e-8 * pmax) continue;
    const double exact = std::exp(-0.5 * eq.y(i) * eq.y(i)) /
                         std::sqrt(2.0 * M_PI);
    pi_err = std::max(pi_err, std::fabs(eq.density(i) - exact));
  }
  TestFn2 y2{[](double y) { return y * y; }, [](double y) { return 2.0 * y; },
             [](double) { return 2.0; }};
  const double residual = invariance_residual(m, eq, y2);
  const double norm_defect = std::fabs(trapezoid(eq.density, eq.dy()) - 1.0);
  const bool pass = pi_err < 1e-6 && residual < 1e-6 && norm_defect < 1e-10;
  return {pass, "pi err " + fmt(pi_err) + ", residual " + fmt(residual) +
                    ", norm defect " + fmt(norm_defect)};
}

std::pair<bool, std::string> cell_closed_form() {
  double u_err = 0.0, centering = 0.0, residual = 0.0;
  for (double kappa : {0.5, 1.0, 2.0}) {
    BuiltinOverrides ov;
    ov.kappa = kappa;
    const ModelSpec m = make_builtin("ou_linear", ov);
    EquilibriumOptions opts;
    opts.grid = GridSpec{0.0, 4097};
    const FrozenEquilibrium eq = invariant_density(m, 0.0, kUnit, opts);
    const CellSolution cell = solve_cell_problem(m, 0.0, kUnit, eq);
    const double pmax = eq.density.maxCoeff();
    for (Eigen::Index i = 0; i < eq.y.size(); ++i)
      if (eq.density(i) >= 1e-8 * pmax)
        u_err = std::max(u_err, std::fabs(cell.u(i) - eq.y(i) / kappa));
    centering = std::max(centering, cell.centering);
    residual = std::max(residual, cell.residual);
  }
  const bool pass = u_err < 1e-6 && centering < 1e-8 && residual < 1e-6;
  return {pass, "Phi err " + fmt(u_err) + ", centering " + fmt(centering) +
                    ", residual " + fmt(residual)};
}

std::pair<bool, std::string> two_form_equality() {
  double worst = 0.0, min_d = 1e300;
  for (const char* name : {"ou_linear", "mean_field_ou", "mean_field_fast",
                           "two_scale_langevin", "no_multiscale"}) {
    const AveragedModel avg(make_builtin(name));
    for (int p = 0; p < 100; ++p) {
      const double x = -2.0 + 4.0 * p / 99.0;
      ArrayXd atoms(6);
      for (int i = 0; i < 6; ++i)
        atoms(i) = 0.4 * (i - 2.5) + 0.15 * ((p * 7 + i * 13) % 11 - 5);
      const MeasureHandle mu = MeasureHandle::empirical(std::move(atoms));
      const double d1 = avg.D_bar(x, mu);
      const double d2 = avg.D_bar_alt(x, mu);
      worst = std::max(worst, std::fabs(d1 - d2));
      min_d = std::min(min_d, d1);
    }
  }
  const bool pass = worst < 1e-6 && min_d >= 0.0;
  return {pass,
          "max |Dbar - alt| " + fmt(worst) + ", min Dbar " + fmt(min_d)};
}

std::pair<bool, std::string> homogenized_constants() {
  const AveragedModel ou(make_builtin("ou_linear"));
  const double d = ou.D_bar(0.0, kUnit);
  const double g = ou.gamma_bar(0.0, kUnit);

  const ModelSpec nm = make_builtin("no_multiscale");
  const AveragedModel avg_nm(nm);
  ArrayXd atoms(5);
  atoms << -1.0, -0.2, 0.3, 0.9, 1.6;
  const MeasureHandle mu = MeasureHandle::empirical(std::move(atoms));
  double nm_err = 0.0;
  for (double x : {-0.7, 0.0, 1.1}) {
    const double sig = nm.sigma(x, nm.init_y, mu);
    nm_err = std::max(nm_err,
                      std::fabs(avg_nm.gamma_bar(x, mu) - nm.c(x, nm.init_y, mu)));
    nm_err = std::max(nm_err, std::fabs(avg_nm.D_bar(x, mu) - 0.5 * sig * sig));
  }
  const bool pass =
      std::fabs(d - 1.5) < 1e-6 && std::fabs(g) < 1e-8 && nm_err < 1e-12;
  return {pass, "ou Dbar " + fmt(d) + ", gamma_bar " + fmt(g) +
                    ", reduction err " + fmt(nm_err)};
}

std::pair<bool, std::string> doubled_corrector() {
  const ModelSpec m = make_builtin("ou_linear");
  const TensorCellSolution chi = solve_tensor_poisson(
      m, 0.0, 0.0, kUnit, [](double y) { return y; },
      [](double yb) { return yb; });
  double worst = 0.0;
  for (int i = 0; i < chi.y.size(); ++i)
    for (int k = 0; k < chi.ybar.size(); ++k) {
      if (chi.y(i) * chi.y(i) + chi.ybar(k) * chi.ybar(k) > 37.0) continue;
      worst = std::max(
          worst, std::fabs(chi.chi(i, k) - 0.5 * chi.y(i) * chi.ybar(k)));
    }
  const bool pass =
      worst < 1e-4 && chi.residual < 1e-3 && chi.centering < 1e-6;
  return {pass, "chi err " + fmt(worst) + ", residual " + fmt(chi.residual) +
                    ", centering " + fmt(chi.centering)};
}

std::pair<bool, std::string> coupling_rate() {
  const ModelSpec m = make_builtin("mean_field_fast");
  StepPolicy policy;
  const double T = 1.0;
  const std::vector<double> eps_list = {0.4, 0.2, 0.1};
  const std::vector<std::uint64_t> seeds = {1,  2,  3,  4,  5,  6,  7,
                                            8,  9,  10, 11, 12, 13, 14,
                                            15, 16, 17, 18, 19, 20};
  auto mean_gap = [&](double eps, int n) {
    double acc = 0.0;
    for (const auto seed : seeds) {
      const EnsemblePath ms = simulate_multiscale(m, n, eps, T, policy, seed);
      const EnsemblePath iid =
          simulate_iid_mv(m, n, 8 * n, eps, T, policy, seed);
      acc += coupling_error(ms, iid);
    }
    return acc / static_cast<double>(seeds.size());
  };

  ArrayXd log_eps(3), log_gap(3);
  for (int i = 0; i < 3; ++i) {
    log_eps(i) = std::log(eps_list[i]);
    log_gap(i) = std::log(mean_gap(eps_list[i], 256));
  }
  const SlopeFit fit = fit_slope(log_eps, log_gap);

  const double g64 = mean_gap(0.1, 64);
  const double g128 = mean_gap(0.1, 128);
  const double g256 = std::exp(log_gap(2));
  int monotone = 0;
  if (g128 < g64) ++monotone;
  if (g256 < g128) ++monotone;
  if (g256 < g64) ++monotone;

  const bool pass = fit.slope >= 1.4 && fit.slope <= 2.6 && monotone >= 2;
  return {pass, "eps slope " + fmt(fit.slope) + " (se " +
                    fmt(fit.stderr_slope) + "), monotone pairs " +
                    std::to_string(monotone) + "/3"};
}

std::pair<bool, std::string> weak_averaging_rate() {
  const ModelSpec m = make_builtin("ou_linear");
  const AveragedModel avg(m);
  StepPolicy policy;
  const double T = 1.0;
  const int n = 10000;
  const std::vector<double> eps_list = {0.4, 0.2, 0.1};
  const std::vector<std::uint64_t> seeds = {1, 2, 3};

  ArrayXd log_eps(3), log_gap(3);
  for (int i = 0; i < 3; ++i) {
    const double eps = eps_list[i];
    double emp = 0.0, lim = 0.0;
    for (const auto seed : seeds) {
      const EnsemblePath fine = simulate_multiscale(m, n, eps, T, policy, seed);
      MicroCoupling mc{eps, policy.micro_substeps};
      const EnsemblePath coarse =
          simulate_averaged(avg, n, T, policy.delta_report, seed, mc);
      emp += fine.X.col(fine.times.size() - 1).array().tanh().mean();
      lim += coarse.X.col(coarse.times.size() - 1).array().tanh().mean();
    }
    log_eps(i) = std::log(eps);
    log_gap(i) = std::log(std::fabs(emp - lim) / seeds.size());
  }
  const SlopeFit fit = fit_slope(log_eps, log_gap);
  const bool pass = fit.slope >= 0.5 && fit.slope <= 1.5;
  return {pass, "weak slope " + fmt(fit.slope) + " over gaps " +
                    fmt(std::exp(log_gap(0))) + ", " +
                    fmt(std::exp(log_gap(1))) + ", " +
                    fmt(std::exp(log_gap(2)))};
}

std::pair<bool, std::string> fluctuation_boundedness() {
  const ModelSpec m = make_builtin("ou_linear");
  const AveragedModel avg(m);
  const TestDictionary dict = tanh_dictionary();
  StepPolicy policy;
  const double eps = 0.2, T = 1.0;
  const int n_seeds = 50;
  std::vector<double> variances;
  for (int n : {64, 128, 256}) {
    ArrayXd z_fin(n_seeds);
    for (int s = 0; s < n_seeds; ++s) {
      const std::uint64_t seed = 100 + s;
      const EnsemblePath emp = simulate_multiscale(m, n, eps, T, policy, seed);
      MicroCoupling mc{eps, policy.micro_substeps};
      const EnsemblePath limit =
          simulate_averaged(avg, 10 * n, T, policy.delta_report, seed, mc);
      const FluctuationField f = fluctuation_pairings(emp, limit, 1.0, dict);
      z_fin(s) = f.z(0, f.times.size() - 1);
    }
    const double mean = z_fin.mean();
    variances.push_back((z_fin - mean).square().sum() / (n_seeds - 1));
  }
  const double ratio = variances[2] / variances[0];
  const bool pass = ratio <= 1.5;
  return {pass, "Var(64) " + fmt(variances[0]) + ", Var(128) " +
                    fmt(variances[1]) + ", Var(256) " + fmt(variances[2]) +
                    ", ratio " + fmt(ratio)};
}

std::pair<bool, std::string> rate_identities() {
  // exact quadratic-sup algebra
  const double algebra = 2.0 * 2.0 / (4.0 * 1.0);
  if (std::fabs(algebra - 1.0) > 1e-12)
    return {false, "quadratic sup algebra off"};

  const ModelSpec m = make_builtin("ou_linear");
  const AveragedModel avg(m);
  const TestDictionary dict = TestDictionary::hermite(16);
  const EnsemblePath limit = simulate_averaged(avg, 2048, 0.5, 5e-3, 1);
  GeneratorOptions gopts;
  gopts.galerkin_tol = 1.0;
  const GeneratorMatrix gen = assemble_limit_generator(avg, limit, dict, gopts);

  // I(0) = 0
  FluctuationField zero;
  zero.times = gen.times;
  zero.z = MatrixXd::Zero(16, gen.slices());
  if (dg_rate(zero, gen, avg, limit, dict) != 0.0)
    return {false, "rate of the zero field is not zero"};

  // five probe controls: one-sided bound
  std::vector<ControlField> probes;
  {
    ControlField c1;
    c1.h = [](double, double, double, double& a, double& b) {
      a = 1.0;
      b = 0.0;
    };
    c1.y_independent = true;
    probes.push_back(c1);
    ControlField c2;
    c2.h = [](double, double, double, double& a, double& b) {
      a = 0.0;
      b = 1.0;
    };
    c2.y_independent = true;
    probes.push_back(c2);
    ControlField c3;
    c3.h = [](double t, double, double, double& a, double& b) {
      a = 0.5 * std::sin(6.283185307179586 * t);
      b = 0.0;
    };
    c3.y_independent = true;
    probes.push_back(c3);
    ControlField c4;
    c4.h = [](double, double x, double, double& a, double& b) {
      a = std::tanh(x);
      b = 0.3;
    };
    c4.y_independent = true;
    probes.push_back(c4);
    ControlField c5;
    c5.h = [](double, double, double y, double& a, double& b) {
      a = 0.3 / (1.0 + y * y);
      b = 0.1;
    };
    probes.push_back(c5);
  }
  double worst_gap = -1e300;
  for (const auto& h : probes) {
    const MatrixXd forcing = control_forcing(avg, limit, h, dict);
    const FluctuationField z = solve_limit_ode(gen, forcing, 5e-4);
    const double cost = variational_cost(avg, limit, h);
    const double dg = dg_rate(z, gen, avg, limit, dict);
    worst_gap = std::max(worst_gap, dg - cost);
    if (dg > cost + 1e-3)
      return {false, "one-sided bound violated: dg " + fmt(dg) + " vs cost " +
                         fmt(cost)};
  }

  // round trip through the recovered feedback control
  const MatrixXd forcing = control_forcing(avg, limit, probes[0], dict);
  const FluctuationField z = solve_limit_ode(gen, forcing, 5e-4);
  const double dg = dg_rate(z, gen, avg, limit, dict);
  const ControlField opt = optimal_control_from_target(avg, limit, z, gen, dict);
  const double cost_opt = variational_cost(avg, limit, opt);
  const double rel = std::fabs(dg - cost_opt) / std::max(dg, cost_opt);
  const bool pass = rel < 0.05;
  return {pass, "round trip dg " + fmt(dg) + " vs optimal cost " +
                    fmt(cost_opt) + " (rel " + fmt(rel) + "), worst one-sided "
                    "gap " + fmt(worst_gap)};
}

std::pair<bool, std::string> moment_stability() {
  const ModelSpec m = make_builtin("ou_linear");
  StepPolicy policy;
  const double bound = 3.0;  // 3 * a / kappa with a = kappa = 1
  ControlField constant;
  constant.h = [](double, double, double, double& a, double& b) {
    a = 1.0;
    b = 1.0;
  };
  constant.y_independent = true;
  double worst = 0.0;
  for (double eps : {0.4, 0.2, 0.1}) {
    for (int controlled = 0; controlled < 2; ++controlled) {
      for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        MultiscaleOptions opts;
        opts.a_n = std::pow(64.0, -0.25);
        if (controlled) opts.control = &constant;
        const EnsemblePath p =
            simulate_multiscale(m, 64, eps, 1.0, policy, seed, opts);
        for (int k = 0; k < p.times.size(); ++k)
          worst = std::max(worst, p.Y.col(k).array().square().mean());
      }
    }
  }
  const bool pass = worst <= bound;
  return {pass, "sup mean Y^2 " + fmt(worst) + " vs bound " + fmt(bound)};
}

std::pair<bool, std::string> determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "slowfast_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  auto config = [&](const std::string& out) {
    const fs::path p = base / (out + ".json");
    std::ofstream f(p);
    f << R"json({
      "model": {"example": "mean_field_ou"},
      "output_dir": ")json"
      << (base / out).string() << R"json(",
      "kind": "multiscale", "N": 32, "eps": 0.2, "T": 0.5,
      "seeds": [7, 3]
    })json";
    return p.string();
  };
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  setenv("SLOWFAST_WORKERS", "1", 1);
  if (run_subcommand("simulate", config("d1")) != 0)
    return {false, "first run failed"};
  setenv("SLOWFAST_WORKERS", "4", 1);
  if (run_subcommand("simulate", config("d2")) != 0)
    return {false, "second run failed"};
  unsetenv("SLOWFAST_WORKERS");
  if (run_subcommand("simulate", config("d3")) != 0)
    return {false, "third run failed"};
  for (const char* f : {"run_3.csv", "run_7.csv"}) {
    const std::string a = slurp((base / "d1" / f).string());
    const std::string b = slurp((base / "d2" / f).string());
    const std::string c = slurp((base / "d3" / f).string());
    if (a.empty() || a != b || a != c)
      return {false, std::string("csv body differs for ") + f};
  }
  fs::remove_all(base);
  return {true, "csv bodies identical across reruns and worker counts"};
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run(1, "equilibrium correctness", 1.0, equilibrium_correctness);
  run(2, "cell problem closed form", 1.0, cell_closed_form);
  run(3, "diffusion two-form equality", 10.0, two_form_equality);
  run(4, "homogenized constants", 1.0, homogenized_constants);
  run(5, "doubled corrector", 30.0, doubled_corrector);
  run(6, "coupling rate", 600.0, coupling_rate);
  run(7, "weak averaging rate", 600.0, weak_averaging_rate);
  run(8, "fluctuation boundedness", 600.0, fluctuation_boundedness);
  run(9, "rate function identities", 300.0, rate_identities);
  run(10, "moment stability", 300.0, moment_stability);
  run(11, "determinism", 60.0, determinism);
  if (g_failures) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
