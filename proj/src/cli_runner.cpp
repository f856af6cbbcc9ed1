#include "slowfast/cli_runner.hpp"

#include "slowfast/assumptions.hpp"
#include "slowfast/csv.hpp"
#include "slowfast/expression.hpp"
#include "slowfast/mdp_rate.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <iostream>

namespace slowfast {

namespace {

using nlohmann::json;

ModelSpec model_from(const json& cfg) {
  if (!cfg.contains("model"))
    fault(FaultKind::usage, "config needs a \"model\" block");
  return build_model(cfg["model"].dump());
}

MeasureHandle measure_from(const json& cfg, const ModelSpec& model) {
  if (cfg.contains("mu_atoms")) {
    const auto& arr = cfg["mu_atoms"];
    ArrayXd atoms(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) atoms(i) = arr[i].get<double>();
    return MeasureHandle::empirical(std::move(atoms));
  }
  return MeasureHandle::dirac(model.init_x);
}

GridSpec grid_from(const json& cfg) {
  GridSpec g;
  g.half_width = 0.0;  // auto
  if (cfg.contains("grid")) {
    g.half_width = cfg["grid"].value("half_width", 0.0);
    g.n = cfg["grid"].value("n", 2049);
  }
  return g;
}

StepPolicy policy_from(const json& cfg) {
  StepPolicy p;
  p.micro_substeps = cfg.value("K", 20);
  p.delta_report = cfg.value("delta_report", 1e-2);
  return p;
}

std::vector<std::uint64_t> seeds_from(const json& cfg) {
  std::vector<std::uint64_t> seeds;
  if (cfg.contains("seeds"))
    for (const auto& s : cfg["seeds"]) seeds.push_back(s.get<std::uint64_t>());
  if (seeds.empty()) fault(FaultKind::usage, "seed list must be non-empty");
  std::sort(seeds.begin(), seeds.end());
  return seeds;
}

ControlField control_from(const json& cfg) {
  if (!cfg.contains("control")) return ControlField::zero();
  const auto& c = cfg["control"];
  const std::string type = c.value("type", "zero");
  if (type == "zero") return ControlField::zero();
  if (type == "constant") {
    const double h1 = c.value("h1", 0.0), h2 = c.value("h2", 0.0);
    ControlField f;
    f.h = [h1, h2](double, double, double, double& o1, double& o2) {
      o1 = h1;
      o2 = h2;
    };
    f.y_independent = true;
    f.bound_estimate = std::hypot(h1, h2);
    return f;
  }
  if (type == "expression") {
    const Expression e1 = Expression::parse(c.value("h1", std::string("0")));
    const Expression e2 = Expression::parse(c.value("h2", std::string("0")));
    ControlField f;
    f.h = [e1, e2](double t, double x, double y, double& o1, double& o2) {
      o1 = e1.eval_txy(t, x, y);
      o2 = e2.eval_txy(t, x, y);
    };
    f.y_independent = !e1.uses_y() && !e2.uses_y();
    return f;
  }
  fault(FaultKind::usage, "unknown control type: " + type);
}

void write_manifest(const std::string& dir, const std::string& command,
                    const json& cfg, const json& extra = {}) {
  json m;
  m["command"] = command;
  m["config"] = cfg;
  m["generated_at"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  if (!extra.is_null()) m["results"] = extra;
  write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

double a_of_n(int n, double rho_a) {
  return std::pow(static_cast<double>(n), -rho_a);
}

// ---------------------------------------------------------------------------

int run_validate(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  ValidationBudget budget;
  if (cfg.contains("budget")) {
    const auto& b = cfg["budget"];
    budget.probes = b.value("probes", budget.probes);
    budget.box_half_width = b.value("box_half_width", budget.box_half_width);
    budget.beta = b.value("beta", budget.beta);
    budget.lambda_min = b.value("lambda_min", budget.lambda_min);
    budget.centering_tol = b.value("centering_tol", budget.centering_tol);
  }
  const AssumptionReport report = validate_assumptions(model, budget);
  CsvWriter csv(dir + "/assumptions.csv",
                {"id", "pass", "margin", "witness_x", "witness_y1",
                 "witness_y2", "witness_measure"});
  for (const auto& c : report.checks)
    csv.row({c.id, static_cast<long long>(c.pass ? 1 : 0), c.margin,
             c.witness_x, c.witness_y1, c.witness_y2, c.witness_measure});
  csv.close();
  json extra;
  extra["all_pass"] = report.all_pass();
  extra["beta_used"] = report.beta_used;
  extra["estimated_lip_eta"] = report.estimated_lip_eta;
  write_manifest(dir, "validate", cfg, extra);
  return report.all_pass() ? 0 : 2;
}

int run_equilibrium(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  const MeasureHandle mu = measure_from(cfg, model);
  const double x = cfg.value("x", model.init_x);
  EquilibriumOptions opts;
  opts.grid = grid_from(cfg);
  const FrozenEquilibrium eq = invariant_density(model, x, mu, opts);
  CsvWriter csv(dir + "/equilibrium.csv", {"y", "density", "normalization"});
  if (eq.degenerate) {
    csv.row({eq.atom, 1.0, 1.0});
  } else {
    const double norm = trapezoid(eq.density, eq.dy());
    for (Eigen::Index i = 0; i < eq.y.size(); ++i)
      csv.row({eq.y(i), eq.density(i), norm});
  }
  csv.close();
  json extra;
  extra["tail_mass"] = eq.tail_mass;
  extra["moment2"] = eq.moments(2);
  write_manifest(dir, "equilibrium", cfg, extra);
  return 0;
}

int run_cell(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  const MeasureHandle mu = measure_from(cfg, model);
  const double x = cfg.value("x", model.init_x);
  EquilibriumOptions opts;
  opts.grid = grid_from(cfg);
  const FrozenEquilibrium eq = invariant_density(model, x, mu, opts);
  const CellSolution cell = solve_cell_problem(model, x, mu, eq);
  CsvWriter csv(dir + "/cell.csv", {"y", "Phi", "Phi_y", "Phi_yy"});
  for (Eigen::Index i = 0; i < cell.y.size(); ++i)
    csv.row({cell.y(i), cell.u(i), cell.u_y(i), cell.u_yy(i)});
  csv.close();
  json extra;
  extra["residual"] = cell.residual;
  extra["centering"] = cell.centering;
  write_manifest(dir, "cell", cfg, extra);
  return 0;
}

int run_average(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  const MeasureHandle mu = measure_from(cfg, model);
  EquilibriumOptions eopts;
  eopts.grid = grid_from(cfg);
  const AveragedModel avg(model, eopts);
  std::vector<double> xs;
  if (cfg.contains("x_list"))
    for (const auto& v : cfg["x_list"]) xs.push_back(v.get<double>());
  if (xs.empty()) xs.push_back(model.init_x);
  CsvWriter csv(dir + "/average.csv",
                {"x", "gamma_bar", "D_bar", "D_bar_alt", "alpha_tilde",
                 "alpha"});
  for (double x : xs) {
    const AveragedCoefficients row = avg.snapshot(x, mu);
    csv.row({row.x, row.gamma_bar, row.D_bar, row.D_bar_alt, row.alpha_tilde,
             row.alpha});
  }
  csv.close();
  write_manifest(dir, "average", cfg);
  return 0;
}

void dump_trajectories(const EnsemblePath& path, const std::string& file) {
  CsvWriter csv(file, {"t", "i", "X", "Y", "u1", "u2"});
  for (int k = 0; k < static_cast<int>(path.times.size()); ++k)
    for (int i = 0; i < path.n_particles; ++i)
      csv.row({path.times(k), static_cast<long long>(i), path.X(i, k),
               path.has_fast ? path.Y(i, k) : 0.0,
               path.has_controls ? path.U1(i, k) : 0.0,
               path.has_controls ? path.U2(i, k) : 0.0});
  csv.close();
}

int run_simulate(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  const auto seeds = seeds_from(cfg);
  const StepPolicy policy = policy_from(cfg);
  const double T = cfg.value("T", 1.0);
  const std::string kind = cfg.value("kind", std::string("multiscale"));
  const double rho_a = cfg.value("rho_a", 0.25);
  if (!(rho_a > 0.0 && rho_a < 0.5))
    fault(FaultKind::usage, "rho_a must lie in (0, 0.5)");
  const ControlField control = control_from(cfg);

  for (const auto seed : seeds) {
    EnsemblePath path;
    if (kind == "multiscale") {
      const int n = cfg.value("N", 64);
      const double eps = cfg.value("eps", 0.1);
      MultiscaleOptions opts;
      opts.control = &control;
      opts.a_n = a_of_n(n, rho_a);
      path = simulate_multiscale(model, n, eps, T, policy, seed, opts);
    } else if (kind == "iid") {
      const int n = cfg.value("N", 64);
      const double eps = cfg.value("eps", 0.1);
      const int m_aux = cfg.value("M_aux", 8 * n);
      path = simulate_iid_mv(model, n, m_aux, eps, T, policy, seed);
    } else if (kind == "averaged") {
      EquilibriumOptions eopts;
      eopts.grid = grid_from(cfg);
      const AveragedModel avg(model, eopts);
      const int m = cfg.value("M", 256);
      path = simulate_averaged(avg, m, T, policy.delta_report, seed);
    } else {
      fault(FaultKind::usage, "unknown simulate kind: " + kind);
    }
    dump_trajectories(path, dir + "/run_" + std::to_string(seed) + ".csv");
  }
  write_manifest(dir, "simulate", cfg);
  return 0;
}

int run_couple(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  const auto seeds = seeds_from(cfg);
  const StepPolicy policy = policy_from(cfg);
  const double T = cfg.value("T", 1.0);
  std::vector<double> eps_list;
  std::vector<int> n_list;
  if (cfg.contains("eps_list"))
    for (const auto& v : cfg["eps_list"]) eps_list.push_back(v.get<double>());
  if (cfg.contains("n_list"))
    for (const auto& v : cfg["n_list"]) n_list.push_back(v.get<int>());
  if (eps_list.size() < 3 || n_list.size() < 3 || seeds.size() < 10)
    fault(FaultKind::usage,
          "coupling study needs >= 3 eps values, >= 3 N values and >= 10 "
          "seeds");
  for (double e : eps_list)
    if (!(e > 0.0 && e <= 1.0)) fault(FaultKind::usage, "eps must be in (0,1]");
  std::sort(eps_list.begin(), eps_list.end());
  std::sort(n_list.begin(), n_list.end());
  const int aux_factor = cfg.value("aux_factor", 8);

  EquilibriumOptions eopts;
  const AveragedModel avg(model, eopts);

  CsvWriter rows(dir + "/coupling.csv",
                 {"eps", "N", "seed", "coupling_error", "weak_emp",
                  "weak_avg"});
  struct Cell {
    double coupling_sum = 0.0;
    double weak_emp_sum = 0.0;
    double weak_avg_sum = 0.0;
    int count = 0;
  };
  std::map<std::pair<double, int>, Cell> table;

  for (double eps : eps_list) {
    for (int n : n_list) {
      for (const auto seed : seeds) {
        const EnsemblePath ms =
            simulate_multiscale(model, n, eps, T, policy, seed);
        const EnsemblePath iid =
            simulate_iid_mv(model, n, aux_factor * n, eps, T, policy, seed);
        const double err = coupling_error(ms, iid);
        MicroCoupling mc{eps, policy.micro_substeps};
        const EnsemblePath avg_run =
            simulate_averaged(avg, n, T, policy.delta_report, seed, mc);
        const int last = static_cast<int>(iid.times.size()) - 1;
        const double weak_emp =
            iid.X.col(last).array().tanh().mean();
        const double weak_avg =
            avg_run.X.col(std::min<int>(last, avg_run.times.size() - 1))
                .array()
                .tanh()
                .mean();
        rows.row({eps, static_cast<long long>(n),
                  static_cast<long long>(seed), err, weak_emp, weak_avg});
        auto& cell = table[{eps, n}];
        cell.coupling_sum += err;
        cell.weak_emp_sum += weak_emp;
        cell.weak_avg_sum += weak_avg;
        cell.count += 1;
      }
    }
  }
  rows.close();

  // Slope of the mean-square gap against eps at the largest N; weak slope
  // from the pooled means; N-monotonicity at the smallest eps.
  const int n_big = n_list.back();
  const double eps_small = eps_list.front();
  ArrayXd log_eps(eps_list.size()), log_gap(eps_list.size()),
      log_weak(eps_list.size());
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    const auto& cell = table[{eps_list[i], n_big}];
    log_eps(i) = std::log(eps_list[i]);
    log_gap(i) = std::log(cell.coupling_sum / cell.count);
    log_weak(i) = std::log(std::fabs(cell.weak_emp_sum - cell.weak_avg_sum) /
                           cell.count);
  }
  const SlopeFit eps_fit = fit_slope(log_eps, log_gap);
  const SlopeFit weak_fit = fit_slope(log_eps, log_weak);

  int monotone_pairs = 0;
  auto gap_at = [&](int n) {
    const auto& cell = table[{eps_small, n}];
    return cell.coupling_sum / cell.count;
  };
  const std::vector<std::pair<int, int>> pairs = {
      {n_list[0], n_list[1]},
      {n_list[1], n_list[2]},
      {n_list[0], n_list[2]}};
  for (const auto& pr : pairs)
    if (gap_at(pr.second) < gap_at(pr.first)) ++monotone_pairs;

  CsvWriter slopes(dir + "/slopes.csv",
                   {"eps_slope", "eps_slope_se", "weak_slope", "weak_slope_se",
                    "n_monotone_pairs"});
  slopes.row({eps_fit.slope, eps_fit.stderr_slope, weak_fit.slope,
              weak_fit.stderr_slope, static_cast<long long>(monotone_pairs)});
  slopes.close();
  json extra;
  extra["eps_slope"] = eps_fit.slope;
  extra["weak_slope"] = weak_fit.slope;
  extra["n_monotone_pairs"] = monotone_pairs;
  write_manifest(dir, "couple", cfg, extra);
  return 0;
}

int run_fluctuate(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  const auto seeds = seeds_from(cfg);
  const StepPolicy policy = policy_from(cfg);
  const double T = cfg.value("T", 1.0);
  const int n = cfg.value("N", 64);
  const double eps = cfg.value("eps", 0.2);
  const int m = cfg.value("M", 10 * n);
  const int dict_size = cfg.value("dict_size", 16);
  const double rho_a = cfg.value("rho_a", 0.25);
  const bool clt = cfg.value("clt_scaling", false);
  const double a_n = clt ? 1.0 : a_of_n(n, rho_a);

  EquilibriumOptions eopts;
  const AveragedModel avg(model, eopts);
  const TestDictionary dict = TestDictionary::hermite(dict_size);

  CsvWriter csv(dir + "/fluctuation.csv", {"seed", "t", "j", "z"});
  std::vector<ArrayXd> finals(dict_size, ArrayXd(seeds.size()));
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const auto seed = seeds[si];
    const EnsemblePath emp = simulate_multiscale(model, n, eps, T, policy, seed);
    MicroCoupling mc{eps, policy.micro_substeps};
    const EnsemblePath limit =
        simulate_averaged(avg, m, T, policy.delta_report, seed, mc);
    const FluctuationField field = fluctuation_pairings(emp, limit, a_n, dict);
    const int last = static_cast<int>(field.times.size()) - 1;
    for (int k = 0; k <= last; ++k)
      for (int j = 0; j < dict_size; ++j)
        csv.row({static_cast<long long>(seed), field.times(k),
                 static_cast<long long>(j), field.z(j, k)});
    for (int j = 0; j < dict_size; ++j) finals[j](si) = field.z(j, last);
  }
  csv.close();

  json summary;
  for (int j = 0; j < dict_size; ++j) {
    const double mean = finals[j].mean();
    const double var = (finals[j] - mean).square().sum() /
                       std::max<std::size_t>(1, seeds.size() - 1);
    summary["variance"][dict.label(j)] = var;
  }
  write_text_file(dir + "/fluctuation_summary.json", summary.dump(2) + "\n");
  write_manifest(dir, "fluctuate", cfg);
  return 0;
}

int run_rate(const json& cfg, const std::string& dir) {
  const ModelSpec model = model_from(cfg);
  if (!cfg.contains("control"))
    fault(FaultKind::usage, "rate study needs a control specification");
  const ControlField control = control_from(cfg);
  const double T = cfg.value("T", 0.5);
  const int m = cfg.value("M", 2048);
  const int dict_size = cfg.value("dict_size", 16);
  const double delta = cfg.value("delta_report", 5e-3);
  const double ode_dt = cfg.value("ode_dt", 5e-4);
  const auto seeds = seeds_from(cfg);

  EquilibriumOptions eopts;
  const AveragedModel avg(model, eopts);
  const TestDictionary dict = TestDictionary::hermite(dict_size);
  const EnsemblePath limit = simulate_averaged(avg, m, T, delta, seeds[0]);

  GeneratorOptions gopts;
  gopts.galerkin_tol = cfg.value("galerkin_tol", 1e-3);
  const GeneratorMatrix gen = assemble_limit_generator(avg, limit, dict, gopts);

  const MatrixXd forcing = control_forcing(avg, limit, control, dict);
  const FluctuationField z = solve_limit_ode(gen, forcing, ode_dt);
  const double cost = variational_cost(avg, limit, control);

  RateDiagnostics diag;
  const double dg = dg_rate(z, gen, avg, limit, dict, &diag);

  double round_trip_cost = 0.0;
  if (!control.is_zero) {
    const ControlField recovered =
        optimal_control_from_target(avg, limit, z, gen, dict);
    round_trip_cost = variational_cost(avg, limit, recovered);
  }

  CsvWriter csv(dir + "/rate_slices.csv",
                {"t", "value_span", "value_member", "attaining_index"});
  for (int k = 0; k < diag.slice_times.size(); ++k)
    csv.row({diag.slice_times(k), diag.slice_value_span(k),
             diag.slice_value_member(k),
             static_cast<long long>(diag.attaining_index(k))});
  csv.close();

  json report;
  report["variational_cost"] = cost;
  report["dg_rate"] = dg;
  report["round_trip_cost"] = round_trip_cost;
  report["worst_generator_residual"] = gen.residual.maxCoeff();
  report["skipped_slices"] = diag.skipped_slices;
  write_text_file(dir + "/rate_report.json", report.dump(2) + "\n");
  write_manifest(dir, "rate", cfg, report);
  return 0;
}

}  // namespace

int run_subcommand(const std::string& subcommand,
                   const std::string& config_path) {
  try {
    std::ifstream in(config_path);
    if (!in) fault(FaultKind::usage, "cannot open config " + config_path);
    json cfg;
    try {
      in >> cfg;
    } catch (const std::exception& e) {
      fault(FaultKind::usage, std::string("config parse error: ") + e.what());
    }
    const std::string dir = cfg.value("output_dir", std::string("out"));
    ensure_directory(dir);

    if (subcommand == "validate") return run_validate(cfg, dir);
    if (subcommand == "equilibrium") return run_equilibrium(cfg, dir);
    if (subcommand == "cell") return run_cell(cfg, dir);
    if (subcommand == "average") return run_average(cfg, dir);
    if (subcommand == "simulate") return run_simulate(cfg, dir);
    if (subcommand == "couple") return run_couple(cfg, dir);
    if (subcommand == "fluctuate") return run_fluctuate(cfg, dir);
    if (subcommand == "rate") return run_rate(cfg, dir);
    fault(FaultKind::usage, "unknown subcommand: " + subcommand);
  } catch (const Fault& f) {
    std::cerr << "error: " << f.what() << "\n";
    return f.kind() == FaultKind::assumption ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace slowfast
