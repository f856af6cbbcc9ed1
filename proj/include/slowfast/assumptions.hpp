#pragma once

#include "slowfast/model.hpp"

#include <string>
#include <vector>

namespace slowfast {

/// Sampling budget for the assumption checks. The checks are falsification
/// probes on a box, not proofs.
struct ValidationBudget {
  int probes = 10000;        // (x, y1, y2) points per assumption
  double box_half_width = 8.0;
  int measure_probes = 8;    // distinct probe measures
  int atoms_per_measure = 16;
  double lambda_min = 1e-8;  // required ellipticity floor
  double lambda_max = 1e8;   // required ellipticity cap
  double beta = 0.0;         // 0 => estimate 0.9*(2*kappa - 2*Lip_y(eta))
  double growth_cap = 1e6;   // cap for |g|, |sigma| and |b|,|c| per (1+|y|)
  double centering_tol = 1e-6;
  int centering_probes = 8;  // (x, mu) pairs run through the equilibrium
};

struct AssumptionCheck {
  std::string id;       // "A1", "A2", "A3", "A5"
  std::string detail;
  bool pass = false;
  double margin = 0.0;  // negative on failure
  double witness_x = 0.0, witness_y1 = 0.0, witness_y2 = 0.0;
  std::string witness_measure;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;
  double beta_used = 0.0;
  double estimated_lip_eta = 0.0;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

AssumptionReport validate_assumptions(const ModelSpec& model,
                                      const ValidationBudget& budget = {});

/// Deterministic low-discrepancy points in [0,1]^dim (Halton bases 2,3,5,7).
ArrayXXd halton(int count, int dim);

}  // namespace slowfast
