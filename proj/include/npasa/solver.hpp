#pragma once

#include "npasa/global_step.hpp"
#include "npasa/local_step.hpp"

namespace npasa {

struct NpasaConfig {
  double epsilon = 1e-8;     // stopping tolerance on E1
  double theta = 0.5;        // branch factor
  double phi = 10.0;         // penalty growth
  double lambda_bar = 1e6;   // multiplier safeguard bound
  double q0 = 1.0;
  int max_outer_iters = 100;
  // Cap on the per-entry penalty growth factor max(φ, 1/e). Unbounded
  // growth is sound in exact arithmetic, but once 2q·h drops below the
  // floating-point resolution of h the multiplier update only adds noise.
  double penalty_factor_cap = 1e4;
  LsConfig ls;
  PcoConfig pco;  // inner solver template for the GS subproblem
  std::function<void(const struct TraceRecord&)> on_trace;
};

struct TraceRecord {
  int k = 0;
  char phase = '1';
  std::optional<double> e0;
  double e1 = 0;
  std::optional<double> em0;
  double em1 = 0;
  double ec = 0;
  double q = 0;
  double e_best = 0;
  std::string branch_reason;  // empty when no transition was taken
  int inner_iters = 0;
  // Operands of the branch inequality that fired (NaN when none did).
  double branch_lhs = std::numeric_limits<double>::quiet_NaN();
  double branch_rhs = std::numeric_limits<double>::quiet_NaN();
  double alpha_min = std::numeric_limits<double>::quiet_NaN();
  double p_max = std::numeric_limits<double>::quiet_NaN();
};

struct SolveResult {
  Iterate final;
  bool converged = false;
  std::vector<TraceRecord> trace;
  std::string termination_reason;
  int outer_iters = 0;
  ErrorReport final_report;
};

/// q_new = max(φ, 1/e_prev) · q_prev.
double update_penalty(double q_prev, double e_prev, double phi);

/// Two-phase outer driver: safeguarded augmented-Lagrangian global steps
/// with penalty growth in phase one, constraint/multiplier local steps in
/// phase two, branching on the Em/Ec balance tests. Terminates when
/// E1 ≤ ε or the outer budget is exhausted.
SolveResult solve(const Problem& problem, const Vec& x0, const Vec& lambda0,
                  const Vec& mu0, const NpasaConfig& cfg);

}  // namespace npasa
