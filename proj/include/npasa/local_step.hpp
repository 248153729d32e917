#pragma once

#include "npasa/pco.hpp"

namespace npasa {

struct LsConfig {
  double theta = 0.5;
  double alpha = 0.1;   // minimum acceptable α_{i+1}
  double beta = 10.0;   // penalty floor uses β²; heuristic 1/β < 1 − α
  double sigma = 0.5;   // backtracking factor
  double tau = 0.1;     // Armijo factor on ‖h‖
  double p0 = 1e4;      // multiplier-step penalty reset
  double gamma = 1e-8;  // 2a regularization
  double delta = 0.5;   // Em1 sufficient-decrease factor
  int max_constraint_iters = 500;
  int max_multiplier_iters = 500;
  int max_linesearch = 60;
  double p_cap = 1e12;       // cap of the multiplier-step penalty growth
  double ec_floor = 1e-18;   // numerical floor of the Ec target
  // Floor of the Em1 target. The 2a regularization keeps Em1 away from
  // zero by roughly (γ·‖ν‖·cond)², so targets below that level only force
  // spurious branches back to phase one.
  double em_floor = 1e-14;
  PcoConfig pco;             // inner solver for 2a/2b/2c
};

enum class LsBranchReason {
  none,
  constraint_perturbation,
  insufficient_em1_decrease,
};

struct LsOutcome {
  bool accepted = false;
  Iterate iterate;  // (z, ν, η') when accepted, the input otherwise
  LsBranchReason reason = LsBranchReason::none;
  int constraint_iters = 0;
  int multiplier_iters = 0;
  double alpha_min_seen = 1.0;
  double p_max_seen = 0.0;
  double ec_w = 0.0;
  double final_em1 = 0.0;
  // Operands of the inequality that caused a branch (NaN when the branch
  // came from a budget or subsolver event instead).
  double branch_lhs = std::numeric_limits<double>::quiet_NaN();
  double branch_rhs = std::numeric_limits<double>::quiet_NaN();
};

struct ConstraintStepResult {
  bool ok = false;
  Vec w;
  int iterations = 0;
  double alpha_min_seen = 1.0;
  double p_max_seen = 0.0;
  double ec = 0.0;
  std::string detail;
  bool alpha_branch = false;  // the α_{i+1} < α test fired
  struct IterRecord {
    double h_before;
    double h_after;
    double alpha;
    double step;
    double p;
  };
  std::vector<IterRecord> history;
};

/// Damped Newton iteration on h(w) = 0 over Ω with slack-penalized
/// linearization. Runs while Ec(w) > θ·target_em1 (floored); branches when
/// the perturbation gets too large (α_{i+1} < α) or the line search fails.
ConstraintStepResult constraint_step(const Problem& problem, const Vec& x,
                                     double target_em1, const LsConfig& cfg);

/// 2a: (ν, η) = argmin{Em0(z, ν, η) + γ‖(ν,η)‖² : η ≥ 0}. η is returned in
/// stacked coordinates (length 2m+2n, absent rows zero).
std::pair<Vec, Vec> mult_step_2a(const Problem& problem, const Vec& z,
                                 double gamma, const LsConfig& cfg,
                                 const Vec* warm_nu = nullptr,
                                 const Vec* warm_eta = nullptr);

/// 2b: η' = argmin{Em1(z, ν, η) : η ≥ 0} by majorize-minimize passes over
/// the sign pattern of Φ(−r(z), η). Monotone in the true objective.
Vec mult_step_2b(const Problem& problem, const Vec& z, const Vec& nu,
                 const LsConfig& cfg, const Vec& eta_init);

/// 2c: z⁺ = argmin{L_p(z, ν) : ∇h(z_i)(z − z_i) = 0, z ∈ Ω}.
Vec mult_step_2c(const Problem& problem, const Vec& z_i, const Vec& nu,
                 double p, const LsConfig& cfg);

/// Full local step: constraint step, then the 2c→2a→2b loop with the
/// balanced-reduction targets. Branch outcomes return the input iterate.
LsOutcome run_ls(const Problem& problem, const Iterate& it, const LsConfig& cfg);

}  // namespace npasa
