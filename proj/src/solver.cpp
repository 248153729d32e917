#include "npasa/solver.hpp"

#include <cmath>

namespace npasa {

double update_penalty(double q_prev, double e_prev, double phi) {
  if (q_prev < 1.0) throw std::invalid_argument("update_penalty: q_prev < 1");
  if (phi <= 1.0) throw std::invalid_argument("update_penalty: phi <= 1");
  if (e_prev <= 0.0)
    throw std::invalid_argument(
        "update_penalty: e_prev is zero (already converged)");
  double q = std::max(phi, 1.0 / e_prev) * q_prev;
  if (!std::isfinite(q)) q = std::numeric_limits<double>::max() / 1e16;
  return q;
}

namespace {

struct Driver {
  const Problem& problem;
  const NpasaConfig& cfg;
  SolveResult result;
  Iterate it;
  ErrorReport rep;
  double e_best = 0;
  double q = 1.0;
  int k = 0;
  int calls = 0;  // GS + LS invocations, charged against the outer budget

  Driver(const Problem& p, const NpasaConfig& c) : problem(p), cfg(c) {}

  void emit(TraceRecord rec) {
    rec.k = k;
    rec.q = q;
    rec.e_best = e_best;
    rec.e0 = rep.e0;
    rec.e1 = rep.e1;
    rec.em0 = rep.em0;
    rec.em1 = rep.em1;
    rec.ec = rep.ec;
    if (cfg.on_trace) cfg.on_trace(rec);
    result.trace.push_back(std::move(rec));
  }

  bool budget_left() const { return calls < cfg.max_outer_iters; }

  // Reconstructs μ(x, 1) for the phase-one loop test: one projection of
  // x − ∇L_q(x, λ̄) at the current penalty.
  Vec fresh_mu() const {
    const Vec lb = safeguard_lambda(it.lambda, cfg.lambda_bar);
    auto [value, grad] = aug_lagrangian(problem, it.x, lb, q);
    (void)value;
    return project(problem.omega, it.x - grad).mu_recon;
  }

  double gs_inner_epsilon() const {
    const double eps_sq = 0.25 * cfg.epsilon * cfg.epsilon;
    return std::max(std::min(eps_sq, cfg.theta * rep.ec), 1e-18);
  }

  // Runs one stay in phase one. Returns true when the solve should move to
  // phase two (either branch test fired or E1 dropped below tolerance).
  bool phase_one() {
    if (e_best > 0)
      q = update_penalty(q, std::max(e_best, 1.0 / cfg.penalty_factor_cap),
                         cfg.phi);
    it.mu = fresh_mu();
    rep = error_report(problem, it);
    e_best = std::min(e_best, rep.e1);

    while (rep.e1 > cfg.epsilon) {
      if (!budget_left()) return false;
      ++calls;

      GsConfig gs_cfg;
      gs_cfg.lambda_bound = cfg.lambda_bar;
      gs_cfg.q = q;
      gs_cfg.pco = cfg.pco;
      gs_cfg.pco.epsilon = gs_inner_epsilon();
      const double ec_prev = rep.ec;

      const GsResult gs = run_gs(problem, it, gs_cfg);
      it = gs.iterate;
      rep = error_report(problem, it);
      ++k;
      e_best = std::min(e_best, rep.e1);

      TraceRecord rec;
      rec.phase = '1';
      rec.inner_iters = gs.inner_iterations;
      if (!gs.converged) rec.branch_reason = "gs_incomplete:" + gs.stop_reason;
      const bool to_two = rep.em1 <= cfg.theta * ec_prev;
      if (to_two) {
        rec.branch_reason = "to_phase_two";
        rec.branch_lhs = rep.em1;
        rec.branch_rhs = cfg.theta * ec_prev;
      }
      emit(std::move(rec));
      if (to_two) return true;
    }
    return true;  // E1 ≤ ε: fall through into phase two, which terminates
  }

  // Runs one stay in phase two. Returns true on convergence, false when a
  // branch back to phase one was taken (or the budget ran out).
  bool phase_two(bool& converged) {
    while (rep.e1 > cfg.epsilon) {
      if (!budget_left()) return true;  // give up; caller checks converged
      ++calls;

      LsConfig ls_cfg = cfg.ls;
      ls_cfg.theta = cfg.theta;
      const LsOutcome ls = run_ls(problem, it, ls_cfg);

      TraceRecord rec;
      rec.phase = '2';
      rec.inner_iters = ls.constraint_iters + ls.multiplier_iters;
      rec.alpha_min = ls.alpha_min_seen;
      rec.p_max = ls.p_max_seen;

      if (!ls.accepted) {
        rec.branch_reason =
            ls.reason == LsBranchReason::constraint_perturbation
                ? "to_phase_one:constraint_perturbation"
                : "to_phase_one:insufficient_em1_decrease";
        rec.branch_lhs = ls.branch_lhs;
        rec.branch_rhs = ls.branch_rhs;
        emit(std::move(rec));
        return false;
      }

      const ErrorReport rep_new = error_report(problem, ls.iterate);
      if (rep_new.e1 > cfg.theta * rep.e1) {
        rec.branch_reason = "to_phase_one:e1_decrease_failed";
        rec.branch_lhs = rep_new.e1;
        rec.branch_rhs = cfg.theta * rep.e1;
        emit(std::move(rec));
        return false;
      }

      rec.branch_reason = "";
      rec.branch_lhs = rep_new.e1;  // accepted: E1(k+1) ≤ θ·E1(k)
      rec.branch_rhs = cfg.theta * rep.e1;
      it = ls.iterate;
      rep = rep_new;
      ++k;
      e_best = std::min(e_best, rep.e1);
      emit(std::move(rec));
    }
    converged = true;
    return true;
  }

  SolveResult run(const Vec& x0, const Vec& lambda0, const Vec& mu0) {
    it.x = project(problem.omega, x0).y_star;
    it.lambda = lambda0;
    it.mu = mu0.size() == problem.omega.stacked_size()
                ? mu0
                : Vec::Zero(problem.omega.stacked_size());
    q = cfg.q0;
    rep = error_report(problem, it);
    e_best = rep.e1;

    bool converged = false;
    while (true) {
      if (!phase_one()) break;  // budget exhausted inside phase one
      if (phase_two(converged)) break;
      if (!budget_left()) break;
    }

    result.final = it;
    result.converged = converged;
    result.termination_reason = converged ? "converged" : "max_outer_iters";
    result.outer_iters = calls;
    result.final_report = rep;
    return result;
  }
};

}  // namespace

SolveResult solve(const Problem& problem, const Vec& x0, const Vec& lambda0,
                  const Vec& mu0, const NpasaConfig& cfg) {
  if (x0.size() != problem.n || lambda0.size() != problem.l)
    throw std::invalid_argument("solve: initial point dimension mismatch");
  for (Eigen::Index i = 0; i < x0.size(); ++i)
    if (!std::isfinite(x0[i]))
      throw std::invalid_argument("solve: x0 must be finite");
  Driver driver(problem, cfg);
  return driver.run(x0, lambda0, mu0);
}

}  // namespace npasa
