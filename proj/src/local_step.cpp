#include "npasa/local_step.hpp"

#include <cmath>

namespace npasa {

namespace {

// Fixed-point data for the multiplier subproblems at z.
struct MultWorkspace {
  Vec gf;                           // ∇f(z)
  Mat Jt;                           // n × l
  Mat Rt;                           // n × sp, columns ∇r_i for present rows
  Vec r_p;                          // present r values
  std::vector<Eigen::Index> rows;   // present stacked indices
  Eigen::Index n = 0, l = 0, sp = 0;
};

MultWorkspace make_workspace(const Problem& problem, const Vec& z) {
  MultWorkspace ws;
  const EvalResult ev = eval(problem, z);
  ws.gf = ev.grad_f;
  ws.Jt = ev.jac_h.transpose();
  ws.rows = problem.omega.present_rows();
  ws.n = problem.n;
  ws.l = problem.l;
  ws.sp = static_cast<Eigen::Index>(ws.rows.size());
  ws.Rt.resize(problem.n, ws.sp);
  ws.r_p.resize(ws.sp);
  for (Eigen::Index t = 0; t < ws.sp; ++t) {
    Vec grad = Vec::Zero(problem.n);
    problem.omega.add_r_grad(ws.rows[static_cast<std::size_t>(t)], 1.0, grad);
    ws.Rt.col(t) = grad;
    ws.r_p[t] = problem.omega.r_value(ws.rows[static_cast<std::size_t>(t)], z);
  }
  return ws;
}

Vec expand_eta(const MultWorkspace& ws, const Vec& eta_p,
               Eigen::Index stacked_size) {
  Vec full = Vec::Zero(stacked_size);
  for (Eigen::Index t = 0; t < ws.sp; ++t)
    full[ws.rows[static_cast<std::size_t>(t)]] = eta_p[t];
  return full;
}

Vec restrict_eta(const MultWorkspace& ws, const Vec& eta_full) {
  Vec p(ws.sp);
  for (Eigen::Index t = 0; t < ws.sp; ++t)
    p[t] = eta_full[ws.rows[static_cast<std::size_t>(t)]];
  return p;
}

double em1_value(const MultWorkspace& ws, const Vec& nu, const Vec& eta_p) {
  Vec res = ws.gf;
  if (ws.l > 0) res.noalias() += ws.Jt * nu;
  if (ws.sp > 0) res.noalias() += ws.Rt * eta_p;
  double phi_sq = 0;
  for (Eigen::Index t = 0; t < ws.sp; ++t) {
    const double phi = std::min(-ws.r_p[t], eta_p[t]);
    phi_sq += phi * phi;
  }
  return res.squaredNorm() + phi_sq;
}

}  // namespace

ConstraintStepResult constraint_step(const Problem& problem, const Vec& x,
                                     double target_em1, const LsConfig& cfg) {
  ConstraintStepResult res;
  res.w = x;
  if (problem.omega.violation(res.w) > 1e-10)
    res.w = project(problem.omega, res.w).y_star;

  const double threshold = std::max(cfg.theta * target_em1, cfg.ec_floor);
  while (true) {
    const EvalResult ev = eval(problem, res.w);
    res.ec = ev.h.squaredNorm();
    if (res.ec <= threshold) {
      res.ok = true;
      return res;
    }
    if (res.iterations >= cfg.max_constraint_iters) {
      res.detail = "constraint iteration limit";
      return res;
    }

    const double h_norm = ev.h.norm();
    const double p_i =
        std::max(cfg.beta * cfg.beta, 1.0 / (h_norm * h_norm));
    res.p_max_seen = std::max(res.p_max_seen, p_i);

    const SlackProjectionResult sp =
        project_with_slack(ev.jac_h, -ev.h, res.w, p_i, problem.omega);
    const double alpha_next = 1.0 - sp.y_p.norm();
    res.alpha_min_seen = std::min(res.alpha_min_seen, alpha_next);
    if (alpha_next < cfg.alpha) {
      res.detail = "perturbation too large: alpha_{i+1} = " +
                   std::to_string(alpha_next);
      res.alpha_branch = true;
      return res;
    }

    const Vec d = sp.w_p - res.w;
    double s = 1.0;
    bool accepted = false;
    Vec w_trial;
    double h_next = 0;
    for (int k = 0; k <= cfg.max_linesearch; ++k) {
      w_trial = res.w + s * d;
      const Vec h_trial = eval(problem, w_trial).h;
      if (h_trial.norm() <= (1.0 - cfg.tau * alpha_next * s) * h_norm) {
        accepted = true;
        h_next = h_trial.norm();
        break;
      }
      s *= cfg.sigma;
    }
    if (!accepted) {
      res.detail = "line search exhausted";
      return res;
    }
    res.history.push_back({h_norm, h_next, alpha_next, s, p_i});
    res.w = std::move(w_trial);
    ++res.iterations;
  }
}

std::pair<Vec, Vec> mult_step_2a(const Problem& problem, const Vec& z,
                                 double gamma, const LsConfig& cfg,
                                 const Vec* warm_nu, const Vec* warm_eta) {
  if (gamma <= 0) throw std::invalid_argument("mult_step_2a: gamma <= 0");
  const MultWorkspace ws = make_workspace(problem, z);
  const auto dim = ws.l + ws.sp;

  // Variables v = (ν, η_present); strongly convex quadratic thanks to γ.
  GradOracle oracle = [&ws, gamma](const Vec& v, double& f, Vec& g) {
    const Vec nu = v.head(ws.l);
    const Vec eta = v.tail(ws.sp);
    Vec res = ws.gf;
    if (ws.l > 0) res.noalias() += ws.Jt * nu;
    if (ws.sp > 0) res.noalias() += ws.Rt * eta;
    f = res.squaredNorm() - eta.dot(ws.r_p) + gamma * v.squaredNorm();
    g.resize(v.size());
    if (ws.l > 0) g.head(ws.l) = 2.0 * ws.Jt.transpose() * res;
    if (ws.sp > 0) g.tail(ws.sp) = 2.0 * ws.Rt.transpose() * res - ws.r_p;
    g += 2.0 * gamma * v;
  };

  Vec lo = Vec::Constant(dim, -kInf);
  lo.tail(ws.sp).setZero();
  const Polyhedron box = Polyhedron::box(lo, Vec::Constant(dim, kInf));

  Vec v0 = Vec::Zero(dim);
  if (warm_nu && warm_nu->size() == ws.l) v0.head(ws.l) = *warm_nu;
  if (warm_eta && warm_eta->size() == problem.omega.stacked_size())
    v0.tail(ws.sp) = restrict_eta(ws, *warm_eta).cwiseMax(0.0);

  PcoConfig sub = cfg.pco;
  sub.epsilon = std::min(sub.epsilon, 1e-9);
  const PcoStatus status = solve_pco_generic(oracle, box, v0, sub);
  if (!status.converged)
    throw NumericalStallError("mult_step_2a: inner solver did not converge (" +
                              status.stop_reason + ")");

  Vec nu = status.x.head(ws.l);
  Vec eta_full =
      expand_eta(ws, status.x.tail(ws.sp).cwiseMax(0.0),
                 problem.omega.stacked_size());
  return {std::move(nu), std::move(eta_full)};
}

Vec mult_step_2b(const Problem& problem, const Vec& z, const Vec& nu,
                 const LsConfig& cfg, const Vec& eta_init) {
  const MultWorkspace ws = make_workspace(problem, z);
  if (ws.sp == 0) return Vec::Zero(problem.omega.stacked_size());

  Vec c0 = ws.gf;
  if (ws.l > 0) c0.noalias() += ws.Jt * nu;
  // Slack of the present rows; nonnegative on Ω, clamped against rounding so
  // the pattern quadratic majorizes the true objective.
  const Vec d = (-ws.r_p).cwiseMax(0.0);

  auto objective = [&](const Vec& eta) {
    Vec res = c0;
    res.noalias() += ws.Rt * eta;
    double phi_sq = 0;
    for (Eigen::Index t = 0; t < ws.sp; ++t) {
      const double phi = std::min(d[t], eta[t]);
      phi_sq += phi * phi;
    }
    return res.squaredNorm() + phi_sq;
  };
  auto pattern_of = [&](const Vec& eta) {
    std::vector<bool> u(static_cast<std::size_t>(ws.sp));
    for (Eigen::Index t = 0; t < ws.sp; ++t)
      u[static_cast<std::size_t>(t)] = eta[t] - d[t] <= 1e-12;
    return u;
  };

  Vec eta = eta_init.size() == problem.omega.stacked_size()
                ? Vec(restrict_eta(ws, eta_init).cwiseMax(0.0))
                : Vec(Vec::Zero(ws.sp));
  double f_cur = objective(eta);
  Vec best_eta = eta;
  double best_f = f_cur;
  std::vector<bool> pattern = pattern_of(eta);

  const Polyhedron box =
      Polyhedron::box(Vec::Zero(ws.sp), Vec::Constant(ws.sp, kInf));
  const long max_passes = 1L << std::min<Eigen::Index>(ws.sp, 20);

  for (long pass = 0; pass < max_passes; ++pass) {
    // Pattern quadratic: Φ_i² frozen to η_i² on U and to d_i² off U.
    const std::vector<bool> u = pattern;
    GradOracle oracle = [&ws, &c0, &u, &d](const Vec& eta_v, double& f, Vec& g) {
      Vec res = c0;
      res.noalias() += ws.Rt * eta_v;
      f = res.squaredNorm();
      g = 2.0 * ws.Rt.transpose() * res;
      for (Eigen::Index t = 0; t < ws.sp; ++t) {
        if (u[static_cast<std::size_t>(t)]) {
          f += eta_v[t] * eta_v[t];
          g[t] += 2.0 * eta_v[t];
        } else {
          f += d[t] * d[t];
        }
      }
    };
    PcoConfig sub = cfg.pco;
    sub.epsilon = std::min(sub.epsilon, 1e-10);
    const PcoStatus status = solve_pco_generic(oracle, box, eta, sub);
    const Vec eta_new = status.x.cwiseMax(0.0);
    const double f_new = objective(eta_new);
    if (f_new <= f_cur) {
      eta = eta_new;
      f_cur = f_new;
      if (f_cur < best_f) {
        best_f = f_cur;
        best_eta = eta;
      }
    } else {
      break;  // majorization violated numerically; keep the best point
    }
    const std::vector<bool> next = pattern_of(eta);
    if (next == pattern) break;
    pattern = next;
  }
  return expand_eta(ws, best_eta, problem.omega.stacked_size());
}

Vec mult_step_2c(const Problem& problem, const Vec& z_i, const Vec& nu,
                 double p, const LsConfig& cfg) {
  const EvalResult at_zi = eval(problem, z_i);
  const Vec h_ref = at_zi.h;

  // Ω ∩ {∇h(z_i)(z − z_i) = 0} as appended equality rows.
  const Polyhedron& omega = problem.omega;
  const auto m_ext = omega.m() + problem.l;
  Mat A_ext(m_ext, problem.n);
  Vec bl_ext(m_ext), bu_ext(m_ext);
  A_ext.topRows(omega.m()) = omega.A();
  bl_ext.head(omega.m()) = omega.bl();
  bu_ext.head(omega.m()) = omega.bu();
  A_ext.bottomRows(problem.l) = at_zi.jac_h;
  const Vec rhs = at_zi.jac_h * z_i;
  bl_ext.tail(problem.l) = rhs;
  bu_ext.tail(problem.l) = rhs;
  const Polyhedron ext(A_ext, bl_ext, bu_ext, omega.lo(), omega.hi());

  GradOracle oracle = [&problem, &nu, p, &h_ref](const Vec& zv, double& f,
                                                 Vec& g) {
    const EvalResult ev = eval(problem, zv);
    const Vec dh = ev.h - h_ref;
    f = ev.f + nu.dot(ev.h) + p * dh.squaredNorm();
    g = ev.grad_f;
    if (ev.h.size() > 0)
      g.noalias() += ev.jac_h.transpose() * (nu + 2.0 * p * dh);
  };

  PcoConfig sub = cfg.pco;
  sub.epsilon = std::min(sub.epsilon, 1e-10);
  const PcoStatus status = solve_pco_generic(oracle, ext, z_i, sub);
  return status.x;
}

LsOutcome run_ls(const Problem& problem, const Iterate& it, const LsConfig& cfg) {
  LsOutcome out;
  out.iterate = it;

  const ErrorReport rep_in = error_report(problem, it);
  const ConstraintStepResult cs =
      constraint_step(problem, it.x, rep_in.em1, cfg);
  out.constraint_iters = cs.iterations;
  out.alpha_min_seen = cs.alpha_min_seen;
  out.p_max_seen = cs.p_max_seen;
  out.ec_w = cs.ec;
  if (!cs.ok) {
    out.reason = LsBranchReason::constraint_perturbation;
    if (cs.alpha_branch) {
      out.branch_lhs = cs.alpha_min_seen;
      out.branch_rhs = cfg.alpha;
    }
    return out;
  }

  const Vec w = cs.w;
  try {
    Vec z = w;
    auto [nu, eta] = mult_step_2a(problem, z, cfg.gamma, cfg, &it.lambda, &it.mu);
    Vec eta_prime = mult_step_2b(problem, z, nu, cfg, eta);
    MultWorkspace ws = make_workspace(problem, z);
    double em1_cur = em1_value(ws, nu, restrict_eta(ws, eta_prime));

    double p = cfg.p0;
    bool bump_p = false;
    const double threshold = std::max(cfg.theta * cs.ec, cfg.em_floor);
    while (em1_cur > threshold) {
      if (out.multiplier_iters >= cfg.max_multiplier_iters) {
        out.reason = LsBranchReason::insufficient_em1_decrease;
        return out;
      }
      if (bump_p) p = std::min(10.0 * p, cfg.p_cap);
      out.p_max_seen = std::max(out.p_max_seen, p);

      z = mult_step_2c(problem, z, nu, p, cfg);
      std::tie(nu, eta) = mult_step_2a(problem, z, cfg.gamma, cfg, &nu, &eta_prime);
      eta_prime = mult_step_2b(problem, z, nu, cfg, eta);
      ws = make_workspace(problem, z);
      const double em1_next = em1_value(ws, nu, restrict_eta(ws, eta_prime));

      if (em1_next > cfg.delta * em1_cur) {
        out.reason = LsBranchReason::insufficient_em1_decrease;
        out.branch_lhs = em1_next;
        out.branch_rhs = cfg.delta * em1_cur;
        return out;
      }
      bump_p = em1_next > 0.9 * cfg.delta * em1_cur;
      em1_cur = em1_next;
      ++out.multiplier_iters;
    }

    out.accepted = true;
    out.iterate = Iterate{z, nu, eta_prime};
    out.final_em1 = em1_cur;
    out.reason = LsBranchReason::none;
    return out;
  } catch (const NumericalStallError&) {
    out.reason = LsBranchReason::insufficient_em1_decrease;
    out.iterate = it;
    out.accepted = false;
    return out;
  }
}

}  // namespace npasa
