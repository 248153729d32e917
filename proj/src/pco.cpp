#include "npasa/pco.hpp"

#include <Eigen/QR>
#include <cmath>

namespace npasa {

namespace {

Vec active_row_projection_residual(const Polyhedron& poly, const Vec& x,
                                   const Vec& g, double active_tol) {
  const std::vector<Eigen::Index> act = active_set(poly, x, active_tol);
  if (act.empty()) return g;
  const auto k = static_cast<Eigen::Index>(act.size());
  Mat D(k, poly.n());
  for (Eigen::Index t = 0; t < k; ++t) {
    Vec grad = Vec::Zero(poly.n());
    poly.add_r_grad(act[static_cast<std::size_t>(t)], 1.0, grad);
    D.row(t) = grad.transpose();
  }
  // g^A = g − Dᵀw with w the least-squares solution of Dᵀw ≈ g.
  const Vec w = D.transpose().completeOrthogonalDecomposition().solve(g);
  return g - D.transpose() * w;
}

double em0_from_projection(const Vec& g, const Vec& x, const Vec& y_alpha,
                           double alpha) {
  const Vec d = y_alpha - x;
  double value = -g.dot(d);
  if (alpha != 1.0)
    value += (1.0 / (alpha * alpha) - 1.0 / alpha) * d.squaredNorm();
  const double guard = 1e-10 * std::max(1.0, g.norm() * d.norm());
  if (value < -guard)
    throw ConsistencyError("em0_via_projection: negative value " +
                           std::to_string(value));
  return std::max(value, 0.0);
}

}  // namespace

PcoState make_pco_state(const GradOracle& oracle, const Vec& x) {
  PcoState s;
  s.x = x;
  oracle(x, s.f, s.g);
  s.f_memory.push_back(s.f);
  // Scale the first projected step to the gradient size; a unit step from a
  // far-out start can land exactly on a degenerate vertex.
  const double g_inf = s.g.lpNorm<Eigen::Infinity>();
  if (g_inf > 1.0) s.bb_alpha = 1.0 / g_inf;
  return s;
}

PasaErrors pasa_errors(const GradOracle& oracle, const Polyhedron& poly,
                       const Vec& x, double active_tol) {
  double f;
  Vec g;
  oracle(x, f, g);
  PasaErrors out;
  out.proj = project(poly, x - g);
  out.y1 = out.proj.y_star;
  out.E = (out.y1 - x).norm();
  out.e = active_row_projection_residual(poly, x, g, active_tol).norm();
  return out;
}

double em0_via_projection(const GradOracle& oracle, const Polyhedron& poly,
                          const Vec& x, double alpha) {
  if (alpha <= 0) throw std::invalid_argument("em0_via_projection: alpha <= 0");
  double f;
  Vec g;
  oracle(x, f, g);
  const ProjectionResult proj = project(poly, x - alpha * g);
  return em0_from_projection(g, x, proj.y_star, alpha);
}

PcoState ngpa_step(const GradOracle& oracle, const Polyhedron& poly,
                   const PcoState& state, const PcoConfig& cfg,
                   const std::vector<WorkItem>* warm) {
  const Vec& x = state.x;
  const ProjectionResult proj = project(poly, x - state.bb_alpha * state.g, warm);
  const Vec d = proj.y_star - x;
  if (d.lpNorm<Eigen::Infinity>() <=
      1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
    // Stationary for this steplength; retry with the unit step next time.
    PcoState same = state;
    same.bb_alpha = 1.0;
    return same;
  }
  const double gd = state.g.dot(d);
  if (!(gd < 0))
    throw NumericalStallError("ngpa_step: projected direction is not descent");

  double f_ref = state.f_memory.front();
  for (double v : state.f_memory) f_ref = std::max(f_ref, v);

  double s = 1.0;
  double f_trial = 0;
  Vec x_trial;
  bool accepted = false;
  for (int halvings = 0; halvings <= 60; ++halvings) {
    x_trial = x + s * d;
    Vec g_unused;
    double fv;
    oracle(x_trial, fv, g_unused);
    if (std::isfinite(fv) && fv <= f_ref + cfg.delta_armijo * s * gd) {
      f_trial = fv;
      accepted = true;
      break;
    }
    s *= cfg.bt_factor;
  }
  if (!accepted)
    throw NumericalStallError("ngpa_step: line search failed after 60 halvings");

  PcoState next;
  next.x = std::move(x_trial);
  oracle(next.x, next.f, next.g);
  next.f = f_trial;
  next.f_memory = state.f_memory;
  next.f_memory.push_back(next.f);
  while (static_cast<int>(next.f_memory.size()) > std::max(1, cfg.eta_memory))
    next.f_memory.pop_front();

  // BB steplength from the accepted pair, safeguarded into [α_min, α_max].
  const Vec sv = next.x - x;
  const Vec zv = next.g - state.g;
  const double sz = sv.dot(zv);
  next.bb_alpha = sz > 0 ? std::min(std::max(sv.squaredNorm() / sz, cfg.alpha_min),
                                    cfg.alpha_max)
                         : cfg.alpha_max;
  return next;
}

LcoOutcome lco_step(const GradOracle& oracle, const Polyhedron& poly,
                    const PcoState& state, const PcoConfig& cfg) {
  const auto n = poly.n();
  LcoOutcome out;
  out.state = state;
  PcoState& cur = out.state;

  std::vector<Eigen::Index> act = active_set(poly, cur.x, cfg.active_tol);
  Mat Z;
  auto rebuild_null_basis = [&]() {
    if (act.empty()) {
      Z = Mat::Identity(n, n);
      return;
    }
    const auto k = static_cast<Eigen::Index>(act.size());
    Mat Dt(n, k);
    for (Eigen::Index t = 0; t < k; ++t) {
      Vec grad = Vec::Zero(n);
      poly.add_r_grad(act[static_cast<std::size_t>(t)], 1.0, grad);
      Dt.col(t) = grad;
    }
    Eigen::ColPivHouseholderQR<Mat> qr(Dt);
    const Eigen::Index rank = qr.rank();
    Z = Mat(qr.householderQ() * Mat::Identity(n, n)).rightCols(n - rank);
  };
  rebuild_null_basis();
  if (Z.cols() == 0) return out;  // vertex: nothing to move

  Vec g_r = Z.transpose() * cur.g;
  const double g_entry = std::max(1.0, cur.g.norm());
  if (g_r.norm() <= 1e-13 * g_entry) return out;

  Vec g_r_prev, d_r_prev;
  const int max_cg = static_cast<int>(Z.cols()) + 5;
  for (int cg = 0; cg < max_cg; ++cg) {
    // Polak–Ribière+ direction in the face coordinates.
    Vec d_r = -g_r;
    if (cg > 0 && g_r_prev.size() == g_r.size()) {
      const double beta =
          std::max(0.0, g_r.dot(g_r - g_r_prev) / g_r_prev.squaredNorm());
      d_r += beta * d_r_prev;
      if (d_r.dot(g_r) >= -1e-14 * d_r.norm() * g_r.norm()) d_r = -g_r;
    }
    const Vec d = Z * d_r;
    const double gd = cur.g.dot(d);
    if (!(gd < 0)) break;

    // First blocking constraint along d.
    double t_max = kInf;
    bool have_blocker = false;
    Eigen::Index blocker = -1;
    for (Eigen::Index i : poly.present_rows()) {
      bool is_active = false;
      for (Eigen::Index a : act)
        if (a == i) {
          is_active = true;
          break;
        }
      if (is_active) continue;
      const double rate = poly.r_grad_dot(i, d);
      if (rate <= 1e-13 * (1.0 + d.norm())) continue;
      const double ti = std::max(0.0, -poly.r_value(i, cur.x) / rate);
      if (ti < t_max) {
        t_max = ti;
        blocker = i;
        have_blocker = true;
      }
    }
    if (have_blocker && t_max < 1e-12) {
      // Degenerate: a just-inactive row blocks immediately; absorb it into
      // the face and restart the direction.
      act.push_back(blocker);
      rebuild_null_basis();
      if (Z.cols() == 0) return out;
      g_r = Z.transpose() * cur.g;
      g_r_prev.resize(0);
      continue;
    }

    // Secant curvature along d (exact for quadratics).
    const double t_probe = std::isfinite(t_max) ? std::min(1.0, t_max) : 1.0;
    double f_probe;
    Vec g_probe;
    oracle(cur.x + t_probe * d, f_probe, g_probe);
    const double curv = (g_probe - cur.g).dot(d) / t_probe;

    double t;
    if (curv > 1e-14 * d.squaredNorm()) {
      t = std::min(-gd / curv, t_max);
    } else if (std::isfinite(t_max)) {
      t = t_max;
    } else {
      // Flat or concave along an unbounded ray: expand while it descends.
      double te = t_probe, fe = f_probe;
      for (int k = 0; k < 60; ++k) {
        double f2;
        Vec g2;
        oracle(cur.x + 2.0 * te * d, f2, g2);
        if (!(std::isfinite(f2) && f2 < fe)) break;
        te *= 2.0;
        fe = f2;
      }
      t = te;
    }

    // Armijo safeguard on the true objective.
    double f_new = 0;
    Vec g_new;
    bool ok = false;
    for (int halvings = 0; halvings <= 60; ++halvings) {
      if (t == t_probe) {
        f_new = f_probe;
        g_new = g_probe;
      } else {
        oracle(cur.x + t * d, f_new, g_new);
      }
      if (std::isfinite(f_new) && f_new <= cur.f + 1e-4 * t * gd) {
        ok = true;
        break;
      }
      t *= 0.5;
    }
    if (!ok) break;

    const bool hit_blocker =
        have_blocker && t >= t_max * (1.0 - 1e-14) && std::isfinite(t_max);
    cur.x += t * d;
    cur.f = f_new;
    g_r_prev = g_r;
    d_r_prev = d_r;
    cur.g = std::move(g_new);
    if (hit_blocker) {
      out.blocked = true;
      break;
    }
    g_r = Z.transpose() * cur.g;
    if (g_r.norm() <= 1e-13 * g_entry) break;
  }

  cur.f_memory.push_back(cur.f);
  while (static_cast<int>(cur.f_memory.size()) > std::max(1, cfg.eta_memory))
    cur.f_memory.pop_front();
  return out;
}

namespace {

struct Bundle {
  ProjectionResult proj;
  double epasa = 0;
  double em0 = 0;
  double epasa_local = 0;
  bool undecided_empty = true;
};

Bundle make_bundle(const Polyhedron& poly, const PcoState& state,
                   const PcoConfig& cfg, std::vector<WorkItem>& warm) {
  Bundle b;
  b.proj = project(poly, state.x - state.g, &warm);
  warm = b.proj.working_set;
  const Vec d1 = b.proj.y_star - state.x;
  b.epasa = d1.norm();
  b.em0 = em0_from_projection(state.g, state.x, b.proj.y_star, 1.0);
  b.epasa_local =
      active_row_projection_residual(poly, state.x, state.g, cfg.active_tol)
          .norm();
  b.undecided_empty = true;
  for (Eigen::Index i : poly.present_rows()) {
    const double slack = -poly.r_value(i, state.x);
    if (slack > 0 && slack <= cfg.undecided_kappa * b.epasa) {
      b.undecided_empty = false;
      break;
    }
  }
  return b;
}

PcoStatus solve_driver(const GradOracle& oracle, const Polyhedron& poly,
                       const Vec& x0, const PcoConfig& cfg, bool aug_mode,
                       const std::function<double(const Vec&)>& ec_fn) {
  PcoStatus status;
  std::vector<WorkItem> warm = {};

  Vec x_start = x0;
  if (!poly.contains(x0, 1e-12)) x_start = project(poly, x0).y_star;

  PcoState state = make_pco_state(oracle, x_start);
  double theta = cfg.theta;
  Bundle bundle = make_bundle(poly, state, cfg, warm);

  double best_metric = kInf;
  PcoState best_state = state;
  Bundle best_bundle = bundle;

  PcoPhase phase = PcoPhase::One;
  int iters = 0;
  int consecutive_noop = 0;
  std::string reason = "max_iters";
  while (true) {
    const double metric = aug_mode ? bundle.em0 : bundle.epasa;
    if (metric < best_metric) {
      best_metric = metric;
      best_state = state;
      best_bundle = bundle;
    }
    double eps_eff = cfg.epsilon;
    if (aug_mode && cfg.alt_stopping && ec_fn)
      eps_eff = std::min(cfg.epsilon, cfg.alt_theta * ec_fn(state.x));
    if (metric <= eps_eff) {
      status.converged = true;
      reason = "converged";
      break;
    }
    if (iters >= cfg.max_iters) break;
    ++iters;
    const Vec x_before = state.x;
    try {
      if (phase == PcoPhase::One) {
        state = ngpa_step(oracle, poly, state, cfg, &warm);
        bundle = make_bundle(poly, state, cfg, warm);
        status.phase_log.push_back(PcoPhase::One);
        const double m = aug_mode ? bundle.em0 : bundle.epasa;
        if (bundle.undecided_empty && bundle.epasa_local < theta * m)
          theta *= cfg.gamma;
        if (bundle.epasa_local >= theta * m) phase = PcoPhase::Two;
      } else {
        LcoOutcome lco = lco_step(oracle, poly, state, cfg);
        state = std::move(lco.state);
        bundle = make_bundle(poly, state, cfg, warm);
        status.phase_log.push_back(PcoPhase::Two);
        const double m = aug_mode ? bundle.em0 : bundle.epasa;
        if (bundle.epasa_local < theta * m) phase = PcoPhase::One;
      }
    } catch (const NumericalStallError& e) {
      reason = std::string("stall: ") + e.what();
      break;
    } catch (const EvalError& e) {
      reason = std::string("eval_error: ") + e.what();
      break;
    }
    if ((state.x - x_before).lpNorm<Eigen::Infinity>() == 0.0) {
      if (++consecutive_noop >= 4) {
        reason = "stall: no progress";
        break;
      }
    } else {
      consecutive_noop = 0;
    }
  }

  if (!status.converged && best_metric < (aug_mode ? bundle.em0 : bundle.epasa)) {
    state = best_state;
    bundle = best_bundle;
  }
  status.x = state.x;
  status.final_metric = aug_mode ? bundle.em0 : bundle.epasa;
  status.iterations = iters;
  status.last_projection = std::move(bundle.proj);
  status.last_grad = state.g;
  status.tested_x = state.x;
  status.theta_final = theta;
  status.stop_reason = reason;
  return status;
}

}  // namespace

PcoStatus solve_pco_aug_lag(const Problem& problem, const Vec& lambda_bar,
                            double q, const Vec& x0, const PcoConfig& cfg) {
  if (q <= 0) throw std::invalid_argument("solve_pco_aug_lag: q must be > 0");
  GradOracle oracle = [&problem, lambda_bar, q](const Vec& x, double& f, Vec& g) {
    auto [value, grad] = aug_lagrangian(problem, x, lambda_bar, q);
    f = value;
    g = std::move(grad);
  };
  auto ec = [&problem](const Vec& x) { return eval(problem, x).h.squaredNorm(); };
  return solve_driver(oracle, problem.omega, x0, cfg, /*aug_mode=*/true, ec);
}

PcoStatus solve_pco_generic(const GradOracle& oracle, const Polyhedron& poly,
                            const Vec& x0, const PcoConfig& cfg) {
  return solve_driver(oracle, poly, x0, cfg, /*aug_mode=*/false, nullptr);
}

}  // namespace npasa
