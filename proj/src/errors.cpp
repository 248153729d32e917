#include "npasa/errors.hpp"

#include <cmath>

namespace npasa {

double KktResiduals::max() const {
  double v = 0;
  for (double r : values) v = std::max(v, r);
  return v;
}

namespace {

void check_iterate_dims(const Problem& problem, const Iterate& it) {
  if (it.x.size() != problem.n || it.lambda.size() != problem.l ||
      it.mu.size() != problem.omega.stacked_size())
    throw std::invalid_argument("iterate dimensions do not match the problem");
}

}  // namespace

Vec lagrangian_grad(const Problem& problem, const Iterate& it) {
  check_iterate_dims(problem, it);
  const EvalResult ev = eval(problem, it.x);
  Vec g = ev.grad_f;
  if (problem.l > 0) g.noalias() += ev.jac_h.transpose() * it.lambda;
  for (Eigen::Index i : problem.omega.present_rows())
    problem.omega.add_r_grad(i, it.mu[i], g);
  return g;
}

Vec phi_min(const Vec& u, const Vec& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("phi_min: length mismatch");
  return u.cwiseMin(v);
}

ErrorReport error_report(const Problem& problem, const Iterate& it) {
  check_iterate_dims(problem, it);
  const Polyhedron& omega = problem.omega;
  const EvalResult ev = eval(problem, it.x);

  Vec grad_l = ev.grad_f;
  if (problem.l > 0) grad_l.noalias() += ev.jac_h.transpose() * it.lambda;
  for (Eigen::Index i : omega.present_rows())
    omega.add_r_grad(i, it.mu[i], grad_l);
  const double grad_sq = grad_l.squaredNorm();

  ErrorReport rep;
  rep.ec = ev.h.squaredNorm();

  // em1 = ‖∇L‖² + ‖Φ(−r, μ)‖², defined everywhere. Absent rows have
  // −r = +inf and frozen μ = 0, so they contribute nothing.
  double phi_sq = 0;
  for (Eigen::Index i : omega.present_rows()) {
    const double phi = std::min(-omega.r_value(i, it.x), it.mu[i]);
    phi_sq += phi * phi;
  }
  rep.em1 = grad_sq + phi_sq;
  rep.e1 = std::sqrt(rep.em1 + rep.ec);

  const bool in_omega = omega.contains(it.x, 1e-10);
  const bool mu_nonneg = it.mu.size() == 0 || it.mu.minCoeff() >= -1e-12;
  if (in_omega && mu_nonneg) {
    double em0 = grad_sq - omega.mu_dot_r(it.mu, it.x);
    if (em0 < 0) {
      if (em0 < -1e-12 * std::max(1.0, grad_sq))
        throw ConsistencyError("error_report: em0 negative on D0");
      em0 = 0;
    }
    rep.em0 = em0;
    rep.e0 = std::sqrt(em0 + rep.ec);
  }

  // KKT residuals reuse the quantities already at hand.
  KktResiduals& kk = rep.kkt_residuals;
  kk.values[0] = grad_l.size() ? grad_l.cwiseAbs().maxCoeff() : 0.0;
  kk.values[1] = ev.h.size() ? ev.h.cwiseAbs().maxCoeff() : 0.0;
  double r_pos = 0, mu_neg = 0, comp = 0;
  for (Eigen::Index i : omega.present_rows()) {
    const double ri = omega.r_value(i, it.x);
    r_pos = std::max(r_pos, ri);
    mu_neg = std::max(mu_neg, -it.mu[i]);
    comp = std::max(comp, std::abs(ri * it.mu[i]));
  }
  kk.values[2] = r_pos;
  kk.values[3] = mu_neg;
  kk.values[4] = comp;
  return rep;
}

std::pair<double, Vec> aug_lagrangian(const Problem& problem, const Vec& x,
                                      const Vec& lambda_bar, double q) {
  const EvalResult ev = eval(problem, x);
  const double value = ev.f + lambda_bar.dot(ev.h) + q * ev.h.squaredNorm();
  Vec grad = ev.grad_f;
  if (problem.l > 0)
    grad.noalias() += ev.jac_h.transpose() * (lambda_bar + 2.0 * q * ev.h);
  return {value, std::move(grad)};
}

std::pair<double, Vec> penalized_lagrangian(const Problem& problem, const Vec& z,
                                            const Vec& nu, double p,
                                            const Vec& z_ref) {
  const EvalResult ev = eval(problem, z);
  Vec h_ref(problem.l);
  Mat j_ref(problem.l, problem.n);
  if (problem.l > 0) problem.constraints(z_ref, h_ref, j_ref);
  const Vec dh = ev.h - h_ref;
  const double value = ev.f + nu.dot(ev.h) + p * dh.squaredNorm();
  Vec grad = ev.grad_f;
  if (problem.l > 0) grad.noalias() += ev.jac_h.transpose() * (nu + 2.0 * p * dh);
  return {value, std::move(grad)};
}

KktResiduals kkt_check(const Problem& problem, const Iterate& it) {
  return error_report(problem, it).kkt_residuals;
}

}  // namespace npasa
