#pragma once

#include <Eigen/QR>
#include <random>

#include "npasa/errors.hpp"
#include "npasa/polyproj.hpp"

// Shared helpers for the test suites. Everything here is test-side oracle
// code and stays independent of the solver paths it checks.

namespace npasa::testing {

inline Vec random_vec(std::mt19937& rng, Eigen::Index n, double lo = -2.0,
                      double hi = 2.0) {
  std::uniform_real_distribution<double> unif(lo, hi);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = unif(rng);
  return v;
}

// Random nonempty polyhedron with a mixture of two-sided rows, one-sided
// rows, an occasional equality row, and partially infinite boxes. Feasible
// by construction: the bounds are placed around a reference point.
inline Polyhedron random_polyhedron(std::mt19937& rng, Eigen::Index n,
                                    Eigen::Index m) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> width(0.2, 1.5);
  std::uniform_int_distribution<int> kind(0, 9);

  const Vec x_ref = random_vec(rng, n, -1.0, 1.0);
  Mat A(m, n);
  Vec bl(m), bu(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) A(j, i) = unif(rng);
    if (A.row(j).norm() < 0.1) A(j, 0) += 1.0;
    const double mid = A.row(j).dot(x_ref);
    switch (kind(rng)) {
      case 0:  // equality row
        bl[j] = bu[j] = mid;
        break;
      case 1:  // lower bound only
        bl[j] = mid - width(rng);
        bu[j] = kInf;
        break;
      case 2:  // upper bound only
        bl[j] = -kInf;
        bu[j] = mid + width(rng);
        break;
      default:
        bl[j] = mid - width(rng);
        bu[j] = mid + width(rng);
    }
  }
  Vec lo(n), hi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (kind(rng)) {
      case 0:
        lo[i] = -kInf;
        hi[i] = kInf;
        break;
      case 1:
        lo[i] = x_ref[i] - width(rng);
        hi[i] = kInf;
        break;
      case 2:
        lo[i] = -kInf;
        hi[i] = x_ref[i] + width(rng);
        break;
      default:
        lo[i] = x_ref[i] - width(rng);
        hi[i] = x_ref[i] + width(rng);
    }
  }
  return Polyhedron(A, bl, bu, lo, hi);
}

// Residuals of the reconstruction conditions M.1–M.4 for a stacked
// multiplier at a projection output.
struct MResiduals {
  double stationarity;     // M.1
  double feasibility;      // M.2
  double nonnegativity;    // M.3
  double complementarity;  // M.4
  double max() const {
    return std::max(std::max(stationarity, feasibility),
                    std::max(nonnegativity, complementarity));
  }
};

inline MResiduals m_residuals(const Polyhedron& poly, const Vec& x_bar,
                              const Vec& y_star, const Vec& mu) {
  const auto n = poly.n();
  const auto m = poly.m();
  const Vec gamma1 = mu.head(m);
  const Vec gamma2 = mu.segment(m, m);
  const Vec ups1 = mu.segment(2 * m, n);
  const Vec ups2 = mu.tail(n);
  Vec resid = y_star - x_bar - ups1 + ups2;
  if (m > 0) resid.noalias() -= poly.A().transpose() * (gamma1 - gamma2);
  MResiduals out{};
  out.stationarity = resid.lpNorm<Eigen::Infinity>();
  out.feasibility = poly.violation(y_star);
  out.nonnegativity = mu.size() > 0 ? std::max(0.0, -mu.minCoeff()) : 0.0;
  out.complementarity = 0;
  for (Eigen::Index i : poly.present_rows())
    out.complementarity = std::max(
        out.complementarity, std::abs(mu[i] * poly.r_value(i, y_star)));
  return out;
}

// Exact minimizer of a quadratic ½xᵀQx + cᵀx on the affine set {Cx = d}
// via the KKT system; reference for the face-restricted optimizer tests.
inline Vec null_space_qp_solve(const Mat& Q, const Vec& c, const Mat& C,
                               const Vec& d) {
  const auto n = Q.rows();
  const auto k = C.rows();
  Mat K(n + k, n + k);
  K.setZero();
  K.topLeftCorner(n, n) = Q;
  K.topRightCorner(n, k) = C.transpose();
  K.bottomLeftCorner(k, n) = C;
  Vec rhs(n + k);
  rhs.head(n) = -c;
  rhs.tail(k) = d;
  const Vec sol = K.completeOrthogonalDecomposition().solve(rhs);
  return sol.head(n);
}

// Central-difference gradient of a scalar oracle; test-side verification.
template <typename F>
Vec fd_gradient(F&& value_of, const Vec& x, double step = 1e-6) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    g[i] = (value_of(xp) - value_of(xm)) / (2 * step);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return g;
}

// Newton refinement of the KKT system at a fixed active set, with a
// finite-difference Jacobian of the residual. Independent verification of
// converged iterates; unknowns are (x, λ, μ_active).
struct KktRefineResult {
  bool ok = false;
  Vec x;
  Vec lambda;
  Vec mu;  // stacked
  double residual = kInf;
};

inline KktRefineResult kkt_refine(const Problem& problem, const Vec& x0,
                                  const Vec& lambda0, const Vec& mu0,
                                  const std::vector<Eigen::Index>& active) {
  const auto n = problem.n;
  const auto l = problem.l;
  const auto a = static_cast<Eigen::Index>(active.size());

  auto residual = [&](const Vec& v) {
    const Vec x = v.head(n);
    const Vec lambda = v.segment(n, l);
    const Vec mu_act = v.tail(a);
    const EvalResult ev = eval(problem, x);
    Vec grad = ev.grad_f;
    if (l > 0) grad.noalias() += ev.jac_h.transpose() * lambda;
    for (Eigen::Index t = 0; t < a; ++t)
      problem.omega.add_r_grad(active[static_cast<std::size_t>(t)], mu_act[t],
                               grad);
    Vec out(n + l + a);
    out.head(n) = grad;
    out.segment(n, l) = ev.h;
    for (Eigen::Index t = 0; t < a; ++t)
      out[n + l + t] =
          problem.omega.r_value(active[static_cast<std::size_t>(t)], x);
    return out;
  };

  Vec v(n + l + a);
  v.head(n) = x0;
  v.segment(n, l) = lambda0;
  for (Eigen::Index t = 0; t < a; ++t)
    v[n + l + t] = mu0[active[static_cast<std::size_t>(t)]];

  KktRefineResult res;
  for (int iter = 0; iter < 50; ++iter) {
    const Vec F = residual(v);
    res.residual = F.lpNorm<Eigen::Infinity>();
    if (res.residual <= 1e-12) break;
    const auto dim = v.size();
    Mat J(F.size(), dim);
    const double step = 1e-7;
    Vec vp = v, vm = v;
    for (Eigen::Index i = 0; i < dim; ++i) {
      vp[i] = v[i] + step;
      vm[i] = v[i] - step;
      J.col(i) = (residual(vp) - residual(vm)) / (2 * step);
      vp[i] = v[i];
      vm[i] = v[i];
    }
    const Vec dv = J.completeOrthogonalDecomposition().solve(-F);
    v += dv;
    if (dv.lpNorm<Eigen::Infinity>() <= 1e-14 * (1 + v.lpNorm<Eigen::Infinity>()))
      break;
  }
  res.ok = res.residual <= 1e-9;
  res.x = v.head(n);
  res.lambda = v.segment(n, l);
  res.mu = Vec::Zero(problem.omega.stacked_size());
  for (Eigen::Index t = 0; t < a; ++t)
    res.mu[active[static_cast<std::size_t>(t)]] = v[n + l + t];
  return res;
}

}  // namespace npasa::testing
