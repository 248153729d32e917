#include "npasa/polyproj.hpp"

#include <Eigen/QR>
#include <cmath>

namespace npasa {

namespace {

// Min-norm dual over the full active set at y_star: solve
// min ‖ν‖ s.t. Σ ν_k n_k = y_star − x_bar, then keep it only if the sign
// pattern is valid. Resolves degenerate (non-unique) duals deterministically.
bool min_norm_polish(const Polyhedron& poly, const Vec& x_bar, const Vec& y_star,
                     Vec& pi) {
  struct Entry {
    WorkItem::Kind kind;
    Eigen::Index index;
  };
  std::vector<Entry> entries;
  const double tol = 1e-9;
  const Vec Ay = poly.m() > 0 ? Vec(poly.A() * y_star) : Vec(0);
  for (Eigen::Index j = 0; j < poly.m(); ++j) {
    const bool at_lo =
        poly.bl()[j] > -kInf && std::abs(Ay[j] - poly.bl()[j]) <= tol * (1 + std::abs(poly.bl()[j]));
    const bool at_hi =
        poly.bu()[j] < kInf && std::abs(Ay[j] - poly.bu()[j]) <= tol * (1 + std::abs(poly.bu()[j]));
    if (at_lo)
      entries.push_back({WorkItem::Kind::RowLo, j});
    else if (at_hi)
      entries.push_back({WorkItem::Kind::RowHi, j});
  }
  for (Eigen::Index i = 0; i < poly.n(); ++i) {
    const bool at_lo =
        poly.lo()[i] > -kInf && std::abs(y_star[i] - poly.lo()[i]) <= tol * (1 + std::abs(poly.lo()[i]));
    const bool at_hi =
        poly.hi()[i] < kInf && std::abs(y_star[i] - poly.hi()[i]) <= tol * (1 + std::abs(poly.hi()[i]));
    if (at_lo)
      entries.push_back({WorkItem::Kind::BoxLo, i});
    else if (at_hi)
      entries.push_back({WorkItem::Kind::BoxHi, i});
  }
  if (entries.empty()) {
    pi.setZero();
    return (y_star - x_bar).lpNorm<Eigen::Infinity>() <= 1e-9;
  }

  const auto a = static_cast<Eigen::Index>(entries.size());
  Mat N(poly.n(), a);
  for (Eigen::Index k = 0; k < a; ++k) {
    const Entry& e = entries[static_cast<std::size_t>(k)];
    if (e.kind == WorkItem::Kind::RowLo || e.kind == WorkItem::Kind::RowHi)
      N.col(k) = poly.A().row(e.index).transpose();
    else
      N.col(k) = Vec::Unit(poly.n(), e.index);
  }
  const Vec target = y_star - x_bar;
  const Vec nu = N.completeOrthogonalDecomposition().solve(target);
  if ((N * nu - target).lpNorm<Eigen::Infinity>() >
      1e-9 * (1 + target.lpNorm<Eigen::Infinity>()))
    return false;

  const double sign_tol = 1e-10 * (1 + nu.lpNorm<Eigen::Infinity>());
  Vec pi_new = Vec::Zero(poly.m());
  for (Eigen::Index k = 0; k < a; ++k) {
    const Entry& e = entries[static_cast<std::size_t>(k)];
    const double v = nu[k];
    const bool equality =
        (e.kind == WorkItem::Kind::RowLo || e.kind == WorkItem::Kind::RowHi) &&
        poly.bl()[e.index] == poly.bu()[e.index];
    const bool fixed_var =
        (e.kind == WorkItem::Kind::BoxLo || e.kind == WorkItem::Kind::BoxHi) &&
        poly.lo()[e.index] == poly.hi()[e.index];
    if (!equality && !fixed_var) {
      const bool lower =
          e.kind == WorkItem::Kind::RowLo || e.kind == WorkItem::Kind::BoxLo;
      if ((lower && v < -sign_tol) || (!lower && v > sign_tol)) return false;
    }
    if (e.kind == WorkItem::Kind::RowLo || e.kind == WorkItem::Kind::RowHi)
      pi_new[e.index] = v;
  }
  pi = pi_new;
  return true;
}

}  // namespace

ProjectionResult project(const Polyhedron& poly, const Vec& x_bar,
                         const std::vector<WorkItem>* warm) {
  if (x_bar.size() != poly.n())
    throw std::invalid_argument("project: x_bar has wrong length");
  const Mat H = Mat::Identity(poly.n(), poly.n());
  const Vec g = -x_bar;
  QpResult qp = solve_qp(H, g, poly, &x_bar, warm);

  ProjectionResult res;
  res.y_star = std::move(qp.x);
  res.working_set = std::move(qp.working_set);
  res.pi_star = qp.pi;
  if (!min_norm_polish(poly, x_bar, res.y_star, res.pi_star))
    res.pi_star = qp.pi;  // working-set duals are valid by construction
  res.mu_recon =
      reconstruct_multipliers(poly, x_bar, res.pi_star, res.y_star);

  const double tol = 1e-9;
  for (Eigen::Index i = 0; i < poly.n(); ++i) {
    if (poly.lo()[i] > -kInf &&
        std::abs(res.y_star[i] - poly.lo()[i]) <= tol * (1 + std::abs(poly.lo()[i])))
      res.active_sets[0].push_back(i);
    else if (poly.hi()[i] < kInf &&
             std::abs(res.y_star[i] - poly.hi()[i]) <= tol * (1 + std::abs(poly.hi()[i])))
      res.active_sets[1].push_back(i);
    else
      res.active_sets[2].push_back(i);
  }
  return res;
}

Vec reconstruct_multipliers(const Polyhedron& poly, const Vec& x_bar,
                            const Vec& pi_star, const Vec& y_star) {
  const auto n = poly.n();
  const auto m = poly.m();
  if (pi_star.size() != m || y_star.size() != n || x_bar.size() != n)
    throw std::invalid_argument("reconstruct_multipliers: dimension mismatch");

  Vec mu = Vec::Zero(2 * m + 2 * n);
  // γ1 = max(π*, 0), γ2 = max(−π*, 0).
  for (Eigen::Index j = 0; j < m; ++j) {
    mu[j] = std::max(pi_star[j], 0.0);
    mu[m + j] = std::max(-pi_star[j], 0.0);
  }

  // z = x̄ + Aᵀπ*; the box multipliers absorb the part of z that the clamp
  // removed: υ1 = lo − z on S1, υ2 = z − hi on S2.
  Vec z = x_bar;
  if (m > 0) z.noalias() += poly.A().transpose() * pi_star;
  const double tol = 1e-9;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lo = poly.lo()[i], hi = poly.hi()[i];
    bool s1 = lo > -kInf && std::abs(y_star[i] - lo) <= tol * (1 + std::abs(lo));
    bool s2 = hi < kInf && std::abs(y_star[i] - hi) <= tol * (1 + std::abs(hi));
    if (s1 && s2) {  // fixed variable: pick the side the pressure points to
      if (z[i] <= lo)
        s2 = false;
      else
        s1 = false;
    }
    if (s1)
      mu[2 * m + i] = std::max(lo - z[i], 0.0);
    else if (s2)
      mu[2 * m + n + i] = std::max(z[i] - hi, 0.0);
  }

  // M.1: y* − x̄ − Aᵀπ* − υ1 + υ2 = 0.
  Vec resid = y_star - z;
  resid.noalias() -= mu.segment(2 * m, n);
  resid.noalias() += mu.segment(2 * m + n, n);
  const double scale = 1.0 + x_bar.lpNorm<Eigen::Infinity>() +
                       (m > 0 ? pi_star.lpNorm<Eigen::Infinity>() : 0.0);
  if (resid.lpNorm<Eigen::Infinity>() > 1e-6 * scale)
    throw ReconstructionError(
        "reconstruct_multipliers: stationarity residual " +
        std::to_string(resid.lpNorm<Eigen::Infinity>()));

  // M.4: complementary slackness of the reconstructed blocks.
  double comp = 0;
  for (Eigen::Index i : poly.present_rows())
    comp = std::max(comp, std::abs(mu[i] * poly.r_value(i, y_star)));
  if (comp > 1e-6 * scale)
    throw ReconstructionError(
        "reconstruct_multipliers: complementarity residual " +
        std::to_string(comp));
  return mu;
}

SlackProjectionResult project_with_slack(const Mat& M, const Vec& c,
                                         const Vec& w_bar, double p,
                                         const Polyhedron& poly) {
  if (p < 1.0) throw std::invalid_argument("project_with_slack: p must be >= 1");
  const auto n = poly.n();
  const auto meq = M.rows();
  if (M.cols() != n || c.size() != meq || w_bar.size() != n)
    throw std::invalid_argument("project_with_slack: dimension mismatch");

  // Work in the √p-scaled slack u = √p·y, which turns the problem into a
  // plain projection of (w̄, 0) onto
  //   {(w, u) : M(w − w̄) + u/√p = c, w ∈ Ω}
  // and keeps the Hessian the identity no matter how large p gets.
  const double sqrt_p = std::sqrt(p);
  Mat A_ext(meq + poly.m(), n + meq);
  A_ext.setZero();
  A_ext.topLeftCorner(meq, n) = M;
  A_ext.topRightCorner(meq, meq) =
      (1.0 / sqrt_p) * Mat::Identity(meq, meq);
  Vec bl_ext(meq + poly.m()), bu_ext(meq + poly.m());
  const Vec rhs = c + M * w_bar;
  bl_ext.head(meq) = rhs;
  bu_ext.head(meq) = rhs;
  if (poly.m() > 0) {
    A_ext.bottomLeftCorner(poly.m(), n) = poly.A();
    bl_ext.tail(poly.m()) = poly.bl();
    bu_ext.tail(poly.m()) = poly.bu();
  }
  Vec lo_ext(n + meq), hi_ext(n + meq);
  lo_ext.head(n) = poly.lo();
  hi_ext.head(n) = poly.hi();
  lo_ext.tail(meq).setConstant(-kInf);
  hi_ext.tail(meq).setConstant(kInf);
  const Polyhedron ext(A_ext, bl_ext, bu_ext, lo_ext, hi_ext);

  Vec target(n + meq);
  target.head(n) = w_bar;
  target.tail(meq).setZero();
  // Feasible start: clamp w̄ into the box and absorb the residual into u.
  Vec start(n + meq);
  start.head(n) = feasible_point(poly, w_bar);
  start.tail(meq) = sqrt_p * (c - M * (start.head(n) - w_bar));

  const Mat H = Mat::Identity(n + meq, n + meq);
  QpResult qp = solve_qp(H, -target, ext, &start, nullptr);
  SlackProjectionResult res;
  res.w_p = qp.x.head(n);
  res.y_p = c - M * (res.w_p - w_bar);
  res.p = p;
  return res;
}

Vec oracle_project(const Polyhedron& poly, const Vec& x_bar) {
  const auto n = poly.n();
  const auto m = poly.m();
  if (n + m > 10)
    throw std::invalid_argument("oracle_project: n + m exceeds size limit 10");

  std::vector<Eigen::Index> rows = poly.present_rows();
  const auto s = static_cast<Eigen::Index>(rows.size());

  // Builds the equality system for one candidate active subset and solves
  // the minimum-distance problem restricted to it.
  auto candidate = [&](const std::vector<Eigen::Index>& subset,
                       Vec& y) -> bool {
    const auto k = static_cast<Eigen::Index>(subset.size());
    if (k == 0) {
      y = x_bar;
      return true;
    }
    Mat C(k, n);
    Vec d(k);
    for (Eigen::Index t = 0; t < k; ++t) {
      const Eigen::Index i = subset[static_cast<std::size_t>(t)];
      Vec grad = Vec::Zero(n);
      poly.add_r_grad(i, 1.0, grad);
      // r_i(y) = 0 ⇔ ∇r_i · y = ∇r_i · x − r_i(x) for any reference x.
      C.row(t) = grad.transpose();
      d[t] = grad.dot(x_bar) - poly.r_value(i, x_bar);
    }
    Mat CCt = C * C.transpose();
    const Vec alpha =
        CCt.completeOrthogonalDecomposition().solve(Vec(d - C * x_bar));
    y = x_bar + C.transpose() * alpha;
    return (C * y - d).lpNorm<Eigen::Infinity>() <=
           1e-9 * (1 + d.lpNorm<Eigen::Infinity>());
  };

  bool found = false;
  double best = kInf;
  Vec best_y;
  std::vector<Eigen::Index> subset;
  // All candidate active sets of size at most n; a maximal independent
  // subset of the true active set always appears among them.
  auto enumerate = [&](auto&& self, Eigen::Index start) -> void {
    Vec y;
    if (candidate(subset, y) && poly.violation(y) <= 1e-8) {
      const double dist = (y - x_bar).squaredNorm();
      if (dist < best - 1e-15) {
        best = dist;
        best_y = y;
        found = true;
      }
    }
    if (static_cast<Eigen::Index>(subset.size()) >= std::min(n, s)) return;
    for (Eigen::Index t = start; t < s; ++t) {
      subset.push_back(rows[static_cast<std::size_t>(t)]);
      self(self, t + 1);
      subset.pop_back();
    }
  };
  enumerate(enumerate, 0);
  if (!found)
    throw InfeasibleError("oracle_project: no feasible candidate", Vec(), 0.0);
  return best_y;
}

std::vector<Eigen::Index> active_set(const Polyhedron& poly, const Vec& x,
                                     double tol) {
  std::vector<Eigen::Index> act;
  for (Eigen::Index i : poly.present_rows())
    if (std::abs(poly.r_value(i, x)) <= tol) act.push_back(i);
  return act;
}

}  // namespace npasa
