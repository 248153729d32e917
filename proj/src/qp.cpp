#include "npasa/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>

namespace npasa {

namespace {

constexpr double kStepTol = 1e-12;
constexpr double kDualTol = 1e-11;
constexpr double kTieTol = 1e-9;

struct ActiveSetSolver {
  const Mat& H;
  const Vec& g;
  const Polyhedron& poly;
  Eigen::LLT<Mat> hllt;
  Vec hinv_g;

  std::vector<WorkItem> items;
  std::vector<bool> permanent;  // equality rows / fixed variables
  std::vector<bool> row_in_ws;  // per A-row
  std::vector<bool> box_in_ws;  // per variable
  Mat hinv_ct;                  // n x w, columns H⁻¹ n_k
  Eigen::LLT<Mat> kllt;         // of C H⁻¹ Cᵀ
  Vec rhs_d;

  ActiveSetSolver(const Mat& H_in, const Vec& g_in, const Polyhedron& poly_in)
      : H(H_in), g(g_in), poly(poly_in) {
    hllt.compute(H);
    if (hllt.info() != Eigen::Success)
      throw std::invalid_argument("solve_qp: H is not positive definite");
    hinv_g = hllt.solve(g);
    row_in_ws.assign(static_cast<std::size_t>(poly.m()), false);
    box_in_ws.assign(static_cast<std::size_t>(poly.n()), false);
  }

  Vec normal(const WorkItem& it) const {
    Vec v = Vec::Zero(poly.n());
    switch (it.kind) {
      case WorkItem::Kind::RowLo:
      case WorkItem::Kind::RowHi:
        v = poly.A().row(it.index).transpose();
        break;
      case WorkItem::Kind::BoxLo:
      case WorkItem::Kind::BoxHi:
        v[it.index] = 1.0;
        break;
    }
    return v;
  }

  double rhs(const WorkItem& it) const {
    switch (it.kind) {
      case WorkItem::Kind::RowLo:
        return poly.bl()[it.index];
      case WorkItem::Kind::RowHi:
        return poly.bu()[it.index];
      case WorkItem::Kind::BoxLo:
        return poly.lo()[it.index];
      default:
        return poly.hi()[it.index];
    }
  }

  bool refactor() {
    const auto w = static_cast<Eigen::Index>(items.size());
    hinv_ct.resize(poly.n(), w);
    rhs_d.resize(w);
    Mat K(w, w);
    Mat normals(poly.n(), w);
    for (Eigen::Index k = 0; k < w; ++k) {
      normals.col(k) = normal(items[static_cast<std::size_t>(k)]);
      rhs_d[k] = rhs(items[static_cast<std::size_t>(k)]);
    }
    if (w > 0) {
      hinv_ct = hllt.solve(normals);
      K.noalias() = normals.transpose() * hinv_ct;
      kllt.compute(K);
      if (kllt.info() != Eigen::Success) return false;
      // Guard against near-dependent working sets that LLT lets through.
      const Vec diag = kllt.matrixLLT().diagonal();
      if (diag.minCoeff() <= 1e-13 * std::max(1.0, diag.maxCoeff()))
        return false;
    }
    return true;
  }

  void mark(const WorkItem& it, bool value) {
    if (it.kind == WorkItem::Kind::RowLo || it.kind == WorkItem::Kind::RowHi)
      row_in_ws[static_cast<std::size_t>(it.index)] = value;
    else
      box_in_ws[static_cast<std::size_t>(it.index)] = value;
  }

  bool try_add(const WorkItem& it, bool perm) {
    items.push_back(it);
    permanent.push_back(perm);
    if (!refactor()) {
      items.pop_back();
      permanent.pop_back();
      refactor();
      return false;
    }
    mark(it, true);
    return true;
  }

  void drop(std::size_t k) {
    mark(items[k], false);
    items.erase(items.begin() + static_cast<std::ptrdiff_t>(k));
    permanent.erase(permanent.begin() + static_cast<std::ptrdiff_t>(k));
    refactor();
  }

  // EQP on the current working set: min ½xᵀHx + gᵀx s.t. n_kᵀx = d_k.
  void solve_eqp(Vec& x_eqp, Vec& nu) const {
    const auto w = static_cast<Eigen::Index>(items.size());
    if (w == 0) {
      x_eqp = -hinv_g;
      nu.resize(0);
      return;
    }
    Vec rhs_k = rhs_d;
    for (Eigen::Index k = 0; k < w; ++k)
      rhs_k[k] += normal(items[static_cast<std::size_t>(k)]).dot(hinv_g);
    nu = kllt.solve(rhs_k);
    x_eqp = hinv_ct * nu - hinv_g;
  }

  double signed_dual(std::size_t k, const Vec& nu) const {
    const WorkItem& it = items[k];
    const double v = nu[static_cast<Eigen::Index>(k)];
    return (it.kind == WorkItem::Kind::RowLo || it.kind == WorkItem::Kind::BoxLo)
               ? v
               : -v;
  }

  // Largest t in [0,1] keeping x + t p feasible; returns the blocker if t<1.
  double ratio_test(const Vec& x, const Vec& p,
                    std::optional<WorkItem>& blocker) const {
    double t = 1.0;
    double best_rate = 0.0;
    blocker.reset();
    auto consider = [&](const WorkItem& it, double value, double rate,
                        double bound) {
      // Moving toward `bound` at speed `rate` > 0; distance bound − value.
      if (rate <= 1e-13 * (1.0 + std::abs(value))) return;
      const double tj = std::max(0.0, (bound - value) / rate);
      if (tj < t - kTieTol * std::max(1.0, t) ||
          (tj <= t + kTieTol * std::max(1.0, t) && rate > best_rate)) {
        if (tj < t) t = tj;
        best_rate = rate;
        blocker = it;
      }
    };
    for (Eigen::Index j = 0; j < poly.m(); ++j) {
      if (row_in_ws[static_cast<std::size_t>(j)]) continue;
      const double v = poly.A().row(j).dot(x);
      const double dv = poly.A().row(j).dot(p);
      if (dv > 0 && poly.bu()[j] < kInf)
        consider({WorkItem::Kind::RowHi, j}, v, dv, poly.bu()[j]);
      if (dv < 0 && poly.bl()[j] > -kInf)
        consider({WorkItem::Kind::RowLo, j}, -v, -dv, -poly.bl()[j]);
    }
    for (Eigen::Index i = 0; i < poly.n(); ++i) {
      if (box_in_ws[static_cast<std::size_t>(i)]) continue;
      if (p[i] > 0 && poly.hi()[i] < kInf)
        consider({WorkItem::Kind::BoxHi, i}, x[i], p[i], poly.hi()[i]);
      if (p[i] < 0 && poly.lo()[i] > -kInf)
        consider({WorkItem::Kind::BoxLo, i}, -x[i], -p[i], -poly.lo()[i]);
    }
    if (t >= 1.0) blocker.reset();
    return std::min(t, 1.0);
  }

  bool active_at(const WorkItem& it, const Vec& x, double tol) const {
    double value;
    if (it.kind == WorkItem::Kind::RowLo || it.kind == WorkItem::Kind::RowHi)
      value = poly.A().row(it.index).dot(x);
    else
      value = x[it.index];
    return std::abs(value - rhs(it)) <= tol * (1.0 + std::abs(rhs(it)));
  }

  QpResult run(Vec x, const std::vector<WorkItem>* warm) {
    // Equality rows and fixed variables are held active throughout.
    for (Eigen::Index j = 0; j < poly.m(); ++j)
      if (poly.bl()[j] == poly.bu()[j]) try_add({WorkItem::Kind::RowLo, j}, true);
    for (Eigen::Index i = 0; i < poly.n(); ++i)
      if (poly.lo()[i] == poly.hi()[i]) try_add({WorkItem::Kind::BoxLo, i}, true);
    if (warm) {
      for (const WorkItem& it : *warm) {
        if (it.kind == WorkItem::Kind::RowLo || it.kind == WorkItem::Kind::RowHi) {
          if (it.index >= poly.m() || row_in_ws[static_cast<std::size_t>(it.index)])
            continue;
        } else {
          if (it.index >= poly.n() || box_in_ws[static_cast<std::size_t>(it.index)])
            continue;
        }
        if (std::abs(rhs(it)) == kInf) continue;
        if (active_at(it, x, 1e-8)) try_add(it, false);
      }
    }

    const int max_iter = 100 * static_cast<int>(poly.n() + poly.m() + 10);
    QpResult res;
    Vec x_eqp, nu;
    for (int iter = 0; iter < max_iter; ++iter) {
      solve_eqp(x_eqp, nu);
      const Vec p = x_eqp - x;
      if (p.lpNorm<Eigen::Infinity>() <=
          kStepTol * (1.0 + x_eqp.lpNorm<Eigen::Infinity>())) {
        // At the working-set minimizer; check dual signs.
        std::size_t worst = items.size();
        double worst_val = -kDualTol;
        for (std::size_t k = 0; k < items.size(); ++k) {
          if (permanent[k]) continue;
          const double s = signed_dual(k, nu);
          if (s < worst_val) {
            worst_val = s;
            worst = k;
          }
        }
        if (worst == items.size()) {
          res.x = x_eqp;
          res.iterations = iter + 1;
          extract_duals(res, nu);
          return res;
        }
        drop(worst);
        continue;
      }
      std::optional<WorkItem> blocker;
      const double t = ratio_test(x, p, blocker);
      if (!blocker) {
        x = x_eqp;
        continue;
      }
      x += t * p;
      // Pin box blockers to the bound exactly.
      if (blocker->kind == WorkItem::Kind::BoxLo)
        x[blocker->index] = poly.lo()[blocker->index];
      else if (blocker->kind == WorkItem::Kind::BoxHi)
        x[blocker->index] = poly.hi()[blocker->index];
      if (!try_add(*blocker, false))
        throw std::runtime_error("solve_qp: dependent blocking constraint");
    }
    throw std::runtime_error("solve_qp: iteration limit reached");
  }

  void extract_duals(QpResult& res, const Vec& nu) const {
    res.pi = Vec::Zero(poly.m());
    res.ups_lo = Vec::Zero(poly.n());
    res.ups_hi = Vec::Zero(poly.n());
    res.working_set = items;
    res.working_duals = nu;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const WorkItem& it = items[k];
      const double v = nu[static_cast<Eigen::Index>(k)];
      switch (it.kind) {
        case WorkItem::Kind::RowLo:
        case WorkItem::Kind::RowHi:
          res.pi[it.index] = v;
          break;
        case WorkItem::Kind::BoxLo:
          res.ups_lo[it.index] = std::max(v, 0.0);
          break;
        case WorkItem::Kind::BoxHi:
          res.ups_hi[it.index] = std::max(-v, 0.0);
          break;
      }
    }
  }
};

Vec phase1_start(const Polyhedron& poly, const Vec& guess) {
  Vec y0 = guess.size() == poly.n() ? poly.clamp_box(guess)
                                    : poly.clamp_box(Vec::Zero(poly.n()));
  for (Eigen::Index i = 0; i < poly.n(); ++i)
    if (!std::isfinite(y0[i])) y0[i] = 0.0;
  return poly.clamp_box(y0);
}

}  // namespace

Vec feasible_point(const Polyhedron& poly, const Vec& guess) {
  Vec y = phase1_start(poly, guess);
  if (poly.m() == 0) return y;
  if (poly.violation(y) <= 1e-12) return y;

  // Phase 1 in (y, s): min ½ε‖y − y0‖² + ½‖s‖² s.t. bl ≤ Ay + s ≤ bu, y box.
  const auto n = poly.n();
  const auto m = poly.m();
  Mat A_ext(m, n + m);
  A_ext.leftCols(n) = poly.A();
  A_ext.rightCols(m) = Mat::Identity(m, m);
  Vec lo_ext(n + m), hi_ext(n + m);
  lo_ext.head(n) = poly.lo();
  hi_ext.head(n) = poly.hi();
  lo_ext.tail(m).setConstant(-kInf);
  hi_ext.tail(m).setConstant(kInf);
  Polyhedron ext(A_ext, poly.bl(), poly.bu(), lo_ext, hi_ext);

  const double eps_reg = 1e-12;
  Mat H_ext = Mat::Identity(n + m, n + m);
  H_ext.topLeftCorner(n, n) *= eps_reg;
  Vec g_ext(n + m);
  g_ext.head(n) = -eps_reg * y;
  g_ext.tail(m).setZero();

  Vec start(n + m);
  start.head(n) = y;
  const Vec Ay = poly.A() * y;
  for (Eigen::Index j = 0; j < m; ++j)
    start[n + j] = std::min(std::max(Ay[j], poly.bl()[j]), poly.bu()[j]) - Ay[j];

  QpResult res = solve_qp(H_ext, g_ext, ext, &start, nullptr);
  const Vec s = res.x.tail(m);
  if (s.lpNorm<Eigen::Infinity>() > 1e-7)
    throw InfeasibleError("polyhedron infeasible: minimal slack norm " +
                              std::to_string(s.norm()),
                          s, s.squaredNorm());

  y = poly.clamp_box(res.x.head(n));
  // Newton cleanup of the residual row violations. Variables that the box
  // clamp would immediately undo are dropped from the correction, so corner
  // cases do not cycle between the rows and the box.
  for (int pass = 0; pass < 40; ++pass) {
    std::vector<Eigen::Index> bad;
    Vec target(m);
    const Vec v = poly.A() * y;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double c = std::min(std::max(v[j], poly.bl()[j]), poly.bu()[j]);
      if (std::abs(v[j] - c) > 1e-14 * (1.0 + std::abs(c))) {
        bad.push_back(j);
        target[j] = c;
      }
    }
    if (bad.empty()) break;
    Mat Av(static_cast<Eigen::Index>(bad.size()), n);
    Vec rv(static_cast<Eigen::Index>(bad.size()));
    for (std::size_t k = 0; k < bad.size(); ++k) {
      Av.row(static_cast<Eigen::Index>(k)) = poly.A().row(bad[k]);
      rv[static_cast<Eigen::Index>(k)] = target[bad[k]] - v[bad[k]];
    }
    Vec delta = Av.completeOrthogonalDecomposition().solve(rv);
    // Freeze bound-active variables that the correction pushes outward.
    std::vector<Eigen::Index> frozen;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lo = y[i] <= poly.lo()[i] && delta[i] < 0;
      const bool at_hi = y[i] >= poly.hi()[i] && delta[i] > 0;
      if (at_lo || at_hi) frozen.push_back(i);
    }
    if (!frozen.empty()) {
      Mat Af = Av;
      for (Eigen::Index i : frozen) Af.col(i).setZero();
      delta = Af.completeOrthogonalDecomposition().solve(rv);
      for (Eigen::Index i : frozen) delta[i] = 0;
    }
    y += delta;
    y = poly.clamp_box(y);
  }
  if (poly.violation(y) > 1e-10)
    throw InfeasibleError("polyhedron feasibility restoration failed", s,
                          s.squaredNorm());
  return y;
}

QpResult solve_qp(const Mat& H, const Vec& g, const Polyhedron& poly,
                  const Vec* start_hint, const std::vector<WorkItem>* warm) {
  Vec x0;
  if (start_hint && start_hint->size() == poly.n() &&
      poly.violation(*start_hint) <= 1e-11) {
    x0 = *start_hint;
  } else {
    x0 = feasible_point(poly, start_hint ? *start_hint : Vec::Zero(poly.n()));
  }
  ActiveSetSolver solver(H, g, poly);
  return solver.run(std::move(x0), warm);
}

}  // namespace npasa
