#pragma once

#include <array>

#include "npasa/qp.hpp"

namespace npasa {

class ReconstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Output of the Euclidean projection onto Ω.
///
/// pi_star follows the row-dual sign convention: π_j > 0 only when row j sits
/// at its lower bound, π_j < 0 only at the upper bound. mu_recon stacks
/// (γ1, γ2, υ1, υ2) against r(x) and satisfies the projection's KKT
/// conditions M.1–M.4.
struct ProjectionResult {
  Vec y_star;
  Vec pi_star;
  std::array<std::vector<Eigen::Index>, 3> active_sets;  // S1, S2, S3
  Vec mu_recon;
  std::vector<WorkItem> working_set;  // warm-start hint for the next solve
};

/// Euclidean projection of x_bar onto the polyhedron, with duals and the
/// reconstructed stacked multiplier. Throws InfeasibleError when Ω = ∅.
ProjectionResult project(const Polyhedron& poly, const Vec& x_bar,
                         const std::vector<WorkItem>* warm = nullptr);

/// Builds the stacked multiplier (γ1, γ2, υ1, υ2) from a valid dual/primal
/// pair of the projection: γ from the signs of π*, υ from the S1/S2/S3 case
/// split on the box. Throws ReconstructionError if the M-condition residual
/// exceeds 1e-6 (a bad dual pair).
Vec reconstruct_multipliers(const Polyhedron& poly, const Vec& x_bar,
                            const Vec& pi_star, const Vec& y_star);

/// Unique minimizer of ½‖w − w̄‖² + (p/2)‖y‖² over
/// {M(w − w̄) + y = c, w ∈ Ω}, computed by eliminating y and solving the
/// strongly convex QP with Hessian I + pMᵀM over Ω.
struct SlackProjectionResult {
  Vec w_p;
  Vec y_p;
  double p;
};
SlackProjectionResult project_with_slack(const Mat& M, const Vec& c,
                                         const Vec& w_bar, double p,
                                         const Polyhedron& poly);

/// Exact projection by enumerating candidate active sets; n + m ≤ 10 only.
/// Test oracle, deliberately independent of the active-set path above.
Vec oracle_project(const Polyhedron& poly, const Vec& x_bar);

/// Indices of stacked constraints with |r_i(x)| ≤ tol.
std::vector<Eigen::Index> active_set(const Polyhedron& poly, const Vec& x,
                                     double tol);

}  // namespace npasa
