#pragma once

#include <array>
#include <optional>

#include "npasa/problem.hpp"

namespace npasa {

/// Primal-dual iterate. mu is aligned with the stacked constraint vector
/// r(x) of length 2m+2n; components for absent rows stay frozen at 0.
struct Iterate {
  Vec x;
  Vec lambda;
  Vec mu;
};

class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Residuals of the five KKT conditions:
/// ‖∇L‖∞, ‖h‖∞, ‖max(r,0)‖∞, ‖max(−μ,0)‖∞, max_i |r_i μ_i|.
struct KktResiduals {
  std::array<double, 5> values{};
  double grad_inf() const { return values[0]; }
  double h_inf() const { return values[1]; }
  double r_pos_inf() const { return values[2]; }
  double mu_neg_inf() const { return values[3]; }
  double comp_inf() const { return values[4]; }
  double max() const;
  bool pass(double tol) const { return max() <= tol; }
};

/// The five error estimators at an iterate. e0 and em0 are defined only on
/// D0 = {x ∈ Ω, μ ≥ 0}; off D0 they are left empty.
///
///   em0 = ‖∇L‖² − μᵀr(x)            em1 = ‖∇L‖² + ‖Φ(−r(x), μ)‖²
///   ec  = ‖h(x)‖²                    e_j = sqrt(em_j + ec)
struct ErrorReport {
  std::optional<double> e0;
  std::optional<double> em0;
  double e1 = 0;
  double em1 = 0;
  double ec = 0;
  KktResiduals kkt_residuals;
};

/// ∇f + ∇hᵀλ + ∇rᵀμ as a column vector (absent rows contribute nothing).
Vec lagrangian_grad(const Problem& problem, const Iterate& it);

/// Componentwise minimum Φ_i = min{u_i, v_i}.
Vec phi_min(const Vec& u, const Vec& v);

ErrorReport error_report(const Problem& problem, const Iterate& it);

/// Value and gradient of L_q(x, λ̄) = f + λ̄ᵀh + q‖h‖².
std::pair<double, Vec> aug_lagrangian(const Problem& problem, const Vec& x,
                                      const Vec& lambda_bar, double q);

/// Value and gradient of L_p(z, ν) = f + νᵀh + p‖h(z) − h(z_ref)‖².
std::pair<double, Vec> penalized_lagrangian(const Problem& problem, const Vec& z,
                                            const Vec& nu, double p,
                                            const Vec& z_ref);

KktResiduals kkt_check(const Problem& problem, const Iterate& it);
inline bool kkt_pass(const Problem& problem, const Iterate& it, double tol) {
  return kkt_check(problem, it).pass(tol);
}

}  // namespace npasa
