#pragma once

#include <deque>
#include <functional>

#include "npasa/errors.hpp"
#include "npasa/polyproj.hpp"

namespace npasa {

class NumericalStallError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// x ↦ (F(x), ∇F(x)) for the polyhedral-constrained subproblem.
using GradOracle = std::function<void(const Vec&, double&, Vec&)>;

struct PcoConfig {
  double theta = 0.5;        // branch factor, decays by gamma
  double gamma = 0.5;        // theta decay
  double epsilon = 1e-8;     // stopping tolerance on the driver metric
  double delta_armijo = 1e-4;
  int eta_memory = 8;        // nonmonotone reference window M
  double alpha_min = 1e-8, alpha_max = 1e8;
  double bt_factor = 0.5;    // backtracking factor sigma
  int max_iters = 5000;
  bool alt_stopping = false;    // use min{eps, alt_theta*Ec(x)} in aug-lag mode
  double alt_theta = 0.5;
  double undecided_kappa = 1.0;  // band width of the undecided set
  double active_tol = 1e-9;
};

enum class PcoPhase : char { One = '1', Two = '2' };

struct PcoStatus {
  bool converged = false;
  Vec x;
  double final_metric = 0;  // Em0 (aug-lag mode) or E_PASA at x
  int iterations = 0;
  std::vector<PcoPhase> phase_log;
  ProjectionResult last_projection;  // of x - g(x), made for the stopping test
  Vec last_grad;                     // g at x
  Vec tested_x;                      // point the stopping test was taken at
  double theta_final = 0;
  std::string stop_reason;
};

/// Inner-solver state shared by the two step kinds. f_memory holds the last
/// M accepted objective values; the nonmonotone reference is its maximum.
struct PcoState {
  Vec x;
  double f = 0;
  Vec g;
  std::deque<double> f_memory;
  double bb_alpha = 1.0;
};

PcoState make_pco_state(const GradOracle& oracle, const Vec& x);

/// Global and local inner error estimators at x ∈ Ω:
///   E = ‖y(x,1) − x‖ with y(x,1) = P_Ω(x − g(x)), and e = ‖g^A(x)‖ where
///   g^A is the projection of g onto the null space of the active rows.
struct PasaErrors {
  double E = 0;
  double e = 0;
  Vec y1;
  ProjectionResult proj;
};
PasaErrors pasa_errors(const GradOracle& oracle, const Polyhedron& poly,
                       const Vec& x, double active_tol = 1e-9);

/// Multiplier error of the augmented-Lagrangian problem computed from one
/// projection, without forming the inequality multiplier:
///   −g(x)ᵀ(y(x,α) − x) + (1/α² − 1/α)‖y(x,α) − x‖².
double em0_via_projection(const GradOracle& oracle, const Polyhedron& poly,
                          const Vec& x, double alpha);

/// One nonmonotone gradient-projection step with BB steplength and
/// backtracking. Throws NumericalStallError after 60 failed halvings.
PcoState ngpa_step(const GradOracle& oracle, const Polyhedron& poly,
                   const PcoState& state, const PcoConfig& cfg,
                   const std::vector<WorkItem>* warm = nullptr);

/// Conjugate-gradient descent restricted to the active face, truncated at
/// the first blocking constraint. Monotone in the objective.
struct LcoOutcome {
  PcoState state;
  bool blocked = false;
};
LcoOutcome lco_step(const GradOracle& oracle, const Polyhedron& poly,
                    const PcoState& state, const PcoConfig& cfg);

/// Two-phase driver for min L_q(x, λ̄) over Ω with the Em0-based stopping
/// test; returns the final stopping-test projection so the caller can read
/// off the reconstructed multiplier.
PcoStatus solve_pco_aug_lag(const Problem& problem, const Vec& lambda_bar,
                            double q, const Vec& x0, const PcoConfig& cfg);

/// Same driver with the E_PASA ≤ ε stopping metric, for generic objectives.
PcoStatus solve_pco_generic(const GradOracle& oracle, const Polyhedron& poly,
                            const Vec& x0, const PcoConfig& cfg);

}  // namespace npasa
