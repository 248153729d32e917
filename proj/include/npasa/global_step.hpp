#pragma once

#include "npasa/pco.hpp"

namespace npasa {

struct GsConfig {
  double lambda_bound = 1e6;  // safeguard box [−λ̄, λ̄]
  double q = 1.0;             // penalty for this call
  PcoConfig pco;
};

struct GsResult {
  Iterate iterate;       // (x', λ', μ')
  bool converged = false;
  double em0 = 0;        // multiplier error at exit, projection-based
  int inner_iterations = 0;
  bool lambda_clamped = false;
  Vec lambda_bar;        // the safeguarded multiplier actually used
  std::string stop_reason;
};

/// Componentwise clamp of λ into [−bound, bound].
Vec safeguard_lambda(const Vec& lambda, double bound);

/// One safeguarded multiplier-method step:
///   x' = argmin{L_q(x, λ̄) : x ∈ Ω},  λ' = λ̄ + 2q h(x'),
///   μ' = reconstruction from the final stopping-test projection.
GsResult run_gs(const Problem& problem, const Iterate& it, const GsConfig& cfg);

}  // namespace npasa
