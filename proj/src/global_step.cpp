#include "npasa/global_step.hpp"

namespace npasa {

Vec safeguard_lambda(const Vec& lambda, double bound) {
  if (bound <= 0) throw std::invalid_argument("safeguard_lambda: bound <= 0");
  return lambda.cwiseMax(-bound).cwiseMin(bound);
}

GsResult run_gs(const Problem& problem, const Iterate& it, const GsConfig& cfg) {
  if (cfg.q < 1.0) throw std::invalid_argument("run_gs: q must be >= 1");
  GsResult res;
  res.lambda_bar = safeguard_lambda(it.lambda, cfg.lambda_bound);
  res.lambda_clamped = (res.lambda_bar - it.lambda).lpNorm<Eigen::Infinity>() > 0;

  PcoStatus status =
      solve_pco_aug_lag(problem, res.lambda_bar, cfg.q, it.x, cfg.pco);

  const Vec& x_prime = status.x;
  const EvalResult ev = eval(problem, x_prime);

  // μ' comes from the last stopping-test projection; redo it only if that
  // test predates the final point.
  ProjectionResult proj = std::move(status.last_projection);
  double em0 = status.final_metric;
  if ((status.tested_x - x_prime).lpNorm<Eigen::Infinity>() != 0.0) {
    GradOracle oracle = [&](const Vec& x, double& f, Vec& g) {
      auto [value, grad] = aug_lagrangian(problem, x, res.lambda_bar, cfg.q);
      f = value;
      g = std::move(grad);
    };
    PasaErrors pe = pasa_errors(oracle, problem.omega, x_prime);
    proj = std::move(pe.proj);
    em0 = em0_via_projection(oracle, problem.omega, x_prime, 1.0);
  }

  res.iterate.x = x_prime;
  res.iterate.lambda = res.lambda_bar + 2.0 * cfg.q * ev.h;
  res.iterate.mu = proj.mu_recon;
  res.converged = status.converged;
  res.em0 = em0;
  res.inner_iterations = status.iterations;
  res.stop_reason = status.stop_reason;
  return res;
}

}  // namespace npasa
