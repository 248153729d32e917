#include "doctest.h"
#include "support.hpp"

#include "npasa/global_step.hpp"

using namespace npasa;
using namespace npasa::testing;

TEST_CASE("safeguard_lambda") {
  Vec lambda(2);
  lambda << 5.0, -0.2;
  const Vec clamped = safeguard_lambda(lambda, 1.0);
  CHECK(clamped[0] == 1.0);
  CHECK(clamped[1] == -0.2);

  // identity when already inside the box
  Vec small(3);
  small << 0.5, -0.9, 0.0;
  CHECK((safeguard_lambda(small, 1.0) - small).norm() == 0.0);

  std::mt19937 rng(307);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec l = random_vec(rng, 4, -100.0, 100.0);
    const double bound = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    CHECK(safeguard_lambda(l, bound).lpNorm<Eigen::Infinity>() <= bound);
  }
  CHECK_THROWS_AS(safeguard_lambda(small, 0.0), std::invalid_argument);
}

TEST_CASE("run_gs on P1 lands near the multiplier-method fixed point") {
  const Problem p1 = make_p1();
  GsConfig cfg;
  cfg.q = 10.0;
  cfg.pco.epsilon = 1e-8;

  const Iterate start{Vec::Zero(2), Vec::Zero(1),
                      Vec::Zero(p1.omega.stacked_size())};
  const GsResult res = run_gs(p1, start, cfg);
  REQUIRE(res.converged);
  CHECK(res.em0 <= 1e-8);
  CHECK((res.iterate.x - Vec::Constant(2, 0.5)).norm() <= 2e-2);

  // λ' − λ̄ = 2q h(x') exactly
  const Vec h = eval(p1, res.iterate.x).h;
  CHECK((res.iterate.lambda - res.lambda_bar - 2.0 * cfg.q * h)
            .lpNorm<Eigen::Infinity>() == 0.0);

  // exit contract: Em1 ≤ Em0 ≤ ε on the returned iterate
  const ErrorReport rep = error_report(p1, res.iterate);
  REQUIRE(rep.em0.has_value());
  CHECK(rep.em1 <= *rep.em0 + 1e-12);
  CHECK(*rep.em0 <= 1e-8 + 1e-10);
}

TEST_CASE("run_gs from an exact KKT start is a fixed point") {
  const Problem p1 = make_p1();
  const KktPoint kkt = *p1.known_kkt;
  GsConfig cfg;
  cfg.q = 5.0;
  cfg.pco.epsilon = 1e-10;
  const GsResult res = run_gs(p1, {kkt.x, kkt.lambda, kkt.mu}, cfg);
  REQUIRE(res.converged);
  // h = 0 at the start, so the multiplier update is the identity
  CHECK((res.iterate.x - kkt.x).norm() <= 1e-6);
  CHECK((res.iterate.lambda - kkt.lambda).norm() <= 1e-6);
}

TEST_CASE("run_gs clamps an out-of-bound multiplier first") {
  const Problem p1 = make_p1();
  GsConfig cfg;
  cfg.q = 10.0;
  cfg.lambda_bound = 1.0;
  cfg.pco.epsilon = 1e-8;
  const Iterate start{Vec::Zero(2), Vec::Constant(1, 50.0),
                      Vec::Zero(p1.omega.stacked_size())};
  const GsResult res = run_gs(p1, start, cfg);
  CHECK(res.lambda_clamped);
  CHECK(res.lambda_bar[0] == 1.0);
}

TEST_CASE("run_gs on P2 with the exact multiplier reaches the minimizer") {
  const Problem p2 = make_p2();
  GsConfig cfg;
  cfg.q = 10.0;
  cfg.pco.epsilon = 1e-10;
  Vec x0(2);
  x0 << 1.3, 0.2;
  const GsResult res = run_gs(
      p2, {x0, Vec::Zero(1), Vec::Zero(p2.omega.stacked_size())}, cfg);
  REQUIRE(res.converged);
  // λ* = 0 for P2, so one global step solves it to high accuracy
  CHECK((res.iterate.x - p2.known_kkt->x).norm() <= 1e-4);
  // μ' is nonnegative and complementary at the projection point
  CHECK(res.iterate.mu.minCoeff() >= -1e-12);
  const ErrorReport rep = error_report(p2, res.iterate);
  CHECK(rep.kkt_residuals.comp_inf() <= 1e-6);
}
