#include "doctest.h"
#include "support.hpp"

#include "npasa/pco.hpp"

using namespace npasa;
using namespace npasa::testing;

namespace {

// ½xᵀQx + cᵀx as a gradient oracle.
GradOracle quadratic_oracle(const Mat& Q, const Vec& c) {
  return [Q, c](const Vec& x, double& f, Vec& g) {
    g = Q * x + c;
    f = 0.5 * x.dot(Q * x) + c.dot(x);
  };
}

GradOracle p1_auglag_oracle(const Problem& p1, const Vec& lb, double q) {
  return [&p1, lb, q](const Vec& x, double& f, Vec& g) {
    auto [value, grad] = aug_lagrangian(p1, x, lb, q);
    f = value;
    g = std::move(grad);
  };
}

}  // namespace

TEST_CASE("pasa_errors") {
  const Polyhedron box = Polyhedron::box(Vec::Zero(2), Vec::Ones(2));
  Mat Q = Mat::Identity(2, 2);

  SUBCASE("stationary point has zero global error") {
    Vec t(2);
    t << 0.3, 0.6;  // interior minimizer of ½‖x−t‖²
    const PasaErrors pe = pasa_errors(quadratic_oracle(Q, -t), box, t);
    CHECK(pe.E <= 1e-12);
  }
  SUBCASE("no active rows: local error equals the gradient norm") {
    Vec x(2);
    x << 0.4, 0.5;
    Vec t(2);
    t << 5, 5;
    const PasaErrors pe = pasa_errors(quadratic_oracle(Q, -t), box, x);
    double f;
    Vec g;
    quadratic_oracle(Q, -t)(x, f, g);
    CHECK(pe.e == doctest::Approx(g.norm()));
    CHECK(pe.e <= g.norm() + 1e-12);
  }
  SUBCASE("local error never exceeds the gradient norm") {
    std::mt19937 rng(211);
    for (int trial = 0; trial < 30; ++trial) {
      const Polyhedron poly = random_polyhedron(rng, 3, 2);
      const Vec x = project(poly, random_vec(rng, 3)).y_star;
      const Vec c = random_vec(rng, 3);
      const PasaErrors pe = pasa_errors(quadratic_oracle(Mat::Identity(3, 3), c),
                                        poly, x);
      double f;
      Vec g;
      quadratic_oracle(Mat::Identity(3, 3), c)(x, f, g);
      CHECK(pe.e <= g.norm() + 1e-10);
    }
  }
}

TEST_CASE("em0_via_projection identity and sandwich") {
  const Problem p1 = make_p1();
  std::mt19937 rng(223);

  SUBCASE("stationary point gives zero") {
    // analytic minimizer of L_q(·,0), q = 10, over free space
    const double q = 10.0;
    const double u = 2.0 * q / (0.5 + 2.0 * q);
    Vec x = Vec::Constant(2, u / 2.0);
    const GradOracle oracle = p1_auglag_oracle(p1, Vec::Zero(1), q);
    CHECK(em0_via_projection(oracle, p1.omega, x, 1.0) <= 1e-12);
  }

  SUBCASE("alpha = 1 value equals the explicit Em0 with reconstructed mu") {
    for (const Problem& p : registry()) {
      for (int trial = 0; trial < 10; ++trial) {
        const Vec lb = random_vec(rng, p.l);
        const double q = std::uniform_real_distribution<double>(1, 50)(rng);
        const Vec x = project(p.omega, random_vec(rng, p.n)).y_star;
        auto [f, g] = aug_lagrangian(p, x, lb, q);
        (void)f;
        const GradOracle oracle = [&p, &lb, q](const Vec& z, double& fv, Vec& gv) {
          auto [value, grad] = aug_lagrangian(p, z, lb, q);
          fv = value;
          gv = std::move(grad);
        };
        const double via_proj = em0_via_projection(oracle, p.omega, x, 1.0);
        const ProjectionResult proj = project(p.omega, x - g);
        Vec grad_l = g;
        for (Eigen::Index i : p.omega.present_rows())
          p.omega.add_r_grad(i, proj.mu_recon[i], grad_l);
        const double explicit_em0 =
            grad_l.squaredNorm() - p.omega.mu_dot_r(proj.mu_recon, x);
        CHECK(std::abs(via_proj - explicit_em0) <= 1e-8);

        // sandwich: E_PASA² ≤ Em0 ≤ ‖∇L_q‖·E_PASA
        const double epasa = (proj.y_star - x).norm();
        CHECK(epasa * epasa <= via_proj + 1e-9);
        CHECK(via_proj <= g.norm() * epasa + 1e-9);
      }
    }
  }

  SUBCASE("monotone in alpha over (0, 1]") {
    const double alphas[] = {0.1, 0.25, 0.5, 0.75, 1.0};
    for (int trial = 0; trial < 20; ++trial) {
      const Problem& p = make_p2();
      const Vec lb = random_vec(rng, 1);
      const double q = std::uniform_real_distribution<double>(1, 20)(rng);
      const GradOracle oracle = [&p, &lb, q](const Vec& z, double& fv, Vec& gv) {
        auto [value, grad] = aug_lagrangian(p, z, lb, q);
        fv = value;
        gv = std::move(grad);
      };
      const Vec x = project(p.omega, random_vec(rng, 2)).y_star;
      double prev = kInf;
      for (double a : alphas) {
        const double v = em0_via_projection(oracle, p.omega, x, a);
        CHECK(v <= prev + 1e-9);
        prev = v;
      }
    }
  }
}

TEST_CASE("ngpa_step") {
  const Polyhedron box = Polyhedron::box(Vec::Zero(2), Vec::Constant(2, 4.0));
  Mat Q(2, 2);
  Q << 2, 0.3, 0.3, 1;
  Vec t(2);
  t << 1.5, 2.5;
  const GradOracle oracle = quadratic_oracle(Q, -(Q * t));  // min at t
  const PcoConfig cfg;

  SUBCASE("monotone decrease on a convex quadratic from a vertex") {
    PcoState state = make_pco_state(oracle, Vec::Zero(2));
    double prev = state.f;
    for (int i = 0; i < 25; ++i) {
      const PcoState before = state;
      state = ngpa_step(oracle, box, state, cfg);
      CHECK(state.f <= prev + 1e-12 * std::max(1.0, std::abs(prev)));

      // accepted step satisfies the nonmonotone Armijo inequality verbatim
      const Vec d =
          project(box, before.x - before.bb_alpha * before.g).y_star - before.x;
      if (d.norm() > 0 && (state.x - before.x).norm() > 0) {
        const double s = (state.x - before.x).norm() / d.norm();
        double f_ref = before.f_memory.front();
        for (double v : before.f_memory) f_ref = std::max(f_ref, v);
        CHECK(state.f <=
              f_ref + cfg.delta_armijo * s * before.g.dot(d) + 1e-12);
      }
      prev = state.f;
    }
    CHECK((state.x - t).norm() <= 1e-6);
  }

  SUBCASE("zero gradient leaves the point unchanged") {
    PcoState state = make_pco_state(oracle, t);  // interior minimizer
    const PcoState next = ngpa_step(oracle, box, state, cfg);
    CHECK((next.x - t).norm() == 0.0);
  }
}

TEST_CASE("lco_step") {
  SUBCASE("face-restricted exact minimizer of a quadratic, no blocking") {
    std::mt19937 rng(227);
    for (int trial = 0; trial < 10; ++trial) {
      Mat B(3, 3);
      for (Eigen::Index i = 0; i < 9; ++i)
        B.reshaped()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
      const Mat Q = B * B.transpose() + Mat::Identity(3, 3);
      const Vec c = random_vec(rng, 3);
      // face {x₁ = 0}, box wide enough that nothing blocks
      Vec lo = Vec::Constant(3, -50.0), hi = Vec::Constant(3, 50.0);
      lo[0] = 0;
      const Polyhedron poly = Polyhedron::box(lo, hi);
      Vec x0 = Vec::Zero(3);
      x0[1] = 1.0;
      x0[2] = -1.0;

      const GradOracle oracle = quadratic_oracle(Q, c);
      PcoState state = make_pco_state(oracle, x0);
      const LcoOutcome out = lco_step(oracle, poly, state, PcoConfig{});

      Mat C(1, 3);
      C << 1, 0, 0;
      const Vec expect = null_space_qp_solve(Q, c, C, Vec::Zero(1));
      CHECK_FALSE(out.blocked);
      CHECK((out.state.x - expect).norm() <= 1e-8);
    }
  }

  SUBCASE("blocking constraint truncates the step and decreases f") {
    const Polyhedron box = Polyhedron::box(Vec::Zero(2), Vec::Ones(2));
    Vec t(2);
    t << 2.0, 0.5;
    const GradOracle oracle = quadratic_oracle(Mat::Identity(2, 2), -t);
    Vec x0(2);
    x0 << 0.2, 0.5;
    PcoState state = make_pco_state(oracle, x0);
    const LcoOutcome out = lco_step(oracle, box, state, PcoConfig{});
    CHECK(out.blocked);
    CHECK(out.state.x[0] == doctest::Approx(1.0));
    CHECK(out.state.f < state.f);
  }

  SUBCASE("zero face gradient leaves the point unchanged") {
    Vec lo = Vec::Constant(3, -kInf), hi = Vec::Constant(3, kInf);
    lo[0] = 0;
    const Polyhedron poly = Polyhedron::box(lo, hi);
    Mat Q = Mat::Zero(3, 3);
    Q(0, 0) = 1.0;
    Vec c = Vec::Zero(3);
    c[0] = -1.0;  // F = ½x₁² − x₁, gradient along the active normal only
    const GradOracle oracle = quadratic_oracle(Q, c);
    PcoState state = make_pco_state(oracle, Vec::Zero(3));
    const LcoOutcome out = lco_step(oracle, poly, state, PcoConfig{});
    CHECK((out.state.x - state.x).norm() == 0.0);
  }
}

TEST_CASE("sandwich bound holds along a gradient-projection run") {
  // E_PASA² ≤ Em0 ≤ ‖∇L_q‖·E_PASA at every phase-one iterate.
  const Problem p2 = make_p2();
  const Vec lb = Vec::Constant(1, 0.3);
  const double q = 12.0;
  const GradOracle oracle = [&p2, &lb, q](const Vec& x, double& f, Vec& g) {
    auto [value, grad] = aug_lagrangian(p2, x, lb, q);
    f = value;
    g = std::move(grad);
  };
  Vec x0(2);
  x0 << 1.6, 0.9;
  PcoState state = make_pco_state(oracle, x0);
  const PcoConfig cfg;
  for (int i = 0; i < 30; ++i) {
    const ProjectionResult proj = project(p2.omega, state.x - state.g);
    const double epasa = (proj.y_star - state.x).norm();
    const double em0 = -state.g.dot(proj.y_star - state.x);
    CHECK(epasa * epasa <= em0 + 1e-9);
    CHECK(em0 <= state.g.norm() * epasa + 1e-9);
    if (epasa <= 1e-12) break;
    state = ngpa_step(oracle, p2.omega, state, cfg);
  }
}

TEST_CASE("solve_pco_aug_lag on the P1 augmented Lagrangian") {
  const Problem p1 = make_p1();
  PcoConfig cfg;
  cfg.epsilon = 1e-8;

  SUBCASE("converges from the origin in well under 200 iterations") {
    const PcoStatus status =
        solve_pco_aug_lag(p1, Vec::Zero(1), 10.0, Vec::Zero(2), cfg);
    REQUIRE(status.converged);
    CHECK(status.final_metric <= 1e-8);
    CHECK(status.iterations < 200);
    const double u = 20.0 / 20.5;
    CHECK((status.x - Vec::Constant(2, u / 2.0)).norm() <= 1e-4);
    CHECK(status.theta_final <= cfg.theta);
    for (PcoPhase ph : status.phase_log)
      CHECK((ph == PcoPhase::One || ph == PcoPhase::Two));
  }

  SUBCASE("stationary start returns immediately") {
    const double u = 20.0 / 20.5;
    const PcoStatus status = solve_pco_aug_lag(
        p1, Vec::Zero(1), 10.0, Vec::Constant(2, u / 2.0), cfg);
    CHECK(status.converged);
    CHECK(status.iterations == 0);
  }
}

TEST_CASE("solve_pco_generic") {
  PcoConfig cfg;
  cfg.epsilon = 1e-8;

  SUBCASE("box quadratic matches the clamped closed form") {
    Vec d(3), t(3);
    d << 1, 4, 0.5;
    t << 2.0, -1.0, 0.4;
    const Mat Q = d.asDiagonal();
    const Vec c = -(Q * t);
    const Polyhedron box = Polyhedron::box(Vec::Zero(3), Vec::Ones(3));
    const PcoStatus status =
        solve_pco_generic(quadratic_oracle(Q, c), box, Vec::Constant(3, 0.5), cfg);
    REQUIRE(status.converged);
    CHECK(status.final_metric <= 1e-8);
    const Vec expect = t.cwiseMax(0.0).cwiseMin(1.0);
    CHECK((status.x - expect).norm() <= 1e-7);
  }

  SUBCASE("infeasible start is projected first") {
    const Polyhedron box = Polyhedron::box(Vec::Zero(2), Vec::Ones(2));
    Vec t(2);
    t << 0.5, 0.5;
    const PcoStatus status = solve_pco_generic(
        quadratic_oracle(Mat::Identity(2, 2), -t), box, Vec::Constant(2, 9.0),
        cfg);
    REQUIRE(status.converged);
    CHECK(box.contains(status.x, 1e-10));
    CHECK((status.x - t).norm() <= 1e-7);
  }

  SUBCASE("zero iteration budget reports non-convergence") {
    PcoConfig tight = cfg;
    tight.max_iters = 0;
    const Polyhedron box = Polyhedron::box(Vec::Zero(2), Vec::Ones(2));
    Vec t(2);
    t << 0.9, 0.9;
    const PcoStatus status = solve_pco_generic(
        quadratic_oracle(Mat::Identity(2, 2), -t), box, Vec::Zero(2), tight);
    CHECK_FALSE(status.converged);
    CHECK(status.iterations == 0);
  }
}
