#include "doctest.h"
#include "support.hpp"

using namespace npasa;
using namespace npasa::testing;

TEST_CASE("eval on registry problems") {
  const Problem p1 = make_p1();
  Vec x(2);
  x << 0, 0;
  const EvalResult ev = eval(p1, x);
  CHECK(ev.f == doctest::Approx(0.0));
  CHECK(ev.grad_f.norm() == doctest::Approx(0.0));
  CHECK(ev.h[0] == doctest::Approx(-1.0));
  CHECK(ev.jac_h(0, 0) == doctest::Approx(1.0));
  CHECK(ev.jac_h(0, 1) == doctest::Approx(1.0));

  // quadratic form Q = I, c = 0 at (3, 4): f = ½‖x‖²
  const QuadraticForm q(Mat::Identity(2, 2), Vec::Zero(2), 0.0);
  Vec y(2);
  y << 3, 4;
  CHECK(q.value(y) == doctest::Approx(12.5));
  CHECK((q.gradient(y) - y).norm() == doctest::Approx(0.0));

  const Problem p2 = make_p2();
  Vec z(2);
  z << 1, 1;
  const EvalResult ev2 = eval(p2, z);
  CHECK(ev2.h[0] == doctest::Approx(0.0));
  CHECK(ev2.jac_h(0, 0) == doctest::Approx(2.0));
  CHECK(ev2.jac_h(0, 1) == doctest::Approx(2.0));
}

TEST_CASE("eval rejects non-finite oracle output") {
  Problem bad = make_p1();
  bad.objective = [](const Vec& x, double& f, Vec& g) {
    f = x[0];
    g = Vec::Constant(2, kInf);
  };
  Vec x = Vec::Zero(2);
  CHECK_THROWS_AS(eval(bad, x), EvalError);
}

TEST_CASE("check_derivatives on analytic problems") {
  std::mt19937 rng(7);
  const Problem p1 = make_p1();
  Vec x(2);
  x << 0.3, 0.7;
  const DerivativeReport rep = check_derivatives(p1, x);
  CHECK(rep.max_rel_err_f < 1e-6);
  CHECK(rep.max_rel_err_h < 1e-6);
  CHECK(rep.pass());

  const Problem p2 = make_p2();
  Vec y(2);
  y << 1, 1;
  const DerivativeReport rep2 = check_derivatives(p2, y);
  CHECK(rep2.max_rel_err_f < 1e-6);
  CHECK(rep2.max_rel_err_h < 1e-6);
}

TEST_CASE("check_derivatives flags an injected sign bug") {
  Problem bad = make_p1();
  bad.objective = [](const Vec& x, double& f, Vec& g) {
    f = 0.5 * x.squaredNorm();
    g = x;
    g[0] = -g[0];  // wrong sign on ∂f/∂x₁
  };
  Vec x(2);
  x << 0.4, 0.9;
  const DerivativeReport rep = check_derivatives(bad, x);
  REQUIRE_FALSE(rep.pass());
  CHECK(rep.flagged.front().kind == 'f');
  CHECK(rep.flagged.front().col == 0);
}

TEST_CASE("derivatives verify at random points for every registry problem") {
  std::mt19937 rng(42);
  for (const Problem& p : registry()) {
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const Vec x = random_vec(rng, p.n);
      const DerivativeReport rep = check_derivatives(p, x);
      worst = std::max(worst, std::max(rep.max_rel_err_f, rep.max_rel_err_h));
    }
    INFO("problem ", p.name);
    CHECK(worst <= 1e-5);
  }
}

TEST_CASE("json problem loading") {
  const std::string text = R"({
    "n": 2,
    "objective": {"Q": [[1,0],[0,1]], "c": [0,0], "d": 0},
    "equalities": [{"c": [1,1], "d": -1}],
    "polyhedron": {"lo": ["-inf", 0], "hi": ["inf", "inf"]}
  })";
  const Problem p = load_problem_json(text);
  CHECK(p.n == 2);
  CHECK(p.l == 1);
  Vec x(2);
  x << 0.5, 0.5;
  const EvalResult ev = eval(p, x);
  CHECK(ev.f == doctest::Approx(0.25));
  CHECK(ev.h[0] == doctest::Approx(0.0));
  CHECK(p.omega.lo()[0] == -kInf);
  CHECK(p.omega.lo()[1] == 0.0);
}

TEST_CASE("json structural errors") {
  CHECK_THROWS_AS(load_problem_json("{] not json"), ParseError);
  // bl/bu declared but no A
  CHECK_THROWS_AS(load_problem_json(R"({
    "n": 2, "objective": {},
    "polyhedron": {"bl": [0], "bu": [1]}
  })"),
                  StructuralError);
  // bl > bu
  CHECK_THROWS_AS(load_problem_json(R"({
    "n": 2, "objective": {},
    "polyhedron": {"A": [[1,1]], "bl": [2], "bu": [1]}
  })"),
                  StructuralError);
  // useless row (both bounds infinite)
  CHECK_THROWS_AS(load_problem_json(R"({
    "n": 2, "objective": {},
    "polyhedron": {"A": [[1,1]], "bl": ["-inf"], "bu": ["inf"]}
  })"),
                  StructuralError);
}

TEST_CASE("serialize / load round trip on quadratic registry problems") {
  std::mt19937 rng(11);
  for (const Problem& p : registry()) {
    if (!p.quad) continue;  // p4's objective is not a quadratic form
    const Problem back = load_problem_json(serialize_problem(p));
    CHECK(back.n == p.n);
    CHECK(back.l == p.l);
    CHECK(back.omega.m() == p.omega.m());
    for (Eigen::Index i = 0; i < p.omega.n(); ++i) {
      CHECK(back.omega.lo()[i] == p.omega.lo()[i]);
      CHECK(back.omega.hi()[i] == p.omega.hi()[i]);
    }
    for (int trial = 0; trial < 5; ++trial) {
      const Vec x = random_vec(rng, p.n);
      const EvalResult a = eval(p, x);
      const EvalResult b = eval(back, x);
      CHECK(a.f == doctest::Approx(b.f).epsilon(1e-15));
      CHECK((a.grad_f - b.grad_f).norm() <= 1e-15 * (1 + a.grad_f.norm()));
      if (p.l > 0)
        CHECK((a.h - b.h).norm() <= 1e-15 * (1 + a.h.norm()));
    }
  }
}

TEST_CASE("polyhedron invariants") {
  Vec lo(2), hi(2);
  lo << 0, 1;
  hi << 1, 0;  // lo > hi
  CHECK_THROWS_AS(Polyhedron::box(lo, hi), std::invalid_argument);

  Mat A(1, 2);
  A << 1, 1;
  Vec bl(1), bu(1);
  bl << -kInf;
  bu << kInf;
  CHECK_THROWS_AS(
      Polyhedron(A, bl, bu, Vec::Constant(2, -kInf), Vec::Constant(2, kInf)),
      std::invalid_argument);

  // stacked view: r(x) ≤ 0 iff x ∈ Ω
  std::mt19937 rng(3);
  const Polyhedron poly = random_polyhedron(rng, 3, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec x = random_vec(rng, 3);
    const Vec r = poly.r_stacked(x);
    double max_r = -kInf;
    for (Eigen::Index i : poly.present_rows()) max_r = std::max(max_r, r[i]);
    CHECK(poly.contains(x, 1e-12) == (max_r <= 1e-12));
  }
}

TEST_CASE("registry lookup") {
  CHECK(registry().size() == 4);
  CHECK(find_problem("p2").name == "p2");
  CHECK_THROWS_AS(find_problem("nope"), StructuralError);
  // known KKT points actually satisfy the KKT conditions
  for (const Problem& p : registry()) {
    if (!p.known_kkt) continue;
    const Iterate it{p.known_kkt->x, p.known_kkt->lambda, p.known_kkt->mu};
    CHECK(kkt_check(p, it).max() <= 1e-8);
  }
}
