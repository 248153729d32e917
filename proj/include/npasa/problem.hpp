#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "npasa/polyhedron.hpp"

namespace npasa {

/// ½ xᵀQx + cᵀx + d with Q symmetrized at construction.
struct QuadraticForm {
  Mat Q;
  Vec c;
  double d = 0;

  QuadraticForm() = default;
  QuadraticForm(Mat Q_in, Vec c_in, double d_in);

  double value(const Vec& x) const { return 0.5 * x.dot(Q * x) + c.dot(x) + d; }
  Vec gradient(const Vec& x) const { return Q * x + c; }
  Eigen::Index n() const { return c.size(); }
};

struct KktPoint {
  Vec x;
  Vec lambda;
  Vec mu;  // stacked, length 2m+2n
};

/// min f(x) s.t. h(x) = 0, x ∈ Ω, with analytic derivative oracles.
struct Problem {
  std::string name;
  Eigen::Index n = 0;
  Eigen::Index l = 0;
  /// x ↦ (f, ∇f). ∇f sized n by the oracle.
  std::function<void(const Vec&, double&, Vec&)> objective;
  /// x ↦ (h ∈ R^l, ∇h ∈ R^{l×n}).
  std::function<void(const Vec&, Vec&, Mat&)> constraints;
  Polyhedron omega;
  std::optional<KktPoint> known_kkt;

  /// Populated when the problem was built from quadratic forms, which makes
  /// it expressible in the JSON schema.
  struct QuadData {
    QuadraticForm objective;
    std::vector<QuadraticForm> equalities;
  };
  std::optional<QuadData> quad;
};

struct EvalResult {
  double f;
  Vec grad_f;  // n
  Vec h;       // l
  Mat jac_h;   // l x n
};

/// Evaluates both oracles; any non-finite output raises EvalError carrying
/// the offending index.
EvalResult eval(const Problem& problem, const Vec& x);

/// Central-difference verification of the analytic derivatives. Report-only;
/// the solver itself never uses finite differences.
struct DerivativeReport {
  double max_rel_err_f = 0;
  double max_rel_err_h = 0;
  struct Flag {
    char kind;  // 'f' or 'h'
    Eigen::Index row;  // constraint row for 'h', else 0
    Eigen::Index col;
    double rel_err;
  };
  std::vector<Flag> flagged;
  bool pass() const { return flagged.empty(); }
};
DerivativeReport check_derivatives(const Problem& problem, const Vec& x,
                                   double step = 1e-6, double tol = 1e-5);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string what, std::string path)
      : std::runtime_error(what + " (at " + path + ")"), path(std::move(path)) {}
  std::string path;
};

class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses the JSON problem schema (quadratic objective, quadratic equality
/// constraints, polyhedron). "inf"/"-inf" strings encode infinite bounds.
Problem load_problem_json(const std::string& text);
/// Inverse of load_problem_json; requires problem.quad to be populated.
std::string serialize_problem(const Problem& problem);

/// Built-in problems p1..p4.
Problem make_p1();
Problem make_p2();
Problem make_p3();
Problem make_p4();
std::vector<Problem> registry();
/// Looks up a registry problem by name; throws StructuralError if unknown.
Problem find_problem(const std::string& name);

}  // namespace npasa
