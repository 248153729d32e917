#include "npasa/problem.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace npasa {

using nlohmann::json;

QuadraticForm::QuadraticForm(Mat Q_in, Vec c_in, double d_in)
    : Q(0.5 * (Q_in + Q_in.transpose())), c(std::move(c_in)), d(d_in) {
  if (Q.rows() != Q.cols() || Q.rows() != c.size())
    throw std::invalid_argument("quadratic form: dimension mismatch");
}

EvalResult eval(const Problem& problem, const Vec& x) {
  if (x.size() != problem.n)
    throw std::invalid_argument("eval: x has length " +
                                std::to_string(x.size()) + ", expected " +
                                std::to_string(problem.n));
  EvalResult out;
  problem.objective(x, out.f, out.grad_f);
  if (!std::isfinite(out.f)) throw EvalError("eval: non-finite f", -1);
  for (Eigen::Index i = 0; i < out.grad_f.size(); ++i)
    if (!std::isfinite(out.grad_f[i]))
      throw EvalError("eval: non-finite grad f component", i);
  out.h.resize(problem.l);
  out.jac_h.resize(problem.l, problem.n);
  if (problem.l > 0) {
    problem.constraints(x, out.h, out.jac_h);
    for (Eigen::Index i = 0; i < out.h.size(); ++i)
      if (!std::isfinite(out.h[i]))
        throw EvalError("eval: non-finite h component", i);
    for (Eigen::Index i = 0; i < out.jac_h.size(); ++i)
      if (!std::isfinite(out.jac_h.reshaped()[i]))
        throw EvalError("eval: non-finite Jacobian entry", i);
  }
  return out;
}

DerivativeReport check_derivatives(const Problem& problem, const Vec& x,
                                   double step, double tol) {
  if (step <= 0) throw std::invalid_argument("check_derivatives: step <= 0");
  DerivativeReport report;
  const EvalResult base = eval(problem, x);
  Vec xp = x, xm = x;
  for (Eigen::Index j = 0; j < problem.n; ++j) {
    xp[j] = x[j] + step;
    xm[j] = x[j] - step;
    const EvalResult ep = eval(problem, xp);
    const EvalResult em = eval(problem, xm);
    xp[j] = x[j];
    xm[j] = x[j];

    const double fd_f = (ep.f - em.f) / (2 * step);
    const double rel_f =
        std::abs(fd_f - base.grad_f[j]) / std::max(1.0, std::abs(base.grad_f[j]));
    report.max_rel_err_f = std::max(report.max_rel_err_f, rel_f);
    if (rel_f > tol) report.flagged.push_back({'f', 0, j, rel_f});

    for (Eigen::Index i = 0; i < problem.l; ++i) {
      const double fd_h = (ep.h[i] - em.h[i]) / (2 * step);
      const double rel_h = std::abs(fd_h - base.jac_h(i, j)) /
                           std::max(1.0, std::abs(base.jac_h(i, j)));
      report.max_rel_err_h = std::max(report.max_rel_err_h, rel_h);
      if (rel_h > tol) report.flagged.push_back({'h', i, j, rel_h});
    }
  }
  return report;
}

namespace {

double number_or_inf(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ParseError("expected number or \"inf\"/\"-inf\", got \"" + s + "\"",
                     path);
  }
  throw ParseError("expected number", path);
}

Vec parse_vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError("expected array", path);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] =
        number_or_inf(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

Mat parse_matrix(const json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError("expected array of arrays", path);
  const auto rows = static_cast<Eigen::Index>(v.size());
  if (rows == 0) return Mat(0, 0);
  Mat out;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vec row = parse_vector(v[i], path + "[" + std::to_string(i) + "]");
    if (i == 0) out.resize(rows, row.size());
    if (row.size() != out.cols())
      throw ParseError("ragged matrix", path + "[" + std::to_string(i) + "]");
    out.row(i) = row;
  }
  return out;
}

QuadraticForm parse_form(const json& v, Eigen::Index n, const std::string& path) {
  if (!v.is_object()) throw ParseError("expected object", path);
  Mat Q = Mat::Zero(n, n);
  Vec c = Vec::Zero(n);
  double d = 0;
  if (v.contains("Q")) {
    Q = parse_matrix(v["Q"], path + ".Q");
    if (Q.rows() != n || Q.cols() != n)
      throw StructuralError(path + ".Q must be " + std::to_string(n) + "x" +
                            std::to_string(n));
  }
  if (v.contains("c")) {
    c = parse_vector(v["c"], path + ".c");
    if (c.size() != n)
      throw StructuralError(path + ".c must have length " + std::to_string(n));
  }
  if (v.contains("d")) d = number_or_inf(v["d"], path + ".d");
  return QuadraticForm(std::move(Q), std::move(c), d);
}

json form_to_json(const QuadraticForm& form) {
  json out;
  json Q = json::array();
  for (Eigen::Index i = 0; i < form.Q.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < form.Q.cols(); ++j) row.push_back(form.Q(i, j));
    Q.push_back(row);
  }
  out["Q"] = Q;
  json c = json::array();
  for (Eigen::Index i = 0; i < form.c.size(); ++i) c.push_back(form.c[i]);
  out["c"] = c;
  out["d"] = form.d;
  return out;
}

json bound_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

Problem from_quadratic_data(std::string name, Problem::QuadData quad,
                            Polyhedron omega) {
  Problem p;
  p.name = std::move(name);
  p.n = quad.objective.n();
  p.l = static_cast<Eigen::Index>(quad.equalities.size());
  p.omega = std::move(omega);
  const QuadraticForm obj = quad.objective;
  const std::vector<QuadraticForm> eqs = quad.equalities;
  p.objective = [obj](const Vec& x, double& f, Vec& g) {
    f = obj.value(x);
    g = obj.gradient(x);
  };
  p.constraints = [eqs](const Vec& x, Vec& h, Mat& J) {
    for (std::size_t i = 0; i < eqs.size(); ++i) {
      h[static_cast<Eigen::Index>(i)] = eqs[i].value(x);
      J.row(static_cast<Eigen::Index>(i)) = eqs[i].gradient(x).transpose();
    }
  };
  p.quad = std::move(quad);
  return p;
}

}  // namespace

Problem load_problem_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), "$");
  }
  if (!doc.is_object()) throw ParseError("top level must be an object", "$");
  if (!doc.contains("n")) throw ParseError("missing \"n\"", "$");
  const auto n = doc["n"].get<Eigen::Index>();
  if (n <= 0) throw StructuralError("n must be positive");

  Problem::QuadData quad;
  if (!doc.contains("objective")) throw ParseError("missing \"objective\"", "$");
  quad.objective = parse_form(doc["objective"], n, "$.objective");

  if (doc.contains("equalities")) {
    const json& eqs = doc["equalities"];
    if (!eqs.is_array()) throw ParseError("expected array", "$.equalities");
    for (std::size_t i = 0; i < eqs.size(); ++i)
      quad.equalities.push_back(
          parse_form(eqs[i], n, "$.equalities[" + std::to_string(i) + "]"));
  }

  Mat A(0, n);
  Vec bl(0), bu(0);
  Vec lo = Vec::Constant(n, -kInf);
  Vec hi = Vec::Constant(n, kInf);
  if (doc.contains("polyhedron")) {
    const json& poly = doc["polyhedron"];
    if (!poly.is_object()) throw ParseError("expected object", "$.polyhedron");
    Eigen::Index m = 0;
    if (poly.contains("bl")) {
      bl = parse_vector(poly["bl"], "$.polyhedron.bl");
      m = bl.size();
    }
    if (poly.contains("bu")) {
      bu = parse_vector(poly["bu"], "$.polyhedron.bu");
      m = std::max(m, bu.size());
    }
    if (bl.size() != bu.size())
      throw StructuralError("polyhedron: bl and bu must have equal length");
    if (m > 0) {
      if (!poly.contains("A"))
        throw StructuralError("polyhedron: missing A with " +
                              std::to_string(m) + " row bounds declared");
      A = parse_matrix(poly["A"], "$.polyhedron.A");
      if (A.rows() != m || A.cols() != n)
        throw StructuralError("polyhedron: A must be " + std::to_string(m) +
                              "x" + std::to_string(n));
    } else if (poly.contains("A")) {
      A = parse_matrix(poly["A"], "$.polyhedron.A");
      if (A.rows() > 0)
        throw StructuralError("polyhedron: A given without bl/bu");
      A.resize(0, n);
    }
    if (poly.contains("lo")) {
      lo = parse_vector(poly["lo"], "$.polyhedron.lo");
      if (lo.size() != n)
        throw StructuralError("polyhedron: lo must have length " +
                              std::to_string(n));
    }
    if (poly.contains("hi")) {
      hi = parse_vector(poly["hi"], "$.polyhedron.hi");
      if (hi.size() != n)
        throw StructuralError("polyhedron: hi must have length " +
                              std::to_string(n));
    }
  }
  Polyhedron omega;
  try {
    omega = Polyhedron(std::move(A), std::move(bl), std::move(bu),
                       std::move(lo), std::move(hi));
  } catch (const std::invalid_argument& e) {
    throw StructuralError(e.what());
  }

  std::string name = doc.value("name", std::string("json"));
  return from_quadratic_data(std::move(name), std::move(quad), std::move(omega));
}

std::string serialize_problem(const Problem& problem) {
  if (!problem.quad)
    throw StructuralError("problem \"" + problem.name +
                          "\" has no quadratic-form data; not serializable");
  json doc;
  doc["name"] = problem.name;
  doc["n"] = problem.n;
  doc["objective"] = form_to_json(problem.quad->objective);
  json eqs = json::array();
  for (const auto& form : problem.quad->equalities) eqs.push_back(form_to_json(form));
  doc["equalities"] = eqs;
  const Polyhedron& omega = problem.omega;
  json poly;
  json A = json::array();
  for (Eigen::Index i = 0; i < omega.m(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < omega.n(); ++j) row.push_back(omega.A()(i, j));
    A.push_back(row);
  }
  poly["A"] = A;
  json bl = json::array(), bu = json::array(), lo = json::array(),
       hi = json::array();
  for (Eigen::Index i = 0; i < omega.m(); ++i) {
    bl.push_back(bound_to_json(omega.bl()[i]));
    bu.push_back(bound_to_json(omega.bu()[i]));
  }
  for (Eigen::Index i = 0; i < omega.n(); ++i) {
    lo.push_back(bound_to_json(omega.lo()[i]));
    hi.push_back(bound_to_json(omega.hi()[i]));
  }
  poly["bl"] = bl;
  poly["bu"] = bu;
  poly["lo"] = lo;
  poly["hi"] = hi;
  doc["polyhedron"] = poly;
  return doc.dump(2);
}

Problem make_p1() {
  // min ½‖x‖² s.t. x₁ + x₂ = 1. Minimizer (½, ½) with λ = −½.
  Problem::QuadData quad;
  quad.objective = QuadraticForm(Mat::Identity(2, 2), Vec::Zero(2), 0.0);
  Mat Qh = Mat::Zero(2, 2);
  quad.equalities.push_back(QuadraticForm(Qh, Vec::Ones(2), -1.0));
  Problem p = from_quadratic_data("p1", std::move(quad),
                                  Polyhedron::free_space(2));
  KktPoint kkt;
  kkt.x = Vec::Constant(2, 0.5);
  kkt.lambda = Vec::Constant(1, -0.5);
  kkt.mu = Vec::Zero(p.omega.stacked_size());
  p.known_kkt = kkt;
  return p;
}

Problem make_p2() {
  // min x₁x₂ s.t. x₁² + x₂² = 2, x ≥ 0. Minimizers (√2, 0) and (0, √2).
  Problem::QuadData quad;
  Mat Qf(2, 2);
  Qf << 0, 1, 1, 0;
  quad.objective = QuadraticForm(Qf, Vec::Zero(2), 0.0);
  quad.equalities.push_back(
      QuadraticForm(2.0 * Mat::Identity(2, 2), Vec::Zero(2), -2.0));
  Polyhedron omega = Polyhedron::box(Vec::Zero(2), Vec::Constant(2, kInf));
  Problem p = from_quadratic_data("p2", std::move(quad), std::move(omega));
  KktPoint kkt;
  kkt.x = Vec(2);
  kkt.x << std::sqrt(2.0), 0.0;
  kkt.lambda = Vec::Zero(1);
  kkt.mu = Vec::Zero(p.omega.stacked_size());
  kkt.mu[1] = std::sqrt(2.0);  // lower bound x₂ ≥ 0 active
  p.known_kkt = kkt;
  return p;
}

Problem make_p3() {
  // min ½‖x‖² s.t. x₁² + x₂² = 1, x₁ ≥ 2. The equality constraint cannot be
  // met on Ω, so the linearization in the constraint step needs a large
  // perturbation and phase two branches back to phase one.
  Problem::QuadData quad;
  quad.objective = QuadraticForm(Mat::Identity(2, 2), Vec::Zero(2), 0.0);
  quad.equalities.push_back(
      QuadraticForm(2.0 * Mat::Identity(2, 2), Vec::Zero(2), -1.0));
  Vec lo(2), hi(2);
  lo << 2.0, -kInf;
  hi << kInf, kInf;
  Polyhedron omega = Polyhedron::box(std::move(lo), std::move(hi));
  return from_quadratic_data("p3", std::move(quad), std::move(omega));
}

Problem make_p4() {
  // min 100(x₂ − x₁²)² + (1 − x₁)² s.t. x₁ + x₂ = 1.
  Problem p;
  p.name = "p4";
  p.n = 2;
  p.l = 1;
  p.omega = Polyhedron::free_space(2);
  p.objective = [](const Vec& x, double& f, Vec& g) {
    const double t = x[1] - x[0] * x[0];
    f = 100.0 * t * t + (1.0 - x[0]) * (1.0 - x[0]);
    g.resize(2);
    g[0] = -400.0 * x[0] * t - 2.0 * (1.0 - x[0]);
    g[1] = 200.0 * t;
  };
  p.constraints = [](const Vec& x, Vec& h, Mat& J) {
    h[0] = x[0] + x[1] - 1.0;
    J(0, 0) = 1.0;
    J(0, 1) = 1.0;
  };
  KktPoint kkt;
  kkt.x = Vec(2);
  kkt.x << 0.61879561907502545, 0.38120438092497455;
  kkt.lambda = Vec::Constant(1, 0.34072745229384449);
  kkt.mu = Vec::Zero(p.omega.stacked_size());
  p.known_kkt = kkt;
  return p;
}

std::vector<Problem> registry() {
  return {make_p1(), make_p2(), make_p3(), make_p4()};
}

Problem find_problem(const std::string& name) {
  for (auto& p : registry())
    if (p.name == name) return p;
  throw StructuralError("unknown problem \"" + name + "\"");
}

}  // namespace npasa
