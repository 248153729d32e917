#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace npasa {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Polyhedron Ω = {x : bl ≤ Ax ≤ bu, lo ≤ x ≤ hi}.
///
/// The stacked inequality view r(x) = [bl − Ax; Ax − bu; lo − x; x − hi]
/// has length 2m + 2n, and x ∈ Ω ⇔ r(x) ≤ 0. Components whose bound is
/// infinite are "absent": they never constrain, their multipliers stay 0,
/// and they are skipped in every dot product.
class Polyhedron {
 public:
  Polyhedron() = default;
  Polyhedron(Mat A, Vec bl, Vec bu, Vec lo, Vec hi);

  /// Box-only polyhedron (m = 0).
  static Polyhedron box(Vec lo, Vec hi);
  /// All of R^n.
  static Polyhedron free_space(Eigen::Index n);

  Eigen::Index n() const { return n_; }
  Eigen::Index m() const { return m_; }
  /// Length of the stacked constraint vector, 2m + 2n.
  Eigen::Index stacked_size() const { return 2 * m_ + 2 * n_; }

  const Mat& A() const { return A_; }
  const Vec& bl() const { return bl_; }
  const Vec& bu() const { return bu_; }
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }

  /// True if stacked row i has a finite bound.
  bool present(Eigen::Index i) const;
  /// Indices of stacked rows with finite bounds.
  const std::vector<Eigen::Index>& present_rows() const { return present_; }

  /// Stacked r(x); absent rows evaluate to −inf.
  Vec r_stacked(const Vec& x) const;
  /// Value of stacked row i at x (finite for present rows).
  double r_value(Eigen::Index i, const Vec& x) const;
  /// ∇r_i · v for stacked row i (rows of the constant matrix [−A; A; −I; I]).
  double r_grad_dot(Eigen::Index i, const Vec& v) const;
  /// out += coef · ∇r_i.
  void add_r_grad(Eigen::Index i, double coef, Vec& out) const;

  /// μᵀ r(x) over present rows (absent rows contribute 0).
  double mu_dot_r(const Vec& mu, const Vec& x) const;

  bool contains(const Vec& x, double tol = 1e-10) const;
  /// Max componentwise violation of the stacked constraints (0 if inside).
  double violation(const Vec& x) const;
  /// Componentwise clamp of x into [lo, hi].
  Vec clamp_box(const Vec& x) const;

  bool bound_constrained() const { return m_ == 0; }

 private:
  void validate() const;
  void build_present();

  Eigen::Index n_ = 0, m_ = 0;
  Mat A_;
  Vec bl_, bu_, lo_, hi_;
  std::vector<Eigen::Index> present_;
};

/// Thrown when an oracle or kernel produces a non-finite value.
class EvalError : public std::runtime_error {
 public:
  EvalError(std::string what, Eigen::Index index)
      : std::runtime_error(std::move(what)), index(index) {}
  Eigen::Index index;
};

/// Thrown when the polyhedron is detected to be empty. Carries a row
/// combination with positive gap as a separating certificate.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(std::string what, Vec weights, double gap)
      : std::runtime_error(std::move(what)),
        row_weights(std::move(weights)),
        gap(gap) {}
  Vec row_weights;
  double gap;
};

}  // namespace npasa
