#include "npasa/polyhedron.hpp"

#include <cmath>

namespace npasa {

Polyhedron::Polyhedron(Mat A, Vec bl, Vec bu, Vec lo, Vec hi)
    : n_(lo.size()),
      m_(bl.size()),
      A_(std::move(A)),
      bl_(std::move(bl)),
      bu_(std::move(bu)),
      lo_(std::move(lo)),
      hi_(std::move(hi)) {
  if (m_ > 0 && (A_.rows() != m_ || A_.cols() != n_))
    throw std::invalid_argument("polyhedron: A must be m x n");
  if (m_ == 0 && A_.size() == 0) A_.resize(0, n_);
  if (bu_.size() != m_ || hi_.size() != n_)
    throw std::invalid_argument("polyhedron: bound length mismatch");
  validate();
  build_present();
}

Polyhedron Polyhedron::box(Vec lo, Vec hi) {
  const auto n = lo.size();
  return Polyhedron(Mat(0, n), Vec(0), Vec(0), std::move(lo), std::move(hi));
}

Polyhedron Polyhedron::free_space(Eigen::Index n) {
  return box(Vec::Constant(n, -kInf), Vec::Constant(n, kInf));
}

void Polyhedron::validate() const {
  for (Eigen::Index j = 0; j < m_; ++j) {
    if (std::isnan(bl_[j]) || std::isnan(bu_[j]))
      throw std::invalid_argument("polyhedron: NaN row bound");
    if (bl_[j] > bu_[j])
      throw std::invalid_argument("polyhedron: bl > bu at row " +
                                  std::to_string(j));
    if (bl_[j] == -kInf && bu_[j] == kInf)
      throw std::invalid_argument("polyhedron: row " + std::to_string(j) +
                                  " has both bounds infinite (useless row)");
  }
  for (Eigen::Index i = 0; i < n_; ++i) {
    if (std::isnan(lo_[i]) || std::isnan(hi_[i]))
      throw std::invalid_argument("polyhedron: NaN variable bound");
    if (lo_[i] > hi_[i])
      throw std::invalid_argument("polyhedron: lo > hi at variable " +
                                  std::to_string(i));
  }
}

void Polyhedron::build_present() {
  present_.clear();
  for (Eigen::Index i = 0; i < stacked_size(); ++i)
    if (present(i)) present_.push_back(i);
}

bool Polyhedron::present(Eigen::Index i) const {
  if (i < m_) return bl_[i] > -kInf;
  if (i < 2 * m_) return bu_[i - m_] < kInf;
  if (i < 2 * m_ + n_) return lo_[i - 2 * m_] > -kInf;
  return hi_[i - 2 * m_ - n_] < kInf;
}

double Polyhedron::r_value(Eigen::Index i, const Vec& x) const {
  if (i < m_) return bl_[i] - A_.row(i).dot(x);
  if (i < 2 * m_) return A_.row(i - m_).dot(x) - bu_[i - m_];
  if (i < 2 * m_ + n_) return lo_[i - 2 * m_] - x[i - 2 * m_];
  return x[i - 2 * m_ - n_] - hi_[i - 2 * m_ - n_];
}

Vec Polyhedron::r_stacked(const Vec& x) const {
  Vec r(stacked_size());
  const Vec Ax = m_ > 0 ? Vec(A_ * x) : Vec(0);
  for (Eigen::Index j = 0; j < m_; ++j) {
    r[j] = bl_[j] - Ax[j];
    r[m_ + j] = Ax[j] - bu_[j];
  }
  for (Eigen::Index i = 0; i < n_; ++i) {
    r[2 * m_ + i] = lo_[i] - x[i];
    r[2 * m_ + n_ + i] = x[i] - hi_[i];
  }
  return r;
}

double Polyhedron::r_grad_dot(Eigen::Index i, const Vec& v) const {
  if (i < m_) return -A_.row(i).dot(v);
  if (i < 2 * m_) return A_.row(i - m_).dot(v);
  if (i < 2 * m_ + n_) return -v[i - 2 * m_];
  return v[i - 2 * m_ - n_];
}

void Polyhedron::add_r_grad(Eigen::Index i, double coef, Vec& out) const {
  if (i < m_) {
    out.noalias() -= coef * A_.row(i).transpose();
  } else if (i < 2 * m_) {
    out.noalias() += coef * A_.row(i - m_).transpose();
  } else if (i < 2 * m_ + n_) {
    out[i - 2 * m_] -= coef;
  } else {
    out[i - 2 * m_ - n_] += coef;
  }
}

double Polyhedron::mu_dot_r(const Vec& mu, const Vec& x) const {
  double dot = 0;
  for (Eigen::Index i : present_) dot += mu[i] * r_value(i, x);
  return dot;
}

bool Polyhedron::contains(const Vec& x, double tol) const {
  return violation(x) <= tol;
}

double Polyhedron::violation(const Vec& x) const {
  double v = 0;
  for (Eigen::Index i : present_) v = std::max(v, r_value(i, x));
  return v;
}

Vec Polyhedron::clamp_box(const Vec& x) const {
  return x.cwiseMax(lo_).cwiseMin(hi_);
}

}  // namespace npasa
