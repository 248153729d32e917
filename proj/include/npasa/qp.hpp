#pragma once

#include <optional>
#include <vector>

#include "npasa/polyhedron.hpp"

namespace npasa {

/// One working-set entry: a row of A or a variable bound held at equality.
struct WorkItem {
  enum class Kind { RowLo, RowHi, BoxLo, BoxHi };
  Kind kind;
  Eigen::Index index;
  bool operator==(const WorkItem&) const = default;
};

struct QpResult {
  Vec x;
  Vec pi;      // m row duals, γ1 − γ2 convention (>0 at lower bound)
  Vec ups_lo;  // n lower-bound duals
  Vec ups_hi;  // n upper-bound duals
  std::vector<WorkItem> working_set;
  Vec working_duals;
  int iterations = 0;
};

/// Minimizes ½xᵀHx + gᵀx over the polyhedron. H must be symmetric positive
/// definite. Primal active-set method with dense refactorization on every
/// working-set change; `warm` seeds the initial working set with entries
/// that are active at the starting point.
QpResult solve_qp(const Mat& H, const Vec& g, const Polyhedron& poly,
                  const Vec* start_hint = nullptr,
                  const std::vector<WorkItem>* warm = nullptr);

/// Returns a point of the polyhedron, or throws InfeasibleError with a
/// separating certificate. `guess` anchors the phase-1 search.
Vec feasible_point(const Polyhedron& poly, const Vec& guess);

}  // namespace npasa
