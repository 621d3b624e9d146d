#pragma once

#include <string>
#include <vector>

#include "stackmf/game.hpp"

namespace stackmf {

enum class RowSense { le, eq, ge };

/// Dense linear program: minimize c^T x subject to row constraints and
/// variable bounds. Defaults give x >= 0.
struct LinearProgram {
  Vec objective;
  std::vector<Vec> rows;
  std::vector<RowSense> senses;
  Vec rhs;
  Vec lower;  // may be -inf
  Vec upper;  // may be +inf

  int n_vars() const { return static_cast<int>(objective.size()); }
  int n_rows() const { return static_cast<int>(rows.size()); }
  void validate() const;
};

LinearProgram make_lp(int n_vars);

enum class LPStatus { optimal, infeasible, unbounded };

struct LPSolution {
  LPStatus status = LPStatus::infeasible;
  Vec x;
  double objective = 0.0;
  /// Shadow prices d(objective)/d(rhs), one per original row. For a
  /// minimization, <= rows carry nonpositive duals and >= rows nonnegative
  /// ones; equality rows recombine the two internal directions.
  Vec y;
  /// Farkas row multipliers when infeasible; improving ray over the original
  /// variables when unbounded.
  Vec certificate;
  int pivots = 0;
};

/// Two-phase dense primal simplex with Bland's anti-cycling rule. Throws
/// std::runtime_error when the pivot cap is exhausted; Bland's rule excludes
/// cycling, so that indicates a malformed input.
LPSolution solve_lp(const LinearProgram& lp, int pivot_cap = 200000);

struct LpResiduals {
  double primal = 0.0;      // worst row/bound violation
  double dual = 0.0;        // worst reduced-cost sign violation
  double slackness = 0.0;   // worst complementary-slackness product
  double gap = 0.0;         // |c'x - dual objective|, scaled
};

/// KKT residuals of a reported optimal solution, measured on the original
/// formulation.
LpResiduals verify_lp_solution(const LinearProgram& lp, const LPSolution& sol);

/// Plain-text tabular format for golden tests:
///   vars <n>
///   minimize c...
///   bound <var> <lower|-inf> <upper|inf>
///   row <le|eq|ge> a... <rhs>
void write_lp(const LinearProgram& lp, const std::string& path);
LinearProgram read_lp(const std::string& path);

}  // namespace stackmf
