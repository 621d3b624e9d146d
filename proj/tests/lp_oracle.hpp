#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "stackmf/lp.hpp"
#include "test_util.hpp"

namespace stackmf::testutil {

/// Independent vertex-enumeration oracle: tries every active set made of the
/// equality rows plus a choice of inequality rows and variable bounds, solves
/// the square system, and keeps the best feasible point. Exponential; only
/// for small instances.
inline std::pair<bool, double> enumerate_optimum(const LinearProgram& lp) {
  const int n = lp.n_vars();
  const double inf = std::numeric_limits<double>::infinity();

  struct Cut {
    Vec row;
    double rhs;
  };
  std::vector<Cut> equalities, optionals;
  for (int i = 0; i < lp.n_rows(); ++i) {
    if (lp.senses[i] == RowSense::eq)
      equalities.push_back({lp.rows[i], lp.rhs[i]});
    else
      optionals.push_back({lp.rows[i], lp.rhs[i]});
  }
  for (int j = 0; j < n; ++j) {
    Vec unit(n, 0.0);
    unit[j] = 1.0;
    if (lp.lower[j] > -inf) optionals.push_back({unit, lp.lower[j]});
    if (lp.upper[j] < inf) optionals.push_back({unit, lp.upper[j]});
  }
  const int need = n - static_cast<int>(equalities.size());
  if (need < 0) return {false, 0.0};

  auto feasible = [&](const Vec& x) {
    for (int i = 0; i < lp.n_rows(); ++i) {
      double act = 0.0;
      for (int j = 0; j < n; ++j) act += lp.rows[i][j] * x[j];
      switch (lp.senses[i]) {
        case RowSense::le:
          if (act > lp.rhs[i] + 1e-7) return false;
          break;
        case RowSense::ge:
          if (act < lp.rhs[i] - 1e-7) return false;
          break;
        case RowSense::eq:
          if (std::abs(act - lp.rhs[i]) > 1e-7) return false;
          break;
      }
    }
    for (int j = 0; j < n; ++j)
      if (x[j] < lp.lower[j] - 1e-7 || x[j] > lp.upper[j] + 1e-7) return false;
    return true;
  };

  bool found = false;
  double best = inf;
  std::vector<int> pick(need, 0);
  const int m = static_cast<int>(optionals.size());

  auto try_active_set = [&](const std::vector<int>& chosen) {
    std::vector<Vec> a;
    Vec b;
    for (const Cut& c : equalities) {
      a.push_back(c.row);
      b.push_back(c.rhs);
    }
    for (int idx : chosen) {
      a.push_back(optionals[idx].row);
      b.push_back(optionals[idx].rhs);
    }
    // Reject singular systems via a determinant-ish pivot check inside
    // solve_linear: detect by residual instead.
    Vec x = solve_linear(a, b);
    for (double v : x)
      if (!std::isfinite(v)) return;
    for (size_t r = 0; r < a.size(); ++r) {
      double act = 0.0;
      for (int j = 0; j < n; ++j) act += a[r][j] * x[j];
      if (std::abs(act - b[r]) > 1e-6) return;  // singular/ill-posed active set
    }
    if (!feasible(x)) return;
    double obj = 0.0;
    for (int j = 0; j < n; ++j) obj += lp.objective[j] * x[j];
    if (obj < best) best = obj;
    found = true;
  };

  // Iterate over all `need`-subsets of the optional cuts.
  std::vector<int> idx(need);
  for (int i = 0; i < need; ++i) idx[i] = i;
  if (need == 0) {
    try_active_set({});
    return {found, best};
  }
  if (m < need) return {false, 0.0};
  for (;;) {
    try_active_set(idx);
    int i = need - 1;
    while (i >= 0 && idx[i] == m - need + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int k = i + 1; k < need; ++k) idx[k] = idx[k - 1] + 1;
  }
  return {found, best};
}

/// Random feasible bounded LP: x0 >= 0 is feasible by construction and the
/// nonnegative objective keeps the minimum finite.
inline LinearProgram random_feasible_lp(std::mt19937_64& rng, int n, int m) {
  LinearProgram lp = make_lp(n);
  for (int j = 0; j < n; ++j) lp.objective[j] = uniform_in(rng, 0.05, 2.0);
  Vec x0(n);
  for (double& v : x0) v = uniform_in(rng, 0.0, 3.0);
  for (int i = 0; i < m; ++i) {
    Vec row(n);
    for (double& v : row) v = uniform_in(rng, -2.0, 2.0);
    double act = 0.0;
    for (int j = 0; j < n; ++j) act += row[j] * x0[j];
    if (uniform01(rng) < 0.5) {
      lp.senses.push_back(RowSense::le);
      lp.rhs.push_back(act + uniform_in(rng, 0.1, 2.0));
    } else {
      lp.senses.push_back(RowSense::ge);
      lp.rhs.push_back(act - uniform_in(rng, 0.1, 2.0));
    }
    lp.rows.push_back(std::move(row));
  }
  return lp;
}

}  // namespace stackmf::testutil
