#include "stackmf/lp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace stackmf {

namespace {
constexpr double kEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

void LinearProgram::validate() const {
  const size_t n = objective.size();
  if (rows.size() != senses.size() || rows.size() != rhs.size())
    throw std::invalid_argument("lp: row/sense/rhs counts differ");
  if (lower.size() != n || upper.size() != n)
    throw std::invalid_argument("lp: bound vectors must match variable count");
  for (const Vec& r : rows)
    if (r.size() != n) throw std::invalid_argument("lp: row width does not match variable count");
  for (double c : objective)
    if (std::isnan(c) || std::isinf(c)) throw std::invalid_argument("lp: non-finite objective");
  for (const Vec& r : rows)
    for (double a : r)
      if (std::isnan(a) || std::isinf(a)) throw std::invalid_argument("lp: non-finite row entry");
  for (double b : rhs)
    if (std::isnan(b) || std::isinf(b)) throw std::invalid_argument("lp: non-finite rhs");
  for (size_t j = 0; j < n; ++j)
    if (lower[j] > upper[j]) throw std::invalid_argument("lp: empty bound interval");
}

LinearProgram make_lp(int n_vars) {
  LinearProgram lp;
  lp.objective.assign(n_vars, 0.0);
  lp.lower.assign(n_vars, 0.0);
  lp.upper.assign(n_vars, kInf);
  return lp;
}

namespace {

// Internal standard form: min c'x', A'x' <= b', x' >= 0.
struct StandardForm {
  int n = 0;  // internal variable count
  Vec c;
  std::vector<Vec> a;
  Vec b;
  double obj_shift = 0.0;

  // internal variable -> (original var, sign); split free vars get two cols
  std::vector<std::pair<int, double>> var_map;
  Vec var_shift;  // per original variable

  // internal row -> (original row index or -1 for bound rows, multiplier for
  // recombining duals: d b_orig / d b_int direction)
  std::vector<std::pair<int, double>> row_map;
};

StandardForm to_standard(const LinearProgram& lp) {
  StandardForm sf;
  const int n0 = lp.n_vars();
  sf.var_shift.assign(n0, 0.0);
  std::vector<int> first_col(n0, -1);
  std::vector<int> second_col(n0, -1);
  for (int j = 0; j < n0; ++j) {
    if (lp.lower[j] > -kInf) {
      sf.var_shift[j] = lp.lower[j];
      first_col[j] = sf.n++;
      sf.var_map.push_back({j, 1.0});
    } else {
      first_col[j] = sf.n++;
      sf.var_map.push_back({j, 1.0});
      second_col[j] = sf.n++;
      sf.var_map.push_back({j, -1.0});
    }
  }
  sf.c.assign(sf.n, 0.0);
  for (int j = 0; j < n0; ++j) {
    sf.c[first_col[j]] += lp.objective[j];
    if (second_col[j] >= 0) sf.c[second_col[j]] -= lp.objective[j];
    sf.obj_shift += lp.objective[j] * sf.var_shift[j];
  }

  auto add_row = [&](const Vec& coeffs_orig, double rhs, int orig_row, double mult) {
    Vec row(sf.n, 0.0);
    double shift = 0.0;
    for (int j = 0; j < n0; ++j) {
      if (coeffs_orig[j] == 0.0) continue;
      row[first_col[j]] += coeffs_orig[j];
      if (second_col[j] >= 0) row[second_col[j]] -= coeffs_orig[j];
      shift += coeffs_orig[j] * sf.var_shift[j];
    }
    sf.a.push_back(std::move(row));
    sf.b.push_back(rhs - shift);
    sf.row_map.push_back({orig_row, mult});
  };

  for (int i = 0; i < lp.n_rows(); ++i) {
    switch (lp.senses[i]) {
      case RowSense::le:
        add_row(lp.rows[i], lp.rhs[i], i, 1.0);
        break;
      case RowSense::ge: {
        Vec neg = lp.rows[i];
        for (double& v : neg) v = -v;
        add_row(neg, -lp.rhs[i], i, -1.0);
        break;
      }
      case RowSense::eq: {
        add_row(lp.rows[i], lp.rhs[i], i, 1.0);
        Vec neg = lp.rows[i];
        for (double& v : neg) v = -v;
        add_row(neg, -lp.rhs[i], i, -1.0);
        break;
      }
    }
  }
  // Finite upper bounds become rows over the shifted variables.
  for (int j = 0; j < n0; ++j) {
    if (lp.upper[j] >= kInf) continue;
    Vec unit(n0, 0.0);
    unit[j] = 1.0;
    add_row(unit, lp.upper[j], -1, 0.0);
  }
  return sf;
}

// Dense tableau simplex over columns [x | slack | artificial].
struct Tableau {
  int m = 0, n = 0, n_art = 0;
  // row-major, width n + m + n_art + 1 (rhs last)
  std::vector<Vec> t;
  Vec cost;       // phase-II reduced-cost row, same width
  Vec art_cost;   // phase-I reduced-cost row
  std::vector<int> basis;      // basic column per row
  std::vector<bool> negated;   // row sign flipped to make rhs nonnegative
  int width = 0;

  int slack_col(int i) const { return n + i; }
};

void pivot(Tableau& tb, int row, int col) {
  Vec& prow = tb.t[row];
  const double inv = 1.0 / prow[col];
  for (double& v : prow) v *= inv;
  for (int i = 0; i < tb.m; ++i) {
    if (i == row) continue;
    Vec& r = tb.t[i];
    const double f = r[col];
    if (f == 0.0) continue;
    for (int j = 0; j < tb.width; ++j) r[j] -= f * prow[j];
  }
  for (Vec* costs : {&tb.cost, &tb.art_cost}) {
    const double f = (*costs)[col];
    if (f == 0.0) continue;
    for (int j = 0; j < tb.width; ++j) (*costs)[j] -= f * prow[j];
  }
  tb.basis[row] = col;
}

// Bland's rule: entering = lowest-index column with negative reduced cost;
// leaving = min ratio, ties by lowest basic variable index.
// Returns 0 done, 1 pivoted, -1 unbounded (entering stored in *ent).
int simplex_step(Tableau& tb, const Vec& costs, int max_col, int* ent) {
  int entering = -1;
  for (int j = 0; j < max_col; ++j) {
    if (costs[j] < -kEps) {
      entering = j;
      break;
    }
  }
  if (entering < 0) return 0;
  int leave = -1;
  double best_ratio = 0.0;
  for (int i = 0; i < tb.m; ++i) {
    const double a = tb.t[i][entering];
    if (a <= kEps) continue;
    const double ratio = tb.t[i][tb.width - 1] / a;
    if (leave < 0 || ratio < best_ratio - kEps ||
        (ratio < best_ratio + kEps && tb.basis[i] < tb.basis[leave])) {
      leave = i;
      best_ratio = ratio;
    }
  }
  if (leave < 0) {
    *ent = entering;
    return -1;
  }
  pivot(tb, leave, entering);
  return 1;
}

}  // namespace

LPSolution solve_lp(const LinearProgram& lp, int pivot_cap) {
  lp.validate();
  const StandardForm sf = to_standard(lp);

  Tableau tb;
  tb.m = static_cast<int>(sf.a.size());
  tb.n = sf.n;
  tb.negated.assign(tb.m, false);
  int n_art = 0;
  for (int i = 0; i < tb.m; ++i)
    if (sf.b[i] < 0.0) ++n_art;
  tb.n_art = n_art;
  tb.width = tb.n + tb.m + tb.n_art + 1;
  tb.t.assign(tb.m, Vec(tb.width, 0.0));
  tb.basis.assign(tb.m, -1);

  int art_next = tb.n + tb.m;
  for (int i = 0; i < tb.m; ++i) {
    const bool neg = sf.b[i] < 0.0;
    tb.negated[i] = neg;
    const double sign = neg ? -1.0 : 1.0;
    for (int j = 0; j < tb.n; ++j) tb.t[i][j] = sign * sf.a[i][j];
    tb.t[i][tb.slack_col(i)] = sign;
    tb.t[i][tb.width - 1] = sign * sf.b[i];
    if (neg) {
      tb.t[i][art_next] = 1.0;
      tb.basis[i] = art_next++;
    } else {
      tb.basis[i] = tb.slack_col(i);
    }
  }

  tb.cost.assign(tb.width, 0.0);
  for (int j = 0; j < tb.n; ++j) tb.cost[j] = sf.c[j];
  tb.art_cost.assign(tb.width, 0.0);
  for (int j = tb.n + tb.m; j < tb.width - 1; ++j) tb.art_cost[j] = 1.0;
  // Price out the initially basic artificials.
  for (int i = 0; i < tb.m; ++i) {
    if (tb.basis[i] < tb.n + tb.m) continue;
    for (int j = 0; j < tb.width; ++j) tb.art_cost[j] -= tb.t[i][j];
  }

  LPSolution sol;
  int pivots = 0;

  // Phase I
  if (tb.n_art > 0) {
    for (;;) {
      int ent = -1;
      int rc = simplex_step(tb, tb.art_cost, tb.n + tb.m, &ent);
      if (rc == 0) break;
      if (rc == -1) break;  // phase-I objective is bounded below by zero
      if (++pivots > pivot_cap) throw std::runtime_error("solve_lp: pivot cap exceeded in phase I");
    }
    const double phase1 = -tb.art_cost[tb.width - 1];
    if (phase1 > 1e-7) {
      sol.status = LPStatus::infeasible;
      sol.pivots = pivots;
      // Farkas certificate from the phase-I duals: original-row multipliers
      // proving no feasible point exists.
      sol.certificate.assign(lp.n_rows(), 0.0);
      for (int i = 0; i < tb.m; ++i) {
        // d(phase-I objective)/d(rhs): minus the slack's reduced cost,
        // independent of row negation.
        const double shadow = -tb.art_cost[tb.slack_col(i)];
        const auto [orig, mult] = sf.row_map[i];
        if (orig >= 0) sol.certificate[orig] += shadow * mult;
      }
      return sol;
    }
    // Drive remaining artificials out of the basis.
    for (int i = 0; i < tb.m; ++i) {
      if (tb.basis[i] < tb.n + tb.m) continue;
      int col = -1;
      for (int j = 0; j < tb.n + tb.m; ++j)
        if (std::abs(tb.t[i][j]) > kEps) {
          col = j;
          break;
        }
      if (col >= 0) {
        pivot(tb, i, col);
        ++pivots;
      }
      // A fully zero row is redundant; its artificial stays basic at zero.
    }
  }

  // Phase II
  for (;;) {
    int ent = -1;
    int rc = simplex_step(tb, tb.cost, tb.n + tb.m, &ent);
    if (rc == 0) break;
    if (rc == -1) {
      sol.status = LPStatus::unbounded;
      sol.pivots = pivots;
      // Improving ray mapped back to the original variables.
      Vec ray_int(tb.n, 0.0);
      if (ent < tb.n) ray_int[ent] = 1.0;
      for (int i = 0; i < tb.m; ++i)
        if (tb.basis[i] < tb.n) ray_int[tb.basis[i]] -= tb.t[i][ent];
      sol.certificate.assign(lp.n_vars(), 0.0);
      for (int j = 0; j < tb.n; ++j) {
        const auto [orig, sign] = sf.var_map[j];
        sol.certificate[orig] += sign * ray_int[j];
      }
      return sol;
    }
    if (++pivots > pivot_cap) throw std::runtime_error("solve_lp: pivot cap exceeded in phase II");
  }

  // Extract primal values.
  Vec x_int(tb.n, 0.0);
  for (int i = 0; i < tb.m; ++i)
    if (tb.basis[i] < tb.n) x_int[tb.basis[i]] = tb.t[i][tb.width - 1];
  sol.x.assign(lp.n_vars(), 0.0);
  for (int j = 0; j < tb.n; ++j) {
    const auto [orig, sign] = sf.var_map[j];
    sol.x[orig] += sign * x_int[j];
  }
  for (int j = 0; j < lp.n_vars(); ++j) sol.x[j] += sf.var_shift[j];

  sol.objective = 0.0;
  for (int j = 0; j < lp.n_vars(); ++j) sol.objective += lp.objective[j] * sol.x[j];

  // Shadow prices: for every internal <= row, d obj / d rhs_int equals minus
  // the reduced cost of its slack column, regardless of row negation.
  sol.y.assign(lp.n_rows(), 0.0);
  for (int i = 0; i < tb.m; ++i) {
    const double shadow = -tb.cost[tb.slack_col(i)];
    const auto [orig, mult] = sf.row_map[i];
    if (orig >= 0) sol.y[orig] += shadow * mult;
  }
  sol.status = LPStatus::optimal;
  sol.pivots = pivots;
  return sol;
}

LpResiduals verify_lp_solution(const LinearProgram& lp, const LPSolution& sol) {
  LpResiduals res;
  const int n = lp.n_vars();
  double scale = 1.0;
  for (double c : lp.objective) scale = std::max(scale, std::abs(c));
  for (double b : lp.rhs) scale = std::max(scale, std::abs(b));
  for (double v : sol.x) scale = std::max(scale, std::abs(v));

  Vec activity(lp.n_rows(), 0.0);
  for (int i = 0; i < lp.n_rows(); ++i)
    for (int j = 0; j < n; ++j) activity[i] += lp.rows[i][j] * sol.x[j];

  for (int i = 0; i < lp.n_rows(); ++i) {
    double viol = 0.0;
    switch (lp.senses[i]) {
      case RowSense::le: viol = activity[i] - lp.rhs[i]; break;
      case RowSense::ge: viol = lp.rhs[i] - activity[i]; break;
      case RowSense::eq: viol = std::abs(activity[i] - lp.rhs[i]); break;
    }
    res.primal = std::max(res.primal, viol);
    // Sign of the shadow price and complementary slackness.
    if (lp.senses[i] == RowSense::le) {
      res.dual = std::max(res.dual, sol.y[i]);  // must be <= 0
      res.slackness = std::max(res.slackness, std::abs(sol.y[i] * (lp.rhs[i] - activity[i])));
    } else if (lp.senses[i] == RowSense::ge) {
      res.dual = std::max(res.dual, -sol.y[i]);  // must be >= 0
      res.slackness = std::max(res.slackness, std::abs(sol.y[i] * (activity[i] - lp.rhs[i])));
    }
  }
  for (int j = 0; j < n; ++j) {
    res.primal = std::max(res.primal, lp.lower[j] - sol.x[j]);
    res.primal = std::max(res.primal, sol.x[j] - lp.upper[j]);
  }

  // Reduced costs w.r.t. the reported row duals; bound duals are implicit.
  for (int j = 0; j < n; ++j) {
    double rc = lp.objective[j];
    for (int i = 0; i < lp.n_rows(); ++i) rc -= sol.y[i] * lp.rows[i][j];
    const bool at_lower = lp.lower[j] > -kInf && sol.x[j] <= lp.lower[j] + 1e-7 * scale;
    const bool at_upper = lp.upper[j] < kInf && sol.x[j] >= lp.upper[j] - 1e-7 * scale;
    if (at_lower && at_upper) continue;
    if (at_lower)
      res.dual = std::max(res.dual, -rc);  // rc must be >= 0
    else if (at_upper)
      res.dual = std::max(res.dual, rc);  // rc must be <= 0
    else
      res.dual = std::max(res.dual, std::abs(rc));
  }

  // Duality gap: c'x = y'b + contributions of active variable bounds.
  double dual_obj = 0.0;
  for (int i = 0; i < lp.n_rows(); ++i) dual_obj += sol.y[i] * lp.rhs[i];
  for (int j = 0; j < n; ++j) {
    double rc = lp.objective[j];
    for (int i = 0; i < lp.n_rows(); ++i) rc -= sol.y[i] * lp.rows[i][j];
    const bool at_upper = lp.upper[j] < kInf && sol.x[j] >= lp.upper[j] - 1e-7 * scale;
    if (at_upper && rc < 0.0)
      dual_obj += rc * lp.upper[j];
    else if (lp.lower[j] != 0.0 && lp.lower[j] > -kInf && rc > 0.0)
      dual_obj += rc * lp.lower[j];
  }
  res.gap = std::abs(sol.objective - dual_obj) / scale;
  return res;
}

void write_lp(const LinearProgram& lp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "vars " << lp.n_vars() << "\n";
  out << "minimize";
  for (double c : lp.objective) out << ' ' << c;
  out << "\n";
  for (int j = 0; j < lp.n_vars(); ++j) {
    if (lp.lower[j] == 0.0 && lp.upper[j] >= kInf) continue;
    out << "bound " << j << ' ';
    if (lp.lower[j] <= -kInf)
      out << "-inf";
    else
      out << lp.lower[j];
    out << ' ';
    if (lp.upper[j] >= kInf)
      out << "inf";
    else
      out << lp.upper[j];
    out << "\n";
  }
  for (int i = 0; i < lp.n_rows(); ++i) {
    out << "row ";
    switch (lp.senses[i]) {
      case RowSense::le: out << "le"; break;
      case RowSense::eq: out << "eq"; break;
      case RowSense::ge: out << "ge"; break;
    }
    for (double a : lp.rows[i]) out << ' ' << a;
    out << ' ' << lp.rhs[i] << "\n";
  }
}

LinearProgram read_lp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  LinearProgram lp;
  std::string line;
  int n = -1;
  auto parse_bound = [](const std::string& tok) {
    if (tok == "-inf") return -kInf;
    if (tok == "inf") return kInf;
    return std::stod(tok);
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "vars") {
      ls >> n;
      lp = make_lp(n);
    } else if (kw == "minimize") {
      for (int j = 0; j < n; ++j) ls >> lp.objective[j];
    } else if (kw == "bound") {
      int j;
      std::string lo, hi;
      ls >> j >> lo >> hi;
      lp.lower[j] = parse_bound(lo);
      lp.upper[j] = parse_bound(hi);
    } else if (kw == "row") {
      std::string sense;
      ls >> sense;
      Vec row(n);
      for (int j = 0; j < n; ++j) ls >> row[j];
      double b;
      ls >> b;
      lp.rows.push_back(std::move(row));
      lp.rhs.push_back(b);
      lp.senses.push_back(sense == "le" ? RowSense::le
                                        : sense == "eq" ? RowSense::eq : RowSense::ge);
    } else {
      throw std::runtime_error("read_lp: unknown keyword '" + kw + "'");
    }
  }
  if (n < 0) throw std::runtime_error("read_lp: missing vars line");
  return lp;
}

}  // namespace stackmf
