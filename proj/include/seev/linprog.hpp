#pragma once

// Dense two-phase simplex with Bland's rule, and the feasibility programs the
// boundary enumeration is built from.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "seev/error.hpp"
#include "seev/interval.hpp"
#include "seev/linear.hpp"
#include "seev/network.hpp"

namespace seev {

struct LinearProgram {
  int dim = 0;
  Eigen::VectorXd objective;  // minimized; empty or zero means pure feasibility
  std::vector<Hyperplane> equalities;
  std::vector<Halfspace> inequalities;
  Eigen::VectorXd lower;  // may hold -inf
  Eigen::VectorXd upper;  // may hold +inf

  static LinearProgram over_box(const IntervalBox& box) {
    LinearProgram lp;
    lp.dim = box.dim();
    lp.lower = box.lower();
    lp.upper = box.upper();
    return lp;
  }
  static LinearProgram unbounded(int dim) {
    LinearProgram lp;
    lp.dim = dim;
    lp.lower = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
    lp.upper = Eigen::VectorXd::Constant(dim, std::numeric_limits<double>::infinity());
    return lp;
  }
};

enum class LpStatus { Feasible, Infeasible, Unbounded };

struct LpOutcome {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd witness;  // set when Feasible (and a feasible point when Unbounded)
  double objective_value = 0.0;

  bool feasible() const { return status == LpStatus::Feasible; }
};

struct LpOptions {
  double feas_tol = 1e-7;
  double pivot_tol = 1e-9;
  double cost_tol = 1e-10;
  int max_iterations = 20000;
};

/// Largest violation of the program's constraints at x, with every row
/// scaled to unit max-coefficient.
inline double max_violation(const LinearProgram& lp, const Eigen::VectorXd& x) {
  double worst = 0.0;
  auto scale = [](const Eigen::VectorXd& a) {
    const double m = a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
    return m > 0.0 ? m : 1.0;
  };
  for (const auto& e : lp.equalities) worst = std::max(worst, std::abs(e.a.dot(x) - e.b) / scale(e.a));
  for (const auto& h : lp.inequalities) worst = std::max(worst, (h.a.dot(x) - h.b) / scale(h.a));
  for (int k = 0; k < lp.dim; ++k) {
    worst = std::max(worst, lp.lower[k] - x[k]);
    worst = std::max(worst, x[k] - lp.upper[k]);
  }
  return worst;
}

namespace detail {

// Tableau simplex on  min c.y  s.t.  A y = rhs (rhs >= 0), y >= 0.
class Tableau {
 public:
  Tableau(Eigen::MatrixXd a, Eigen::VectorXd rhs, std::vector<int> basis, const LpOptions& opt)
      : rows_(static_cast<int>(a.rows())), cols_(static_cast<int>(a.cols())), opt_(opt), basis_(std::move(basis)) {
    t_ = Eigen::MatrixXd::Zero(rows_ + 1, cols_ + 1);
    t_.topLeftCorner(rows_, cols_) = a;
    t_.topRightCorner(rows_, 1) = rhs;
    allowed_.assign(cols_, true);
  }

  void forbid(int col) { allowed_[col] = false; }

  enum class Result { Optimal, Unbounded };

  // Loads cost vector c (size cols) into the objective row, reduced against the basis.
  void set_cost(const Eigen::VectorXd& c) {
    t_.row(rows_).setZero();
    t_.row(rows_).head(cols_) = c.transpose();
    for (int r = 0; r < rows_; ++r) {
      const double cb = c[basis_[r]];
      if (cb != 0.0) t_.row(rows_) -= cb * t_.row(r);
    }
  }

  Result run() {
    for (int it = 0; it < opt_.max_iterations; ++it) {
      int enter = -1;
      for (int j = 0; j < cols_; ++j)
        if (allowed_[j] && t_(rows_, j) < -opt_.cost_tol) {
          enter = j;  // Bland: lowest index
          break;
        }
      if (enter < 0) return Result::Optimal;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int r = 0; r < rows_; ++r) {
        const double a = t_(r, enter);
        if (a <= opt_.pivot_tol) continue;
        const double ratio = t_(r, cols_) / a;
        // Ties (within round-off) go to the lowest basic variable index.
        if (leave < 0 || ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis_[r] < basis_[leave])) {
          best = std::min(best, ratio);
          leave = r;
        }
      }
      if (leave < 0) return Result::Unbounded;
      pivot(leave, enter);
    }
    throw NumericalFailure("simplex: iteration limit reached");
  }

  void pivot(int r, int c) {
    const double p = t_(r, c);
    if (std::abs(p) < opt_.pivot_tol) throw NumericalFailure("simplex: pivot below tolerance");
    t_.row(r) /= p;
    for (int i = 0; i <= rows_; ++i)
      if (i != r) {
        const double f = t_(i, c);
        if (f != 0.0) t_.row(i) -= f * t_.row(r);
      }
    t_(r, c) = 1.0;
    basis_[r] = c;
    // Clean tiny negative right-hand sides from round-off.
    for (int i = 0; i < rows_; ++i)
      if (t_(i, cols_) < 0.0 && t_(i, cols_) > -1e-13) t_(i, cols_) = 0.0;
  }

  double objective() const { return -t_(rows_, cols_); }
  int rows() const { return rows_; }
  int basis(int r) const { return basis_[r]; }
  double entry(int r, int c) const { return t_(r, c); }
  double rhs(int r) const { return t_(r, cols_); }

  Eigen::VectorXd solution() const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(cols_);
    for (int r = 0; r < rows_; ++r) y[basis_[r]] = t_(r, cols_);
    return y;
  }

 private:
  int rows_, cols_;
  LpOptions opt_;
  Eigen::MatrixXd t_;
  std::vector<int> basis_;
  std::vector<bool> allowed_;
};

}  // namespace detail

namespace detail {

inline LpOutcome solve_once(const LinearProgram& lp, const LpOptions& opt) {
  const int n = lp.dim;
  if (lp.lower.size() != n || lp.upper.size() != n) throw DimensionMismatch("solve: box dimension mismatch");
  for (int k = 0; k < n; ++k)
    if (lp.lower[k] > lp.upper[k]) return {LpStatus::Infeasible, {}, 0.0};

  // x_k = offset_k + sign_k * y_col(k)  [- y_col(k)+1 for free variables]
  std::vector<int> col_of(n), neg_col(n, -1);
  Eigen::VectorXd offset = Eigen::VectorXd::Zero(n), sign = Eigen::VectorXd::Ones(n);
  int ncols = 0;
  struct UpperRow {
    int col;
    double bound;
  };
  std::vector<UpperRow> uppers;
  for (int k = 0; k < n; ++k) {
    const bool lo_fin = std::isfinite(lp.lower[k]), hi_fin = std::isfinite(lp.upper[k]);
    col_of[k] = ncols++;
    if (lo_fin) {
      offset[k] = lp.lower[k];
      if (hi_fin) uppers.push_back({col_of[k], lp.upper[k] - lp.lower[k]});
    } else if (hi_fin) {
      offset[k] = lp.upper[k];
      sign[k] = -1.0;
    } else {
      neg_col[k] = ncols++;
    }
  }

  // Constraint rows in y-space, scaled to unit max coefficient.
  struct Row {
    Eigen::VectorXd a;  // over y columns (structural only)
    double b;
    bool equality;
  };
  std::vector<Row> rows;
  auto add_row = [&](const Eigen::VectorXd& a, double b, bool eq) -> bool {
    if (a.size() != n) throw DimensionMismatch("solve: constraint dimension mismatch");
    const double m = a.cwiseAbs().maxCoeff();
    if (!std::isfinite(m) || !std::isfinite(b)) throw Error("solve: non-finite constraint");
    if (m < 1e-14) {
      // 0 = b or 0 <= b
      const double scaled = b;
      return eq ? std::abs(scaled) <= opt.feas_tol : scaled >= -opt.feas_tol;
    }
    Eigen::VectorXd ay = Eigen::VectorXd::Zero(ncols);
    double by = b;
    for (int k = 0; k < n; ++k) {
      by -= a[k] * offset[k];
      ay[col_of[k]] += a[k] * sign[k];
      if (neg_col[k] >= 0) ay[neg_col[k]] -= a[k];
    }
    rows.push_back({ay / m, by / m, eq});
    return true;
  };
  for (const auto& e : lp.equalities)
    if (!add_row(e.a, e.b, true)) return {LpStatus::Infeasible, {}, 0.0};
  for (const auto& h : lp.inequalities)
    if (!add_row(h.a, h.b, false)) return {LpStatus::Infeasible, {}, 0.0};
  for (const auto& u : uppers) {
    Eigen::VectorXd ay = Eigen::VectorXd::Zero(ncols);
    ay[u.col] = 1.0;
    rows.push_back({ay, u.bound, false});
  }

  const int m = static_cast<int>(rows.size());
  int nslack = 0;
  for (const auto& r : rows) nslack += r.equality ? 0 : 1;
  // Columns: structural | slacks | artificials
  const int total_cols = ncols + nslack + m;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, total_cols);
  Eigen::VectorXd rhs(m);
  std::vector<int> basis(m);
  std::vector<bool> needs_artificial(m, true);
  int slack = ncols;
  for (int r = 0; r < m; ++r) {
    double s = rows[r].b < 0.0 ? -1.0 : 1.0;
    a.row(r).head(ncols) = s * rows[r].a.transpose();
    rhs[r] = s * rows[r].b;
    if (!rows[r].equality) {
      a(r, slack) = s;
      if (s > 0.0) {
        basis[r] = slack;
        needs_artificial[r] = false;
      }
      ++slack;
    }
    const int art = ncols + nslack + r;
    a(r, art) = 1.0;
    if (needs_artificial[r]) basis[r] = art;
  }

  detail::Tableau tab(a, rhs, basis, opt);
  for (int r = 0; r < m; ++r)
    if (!needs_artificial[r]) tab.forbid(ncols + nslack + r);

  Eigen::VectorXd cost1 = Eigen::VectorXd::Zero(total_cols);
  for (int r = 0; r < m; ++r)
    if (needs_artificial[r]) cost1[ncols + nslack + r] = 1.0;
  tab.set_cost(cost1);
  tab.run();
  if (tab.objective() > opt.feas_tol) return {LpStatus::Infeasible, {}, 0.0};

  // Drive artificials out of the basis; rows where that is impossible are redundant.
  for (int r = 0; r < m; ++r) {
    if (tab.basis(r) < ncols + nslack) continue;
    int best = -1;
    double best_mag = 1e-9;
    for (int j = 0; j < ncols + nslack; ++j)
      if (std::abs(tab.entry(r, j)) > best_mag) {
        best_mag = std::abs(tab.entry(r, j));
        best = j;
      }
    if (best >= 0) tab.pivot(r, best);
  }
  for (int r = 0; r < m; ++r) tab.forbid(ncols + nslack + r);

  LpOutcome out{LpStatus::Feasible, {}, 0.0};
  const bool has_objective = lp.objective.size() == n && lp.objective.cwiseAbs().maxCoeff() > 0.0;
  if (has_objective) {
    Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(total_cols);
    for (int k = 0; k < n; ++k) {
      cost2[col_of[k]] += lp.objective[k] * sign[k];
      if (neg_col[k] >= 0) cost2[neg_col[k]] -= lp.objective[k];
    }
    tab.set_cost(cost2);
    if (tab.run() == detail::Tableau::Result::Unbounded) out.status = LpStatus::Unbounded;
  }

  auto to_x = [&](const Eigen::VectorXd& y) {
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) {
      x[k] = offset[k] + sign[k] * y[col_of[k]];
      if (neg_col[k] >= 0) x[k] -= y[neg_col[k]];
    }
    // Round-off can push box coordinates a hair outside; the box is exact.
    for (int k = 0; k < n; ++k) x[k] = std::clamp(x[k], lp.lower[k], lp.upper[k]);
    return x;
  };
  Eigen::VectorXd x = to_x(tab.solution());
  if (max_violation(lp, x) > opt.feas_tol) {
    // the tableau drifted; recompute the basic solution from the original rows
    Eigen::MatrixXd b(m, m);
    for (int r = 0; r < m; ++r) b.col(r) = a.col(tab.basis(r));
    Eigen::FullPivLU<Eigen::MatrixXd> lu(b);
    if (lu.isInvertible()) {
      const Eigen::VectorXd yb = lu.solve(rhs);
      Eigen::VectorXd y = Eigen::VectorXd::Zero(total_cols);
      for (int r = 0; r < m; ++r) y[tab.basis(r)] = std::max(0.0, yb[r]);
      x = to_x(y);
    }
  }
  if (max_violation(lp, x) > opt.feas_tol)
    throw NumericalFailure("simplex: witness fails re-substitution");
  out.witness = x;
  out.objective_value = has_objective ? lp.objective.dot(x) : 0.0;
  return out;
}

}  // namespace detail

/// Solves the program. Feasible witnesses are re-substituted and must meet
/// every constraint within feas_tol. A failed solve is retried with stricter
/// pivot tolerances before NumericalFailure is thrown.
inline LpOutcome solve(const LinearProgram& lp, const LpOptions& opt = {}) {
  LpOptions o = opt;
  for (int attempt = 0;; ++attempt) {
    try {
      return detail::solve_once(lp, o);
    } catch (const NumericalFailure&) {
      if (attempt == 2) throw;
      o.pivot_tol = std::max(o.pivot_tol * 100.0, 1e-9);
    }
  }
}

// ---------------------------------------------------------------------------
// Enumeration programs

/// Is the zero level of b met inside the closed region of S (within box)?
inline LpOutcome boundary_lp(const Network& net, const RegionAffine& ra, const IntervalBox& box,
                             const LpOptions& opt = {}) {
  LinearProgram lp = LinearProgram::over_box(box);
  lp.equalities.push_back(ra.output.zero_set());
  lp.inequalities = region_constraints(net, ra);
  return solve(lp, opt);
}

inline LpOutcome boundary_lp(const Network& net, const ActivationSet& s, const IntervalBox& box,
                             const LpOptions& opt = {}) {
  return boundary_lp(net, region_affine(net, s), box, opt);
}

/// Hypercube over-approximation of the region of S within box: per
/// coordinate, the min and max over the region. nullopt when the region
/// misses the box.
inline std::optional<IntervalBox> bounding_box(const Network& net, const RegionAffine& ra, const IntervalBox& box,
                                               const LpOptions& opt = {}) {
  LinearProgram lp = LinearProgram::over_box(box);
  lp.inequalities = region_constraints(net, ra);
  IntervalVector out;
  const int n = box.dim();
  for (int k = 0; k < n; ++k) {
    lp.objective = Eigen::VectorXd::Unit(n, k);
    const LpOutcome lo = solve(lp, opt);
    if (!lo.feasible()) return std::nullopt;
    lp.objective = -Eigen::VectorXd::Unit(n, k);
    const LpOutcome hi = solve(lp, opt);
    if (!hi.feasible()) return std::nullopt;
    const double a = std::max(box[k].lo(), lo.witness[k]);
    const double b = std::min(box[k].hi(), hi.witness[k]);
    out.emplace_back(std::min(a, b), std::max(a, b));
  }
  return IntervalBox(std::move(out));
}

inline std::optional<IntervalBox> bounding_box(const Network& net, const ActivationSet& s, const IntervalBox& box,
                                               const LpOptions& opt = {}) {
  return bounding_box(net, region_affine(net, s), box, opt);
}

/// Does the face of neuron `flip` (its pre-activation hyperplane under S)
/// meet the zero level of b inside the hypercube `hull` of the region?
inline LpOutcome uslp(const Network& net, const RegionAffine& ra, Neuron flip, const IntervalBox& hull,
                      const LpOptions& opt = {}) {
  LinearProgram lp = LinearProgram::over_box(hull);
  lp.equalities.push_back(ra.output.zero_set());
  lp.equalities.push_back(ra.neuron(flip).zero_set());
  (void)net;
  return solve(lp, opt);
}

inline LpOutcome uslp(const Network& net, const ActivationSet& s, Neuron flip, const IntervalBox& box,
                      const LpOptions& opt = {}) {
  const RegionAffine ra = region_affine(net, s);
  const auto hull = bounding_box(net, ra, box, opt);
  if (!hull) return {LpStatus::Infeasible, {}, 0.0};
  return uslp(net, ra, flip, *hull, opt);
}

/// Exact version of uslp: the face of `flip` inside the closed region of S
/// (not just its hypercube) meets the zero level.
inline LpOutcome face_lp(const Network& net, const RegionAffine& ra, Neuron flip, const IntervalBox& box,
                         const LpOptions& opt = {}) {
  LinearProgram lp = LinearProgram::over_box(box);
  lp.equalities.push_back(ra.output.zero_set());
  lp.equalities.push_back(ra.neuron(flip).zero_set());
  auto cons = region_constraints(net, ra);
  cons.erase(cons.begin() + net.flat_index(flip));
  lp.inequalities = std::move(cons);
  return solve(lp, opt);
}

/// Do the closed regions of all sets meet on the zero level of b?
inline LpOutcome hinge_lp(const Network& net, const std::vector<RegionAffine>& regions, const IntervalBox& box,
                          const LpOptions& opt = {}) {
  if (regions.size() < 2) throw std::invalid_argument("hinge_lp: at least two regions required");
  LinearProgram lp = LinearProgram::over_box(box);
  for (const auto& ra : regions) {
    lp.equalities.push_back(ra.output.zero_set());
    auto cons = region_constraints(net, ra);
    lp.inequalities.insert(lp.inequalities.end(), cons.begin(), cons.end());
  }
  return solve(lp, opt);
}

inline LpOutcome hinge_lp(const Network& net, const std::vector<ActivationSet>& regions, const IntervalBox& box,
                          const LpOptions& opt = {}) {
  if (regions.size() < 2) throw std::invalid_argument("hinge_lp: at least two regions required");
  std::vector<RegionAffine> ras;
  for (const auto& s : regions) ras.push_back(region_affine(net, s));
  return hinge_lp(net, ras, box, opt);
}

}  // namespace seev
