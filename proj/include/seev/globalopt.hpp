#pragma once

// Interval branch-and-bound over a box with linear side constraints, and a
// cutting-plane solver for convex objectives.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include <Eigen/Dense>

#include "seev/interval.hpp"
#include "seev/linear.hpp"
#include "seev/linprog.hpp"

namespace seev {

using PointObjective = std::function<double(const Eigen::VectorXd&)>;
using IntervalObjective = std::function<Interval(const IntervalBox&)>;

struct LinearConstraints {
  std::vector<Hyperplane> equalities;
  std::vector<Halfspace> inequalities;
  bool empty() const { return equalities.empty() && inequalities.empty(); }
};

struct MinProblem {
  int dim = 0;
  PointObjective f;
  IntervalObjective F;
  LinearConstraints constraints;
  IntervalBox box;
  // Optional: return false when the box provably holds no feasible point.
  std::function<bool(const IntervalBox&)> keep;
  // Optional: extra (nonlinear) feasibility test for incumbent candidates.
  std::function<bool(const Eigen::VectorXd&)> admissible;
};

enum class MinStatus {
  Certified,  // upper - lower <= delta
  Decided,    // threshold question answered before the gap closed
  Exhausted,  // node budget or resolution limit hit
  Empty,      // no feasible point
};

struct CertifiedMin {
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();
  Eigen::VectorXd candidate;  // argmin estimate; empty when none was found
  MinStatus status = MinStatus::Exhausted;
  long nodes = 0;

  double gap() const { return upper_bound - lower_bound; }
};

struct BbOptions {
  double delta = 1e-4;
  long max_nodes = 10'000'000;
  // When set, stop as soon as it is known whether min >= threshold.
  std::optional<double> threshold;
  double min_width = 1e-10;
  int contraction_rounds = 3;
  LpOptions lp;
};

namespace detail {

/// Tighten box so that a.x <= b can still hold; false when it cannot.
inline bool contract_leq(IntervalBox& box, const Eigen::VectorXd& a, double b) {
  const int n = box.dim();
  Interval total(0.0);
  for (int j = 0; j < n; ++j)
    if (a[j] != 0.0) total += Interval(a[j]) * box[j];
  const double scale = std::max(1.0, std::abs(b)) + a.cwiseAbs().maxCoeff();
  const double slack = 1e-12 * scale;
  if (total.lo() > b + slack) return false;
  for (int k = 0; k < n; ++k) {
    if (a[k] == 0.0) continue;
    const Interval own = Interval(a[k]) * box[k];
    // total - own encloses sum_{j != k}; widen for the cancellation error.
    const double rest_lo = total.lo() - own.lo() - 4e-16 * (std::abs(total.lo()) + own.mag());
    const double bound = (b + slack - rest_lo) / a[k];
    const double pad = 1e-15 * std::abs(bound) + 1e-300;
    double lo = box[k].lo(), hi = box[k].hi();
    if (a[k] > 0.0)
      hi = std::min(hi, bound + pad);
    else
      lo = std::max(lo, bound - pad);
    if (lo > hi) return false;
    box[k] = Interval(lo, hi);
  }
  return true;
}

inline bool contract(IntervalBox& box, const LinearConstraints& lc, int rounds) {
  for (int r = 0; r < rounds; ++r) {
    for (const auto& e : lc.equalities) {
      if (!contract_leq(box, e.a, e.b)) return false;
      if (!contract_leq(box, -e.a, -e.b)) return false;
    }
    for (const auto& h : lc.inequalities)
      if (!contract_leq(box, h.a, h.b)) return false;
  }
  return true;
}

struct BbNode {
  IntervalBox box;
  double lb;
  bool operator<(const BbNode& o) const { return lb > o.lb; }  // min-heap
};

}  // namespace detail

inline CertifiedMin bb_minimize(const MinProblem& p, const BbOptions& opt = {}) {
  if (!(opt.delta > 0.0)) throw std::invalid_argument("bb_minimize: delta must be positive");
  const double inf = std::numeric_limits<double>::infinity();
  CertifiedMin out;
  double pruned_min = inf;  // boxes dropped for clearing the threshold
  double leaf_min = inf;    // boxes too small to split further

  auto offer = [&](const Eigen::VectorXd& x) {
    if (p.admissible && !p.admissible(x)) return;
    const double v = p.f(x);
    if (v < out.upper_bound) {
      out.upper_bound = v;
      out.candidate = x;
    }
  };

  auto process = [&](IntervalBox box) -> std::optional<detail::BbNode> {
    ++out.nodes;
    if (!detail::contract(box, p.constraints, opt.contraction_rounds)) return std::nullopt;
    if (p.keep && !p.keep(box)) return std::nullopt;
    if (p.constraints.empty()) {
      offer(box.center());
    } else {
      LinearProgram lp = LinearProgram::over_box(box);
      lp.equalities = p.constraints.equalities;
      lp.inequalities = p.constraints.inequalities;
      try {
        const LpOutcome r = solve(lp, opt.lp);
        if (!r.feasible()) return std::nullopt;
        offer(r.witness);
      } catch (const NumericalFailure&) {
        // keep the box; it is only ever pruned on a proof
      }
    }
    const double lb = p.F(box).lo();
    if (lb >= out.upper_bound) return std::nullopt;
    if (opt.threshold && lb >= *opt.threshold) {
      pruned_min = std::min(pruned_min, lb);
      return std::nullopt;
    }
    return detail::BbNode{std::move(box), lb};
  };

  std::priority_queue<detail::BbNode> heap;
  if (auto root = process(p.box)) heap.push(std::move(*root));

  auto global_lb = [&](double top) { return std::min({top, leaf_min, pruned_min, out.upper_bound}); };

  while (!heap.empty()) {
    const double glb = global_lb(heap.top().lb);
    out.lower_bound = glb;
    if (opt.threshold) {
      if (glb >= *opt.threshold || out.upper_bound < *opt.threshold) {
        out.status = MinStatus::Decided;
        return out;
      }
    }
    if (out.upper_bound - glb <= opt.delta) {
      out.status = MinStatus::Certified;
      return out;
    }
    if (out.nodes >= opt.max_nodes) {
      out.status = MinStatus::Exhausted;
      return out;
    }
    detail::BbNode node = heap.top();
    heap.pop();
    if (node.box.max_width() < opt.min_width) {
      leaf_min = std::min(leaf_min, node.lb);
      continue;
    }
    auto [a, b] = node.box.bisect(node.box.widest());
    if (auto c = process(std::move(a))) heap.push(std::move(*c));
    if (auto c = process(std::move(b))) heap.push(std::move(*c));
  }

  out.lower_bound = global_lb(inf);
  if (leaf_min < inf && out.upper_bound - out.lower_bound > opt.delta &&
      !(opt.threshold && (out.lower_bound >= *opt.threshold || out.upper_bound < *opt.threshold))) {
    out.status = MinStatus::Exhausted;
  } else if (out.lower_bound == inf) {
    out.status = MinStatus::Empty;
  } else if (opt.threshold && (out.lower_bound >= *opt.threshold || out.upper_bound < *opt.threshold)) {
    out.status = out.upper_bound - out.lower_bound <= opt.delta ? MinStatus::Certified : MinStatus::Decided;
  } else {
    out.status = MinStatus::Certified;
  }
  return out;
}

struct KelleyOptions {
  double delta = 1e-4;
  int max_cuts = 200;
  std::optional<double> threshold;
  LpOptions lp;
};

/// Cutting-plane minimization of a convex f with gradient grad over the
/// polytope {constraints} within p.box. Lower bounds come from the LP over
/// the tangent-plane model, so they are valid whenever f is convex.
inline CertifiedMin convex_minimize(const MinProblem& p, const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                                    const KelleyOptions& opt = {}) {
  const int n = p.dim;
  CertifiedMin out;
  LinearProgram lp = LinearProgram::unbounded(n + 1);
  lp.lower.head(n) = p.box.lower();
  lp.upper.head(n) = p.box.upper();
  lp.lower[n] = p.F(p.box).lo();
  for (const auto& e : p.constraints.equalities) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n + 1);
    a.head(n) = e.a;
    lp.equalities.push_back({a, e.b});
  }
  for (const auto& h : p.constraints.inequalities) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n + 1);
    a.head(n) = h.a;
    lp.inequalities.push_back({a, h.b});
  }
  lp.objective = Eigen::VectorXd::Unit(n + 1, n);

  for (int it = 0; it <= opt.max_cuts; ++it) {
    ++out.nodes;
    const LpOutcome r = solve(lp, opt.lp);
    if (r.status == LpStatus::Infeasible) {
      out.status = MinStatus::Empty;
      out.lower_bound = std::numeric_limits<double>::infinity();
      return out;
    }
    if (!r.feasible()) break;
    const double t = r.witness[n];
    out.lower_bound = std::max(out.lower_bound, t - 1e-9 * (1.0 + std::abs(t)));
    const Eigen::VectorXd x = r.witness.head(n);
    const double fx = p.f(x);
    if (fx < out.upper_bound) {
      out.upper_bound = fx;
      out.candidate = x;
    }
    if (opt.threshold && (out.lower_bound >= *opt.threshold || out.upper_bound < *opt.threshold)) {
      out.status = out.gap() <= opt.delta ? MinStatus::Certified : MinStatus::Decided;
      return out;
    }
    if (out.gap() <= opt.delta) {
      out.status = MinStatus::Certified;
      return out;
    }
    const Eigen::VectorXd g = grad(x);
    Eigen::VectorXd a(n + 1);
    a.head(n) = g;
    a[n] = -1.0;
    lp.inequalities.push_back({a, g.dot(x) - fx});
  }
  out.status = MinStatus::Exhausted;
  return out;
}

}  // namespace seev
