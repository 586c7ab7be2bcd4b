#pragma once

// The three families of safety conditions checked on the boundary of
// D = {b >= 0}: correctness (D inside the safe set), hyperplane (each flat
// piece of the boundary can be held), and hinge (each fold can be held).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seev/globalopt.hpp"
#include "seev/interval.hpp"
#include "seev/linprog.hpp"
#include "seev/network.hpp"
#include "seev/systems.hpp"

namespace seev {

enum class VerdictStatus { Safe, Counterexample, Undecided };

enum class DischargePath { SufficientZeroInput, SufficientSignConsensus, ConstantGNonzero, ConvexSolve, BranchAndBound };

inline const char* to_string(DischargePath p) {
  switch (p) {
    case DischargePath::SufficientZeroInput: return "zero-input";
    case DischargePath::SufficientSignConsensus: return "sign-consensus";
    case DischargePath::ConstantGNonzero: return "constant-g";
    case DischargePath::ConvexSolve: return "convex";
    case DischargePath::BranchAndBound: return "branch-and-bound";
  }
  return "?";
}

inline bool is_sufficient(DischargePath p) {
  return p == DischargePath::SufficientZeroInput || p == DischargePath::SufficientSignConsensus ||
         p == DischargePath::ConstantGNonzero;
}

struct ConditionVerdict {
  VerdictStatus status = VerdictStatus::Undecided;
  DischargePath path = DischargePath::BranchAndBound;
  Eigen::VectorXd point;  // counterexample, or best candidate when undecided
  std::string detail;
  double lower_bound = -std::numeric_limits<double>::infinity();

  bool safe() const { return status == VerdictStatus::Safe; }
};

struct ConditionOptions {
  double delta = 1e-4;
  long max_nodes = 200'000;
  double min_width = 1e-9;
  double u_cap = 1e3;             // |u|_inf cap used for bounds when U is unbounded
  double nagumo_tol = 1e-6;       // |z| below this counts as on a neuron face
  int max_unstable = 12;
  bool fast_paths = true;         // try the sufficient conditions before the exact check
  LpOptions lp;
};

// ---------------------------------------------------------------------------
// Geometry

/// The flat boundary piece of S: zero level of the region's form inside its
/// closed region and the domain.
inline LinearConstraints facet_constraints(const Network& net, const RegionAffine& ra) {
  LinearConstraints lc;
  lc.equalities.push_back(ra.output.zero_set());
  lc.inequalities = region_constraints(net, ra);
  return lc;
}

inline LinearConstraints hinge_constraints(const Network& net, const std::vector<RegionAffine>& ras) {
  LinearConstraints lc;
  for (const auto& ra : ras) {
    lc.equalities.push_back(ra.output.zero_set());
    auto cons = region_constraints(net, ra);
    lc.inequalities.insert(lc.inequalities.end(), cons.begin(), cons.end());
  }
  return lc;
}

inline LinearProgram program_of(const LinearConstraints& lc, const IntervalBox& box) {
  LinearProgram lp = LinearProgram::over_box(box);
  lp.equalities = lc.equalities;
  lp.inequalities = lc.inequalities;
  return lp;
}

/// Coordinate-wise extent of a polytope; nullopt when it is empty.
inline std::optional<IntervalBox> polytope_box(const LinearConstraints& lc, const IntervalBox& box,
                                               const LpOptions& opt = {}) {
  LinearProgram lp = program_of(lc, box);
  IntervalVector out;
  for (int k = 0; k < box.dim(); ++k) {
    lp.objective = Eigen::VectorXd::Unit(box.dim(), k);
    const auto lo = solve(lp, opt);
    if (!lo.feasible()) return std::nullopt;
    lp.objective = -lp.objective;
    const auto hi = solve(lp, opt);
    if (!hi.feasible()) return std::nullopt;
    // pad by the LP tolerance so no feasible point is excluded
    const double a = std::max(box[k].lo(), lo.witness[k] - 1e-9);
    const double b = std::min(box[k].hi(), hi.witness[k] + 1e-9);
    out.emplace_back(std::min(a, b), std::max(a, b));
  }
  return IntervalBox(std::move(out));
}

/// A point in the relative interior of the polytope near x: the mean of the
/// extreme points along each coordinate within a small box around x.
inline std::optional<Eigen::VectorXd> interior_point(const LinearConstraints& lc, const IntervalBox& domain,
                                                     const Eigen::VectorXd& x, double radius,
                                                     const LpOptions& opt = {}) {
  IntervalVector local;
  for (int k = 0; k < domain.dim(); ++k) {
    const double lo = std::max(domain[k].lo(), x[k] - radius);
    const double hi = std::min(domain[k].hi(), x[k] + radius);
    if (lo > hi) return std::nullopt;
    local.emplace_back(lo, hi);
  }
  LinearProgram lp = program_of(lc, IntervalBox(local));
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(domain.dim());
  int count = 0;
  try {
    for (int k = 0; k < domain.dim(); ++k)
      for (double s : {1.0, -1.0}) {
        lp.objective = s * Eigen::VectorXd::Unit(domain.dim(), k);
        const auto r = solve(lp, opt);
        if (!r.feasible()) return std::nullopt;
        sum += r.witness;
        ++count;
      }
  } catch (const NumericalFailure&) {
    return std::nullopt;
  }
  return Eigen::VectorXd(sum / count);
}

/// max over u = D w, |w|_inf <= 1, of a . u.
inline double input_support(const Eigen::VectorXd& a, const Eigen::MatrixXd& d) {
  return (d.transpose() * a).lpNorm<1>();
}

namespace detail {

/// w^T g over a box, one interval per input channel.
inline IntervalVector wg_interval(const Eigen::VectorXd& w, const IntervalMatrix& g) {
  IntervalVector out(g.cols(), Interval(0.0));
  for (int c = 0; c < g.cols(); ++c)
    for (int r = 0; r < g.rows(); ++r)
      if (w[r] != 0.0) out[c] += Interval(w[r]) * g(r, c);
  return out;
}

inline IntervalVector add(IntervalVector a, const IntervalVector& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

/// f + g u over a box for a fixed input.
inline IntervalVector drift_with_input(const ControlAffineSystem& sys, const IntervalBox& box, const Eigen::VectorXd& u) {
  IntervalVector d = sys.f_box(box);
  if (sys.m == 0 || u.size() == 0) return d;
  const IntervalMatrix g = sys.g_box(box);
  for (int r = 0; r < sys.n; ++r)
    for (int c = 0; c < sys.m; ++c)
      if (u[c] != 0.0) d[r] += g(r, c) * Interval(u[c]);
  return d;
}

inline ConditionVerdict safe(DischargePath p, double lb) {
  ConditionVerdict v;
  v.status = VerdictStatus::Safe;
  v.path = p;
  v.lower_bound = lb;
  return v;
}

inline ConditionVerdict undecided(DischargePath p, const CertifiedMin& r, std::string why) {
  ConditionVerdict v;
  v.status = VerdictStatus::Undecided;
  v.path = p;
  v.point = r.candidate;
  v.lower_bound = r.lower_bound;
  v.detail = std::move(why);
  return v;
}

inline BbOptions bb_options(const ConditionOptions& opt) {
  BbOptions bo;
  bo.delta = opt.delta;
  bo.max_nodes = opt.max_nodes;
  bo.threshold = 0.0;
  bo.min_width = opt.min_width;
  bo.lp = opt.lp;
  return bo;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pointwise invariance check

struct DirectionRows {
  std::vector<Eigen::VectorXd> rows;  // each row r needs r . (f + g u) >= 0
};

/// Is there an admissible u with rows . (f + g u) >= 0 for all rows?
/// Rows are normalized; `slack` is the tolerated violation.
inline bool input_exists(const ControlAffineSystem& sys, const Eigen::VectorXd& fx, const Eigen::MatrixXd& gx,
                         const std::vector<Eigen::VectorXd>& rows, double slack, const LpOptions& lpo = {}) {
  std::vector<Eigen::VectorXd> unit;
  for (const auto& r : rows) {
    const double nr = r.norm();
    if (nr > 0.0) unit.push_back(r / nr);
  }
  if (sys.open_loop()) {
    for (const auto& r : unit)
      if (r.dot(fx) < -slack) return false;
    return true;
  }
  const bool box = sys.input.bounded();
  const Eigen::MatrixXd gd = box ? Eigen::MatrixXd(gx * sys.input.D) : gx;
  const int m = static_cast<int>(gd.cols());
  LinearProgram lp = box ? LinearProgram::over_box(IntervalBox::uniform(m, -1.0, 1.0)) : LinearProgram::unbounded(m);
  for (const auto& r : unit) lp.inequalities.push_back({-(gd.transpose() * r), r.dot(fx) + slack});
  try {
    return solve(lp, lpo).status != LpStatus::Infeasible;
  } catch (const NumericalFailure&) {
    return true;  // cannot refute
  }
}

/// Direct test of the invariance condition at a point on the zero level:
/// some region around x admits an input whose direction stays in that
/// region (to first order) without decreasing b.
inline bool nagumo_point_check(const Network& net, const ControlAffineSystem& sys, const Eigen::VectorXd& x,
                               const ConditionOptions& opt = {}) {
  const auto tr = trace(net, x);
  const int total = net.total_neurons();
  ActivationSet base = ActivationSet::none(total);
  std::vector<int> unstable;
  for (int i = 0; i < net.num_layers(); ++i)
    for (int j = 0; j < net.layer_size(i); ++j) {
      const int k = net.flat_index({i, j});
      base.set(k, tr.pre[i][j] >= 0.0);
      if (std::abs(tr.pre[i][j]) <= opt.nagumo_tol) unstable.push_back(k);
    }
  if (static_cast<int>(unstable.size()) > opt.max_unstable) return true;  // too degenerate to refute
  const Eigen::VectorXd fx = sys.f(x);
  const Eigen::MatrixXd gx = sys.m > 0 ? sys.g_at(x) : Eigen::MatrixXd(sys.n, 0);
  const long combos = 1L << unstable.size();
  for (long mask = 0; mask < combos; ++mask) {
    ActivationSet s = base;
    for (std::size_t t = 0; t < unstable.size(); ++t) s.set(unstable[t], (mask >> t) & 1);
    const RegionAffine ra = region_affine(net, s);
    std::vector<Eigen::VectorXd> rows{ra.output.w};
    for (int k : unstable) {
      const Eigen::VectorXd w = ra.neuron(net.neuron_at(k)).w;
      rows.push_back(s.test(k) ? w : Eigen::VectorXd(-w));
    }
    if (input_exists(sys, fx, gx, rows, 1e-9, opt.lp)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Correctness: h >= 0 on every boundary piece

inline ConditionVerdict verify_correctness(const Network& net, const ControlAffineSystem& sys, const RegionAffine& ra,
                                           const ConditionOptions& opt = {}) {
  const LinearConstraints lc = facet_constraints(net, ra);
  const auto fbox = polytope_box(lc, sys.domain, opt.lp);
  if (!fbox) return detail::safe(DischargePath::BranchAndBound, std::numeric_limits<double>::infinity());
  const double root = sys.h_box(*fbox).lo();
  if (root >= 0.0) return detail::safe(sys.h_convex ? DischargePath::ConvexSolve : DischargePath::BranchAndBound, root);

  MinProblem p;
  p.dim = sys.n;
  p.f = sys.h;
  p.F = sys.h_box;
  p.constraints = lc;
  p.box = *fbox;
  CertifiedMin r;
  DischargePath path = DischargePath::BranchAndBound;
  if (sys.h_convex && sys.h_grad) {
    KelleyOptions ko;
    ko.delta = opt.delta;
    ko.threshold = 0.0;
    ko.lp = opt.lp;
    r = convex_minimize(p, sys.h_grad, ko);
    path = DischargePath::ConvexSolve;
    if (r.status == MinStatus::Exhausted) {
      r = bb_minimize(p, detail::bb_options(opt));
      path = DischargePath::BranchAndBound;
    }
  } else {
    r = bb_minimize(p, detail::bb_options(opt));
  }
  if (r.status == MinStatus::Empty || r.lower_bound >= 0.0) return detail::safe(path, r.lower_bound);
  if (r.upper_bound < 0.0 && r.candidate.size() && sys.h(r.candidate) < 0.0) {
    ConditionVerdict v;
    v.status = VerdictStatus::Counterexample;
    v.path = path;
    v.point = r.candidate;
    v.lower_bound = r.lower_bound;
    v.detail = "h = " + std::to_string(sys.h(r.candidate));
    return v;
  }
  return detail::undecided(path, r, r.status == MinStatus::Exhausted ? "budget exhausted" : "within delta of zero");
}

// ---------------------------------------------------------------------------
// Hyperplane: sup_u W^T (f + g u) >= 0 on every boundary piece

namespace detail {

/// Emit a hyperplane/hinge counterexample only if the pointwise check
/// refutes it; prefer points in the relative interior of the piece.
inline ConditionVerdict confirm(const Network& net, const ControlAffineSystem& sys, const LinearConstraints& lc,
                                const CertifiedMin& r, DischargePath path, const ConditionOptions& opt) {
  std::vector<Eigen::VectorXd> tries;
  const double scale = sys.domain.max_width();
  for (double rad : {1e-3, 1e-5})
    if (auto p = interior_point(lc, sys.domain, r.candidate, rad * scale, opt.lp)) tries.push_back(*p);
  tries.push_back(r.candidate);
  for (const auto& x : tries) {
    if (std::abs(forward(net, x)) > 1e-6) continue;
    if (!nagumo_point_check(net, sys, x, opt)) {
      ConditionVerdict v;
      v.status = VerdictStatus::Counterexample;
      v.path = path;
      v.point = x;
      v.lower_bound = r.lower_bound;
      v.detail = "no admissible input keeps b from decreasing";
      return v;
    }
  }
  return undecided(path, r, "candidate not confirmed by the point check");
}

}  // namespace detail

inline ConditionVerdict verify_hyperplane(const Network& net, const ControlAffineSystem& sys, const RegionAffine& ra,
                                          const ConditionOptions& opt = {}) {
  const Eigen::VectorXd w = ra.output.w;
  const LinearConstraints lc = facet_constraints(net, ra);
  const bool unconstrained = !sys.open_loop() && sys.input.kind == InputKind::Unconstrained;

  bool input_blind = false;  // constant g with W^T G = 0
  if (unconstrained && sys.constant_g) {
    const Eigen::VectorXd wg = sys.constant_g->transpose() * w;
    input_blind = !(wg.cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, w.norm() * sys.constant_g->norm()));
    if (!input_blind && opt.fast_paths)
      return detail::safe(DischargePath::ConstantGNonzero, std::numeric_limits<double>::infinity());
  }
  const auto fbox = polytope_box(lc, sys.domain, opt.lp);
  if (!fbox) return detail::safe(DischargePath::BranchAndBound, std::numeric_limits<double>::infinity());

  auto drift = [&sys, w](const Eigen::VectorXd& x) { return w.dot(sys.f(x)); };
  auto drift_box = [&sys, w](const IntervalBox& b) { return dot(w, sys.f_box(b)); };

  MinProblem p;
  p.dim = sys.n;
  p.constraints = lc;
  p.box = *fbox;
  p.f = drift;
  p.F = drift_box;
  if (opt.fast_paths) {
    const double root = drift_box(*fbox).lo();
    if (root >= 0.0) return detail::safe(DischargePath::SufficientZeroInput, root);
    // cheap attempt: does the drift alone keep b from decreasing?
    BbOptions quick = detail::bb_options(opt);
    quick.max_nodes = std::min<long>(opt.max_nodes, 64);
    const CertifiedMin z = bb_minimize(p, quick);
    if (z.status == MinStatus::Empty || z.lower_bound >= 0.0)
      return detail::safe(DischargePath::SufficientZeroInput, z.lower_bound);
  }
  if (sys.open_loop() || input_blind) {
    // no input, or the input cannot act on this piece
    p.f = drift;
    p.F = drift_box;
  } else if (sys.input.bounded()) {
    const Eigen::MatrixXd d = sys.input.D;
    p.f = [&sys, w, d](const Eigen::VectorXd& x) {
      return w.dot(sys.f(x)) + input_support(sys.g_at(x).transpose() * w, d);
    };
    p.F = [&sys, w, d](const IntervalBox& b) {
      const IntervalVector wg = detail::wg_interval(w, sys.g_box(b));
      Interval s = dot(w, sys.f_box(b));
      for (int j = 0; j < d.cols(); ++j) {
        Interval c(0.0);
        for (int i = 0; i < d.rows(); ++i)
          if (d(i, j) != 0.0) c += wg[i] * Interval(d(i, j));
        s += abs(c);
      }
      return s;
    };
  } else {
    // U unbounded with state-dependent g: only points with W^T g(x) = 0 matter
    p.f = drift;
    p.F = drift_box;
    p.keep = [&sys, w](const IntervalBox& b) {
      for (const auto& c : detail::wg_interval(w, sys.g_box(b)))
        if (!c.contains_zero()) return false;
      return true;
    };
    p.admissible = [&sys, w](const Eigen::VectorXd& x) {
      return (sys.g_at(x).transpose() * w).cwiseAbs().maxCoeff() == 0.0;
    };
  }
  const CertifiedMin r = bb_minimize(p, detail::bb_options(opt));
  if (r.status == MinStatus::Empty || r.lower_bound >= 0.0) return detail::safe(DischargePath::BranchAndBound, r.lower_bound);
  if (r.upper_bound < 0.0 && r.candidate.size()) return detail::confirm(net, sys, lc, r, DischargePath::BranchAndBound, opt);
  return detail::undecided(DischargePath::BranchAndBound, r,
                           r.status == MinStatus::Exhausted ? "budget exhausted" : "within delta of zero");
}

// ---------------------------------------------------------------------------
// Hinge: at every point of the fold some region admits an input

struct HingeModel {
  std::vector<RegionAffine> regions;
  std::vector<int> faces;  // flat indices of neurons on which the regions disagree
  // per region: unit rows r with r . (f + g u) >= 0 required (first row is W)
  std::vector<std::vector<Eigen::VectorXd>> rows;
};

inline HingeModel hinge_model(const Network& net, const std::vector<ActivationSet>& sets) {
  HingeModel hm;
  std::vector<char> differs(net.total_neurons(), 0);
  for (std::size_t a = 0; a < sets.size(); ++a)
    for (std::size_t b = a + 1; b < sets.size(); ++b)
      for (int k = 0; k < net.total_neurons(); ++k)
        if (sets[a].test(k) != sets[b].test(k)) differs[k] = 1;
  for (int k = 0; k < net.total_neurons(); ++k)
    if (differs[k]) hm.faces.push_back(k);
  for (const auto& s : sets) {
    hm.regions.push_back(region_affine(net, s));
    const auto& ra = hm.regions.back();
    std::vector<Eigen::VectorXd> rows;
    auto unit = [](Eigen::VectorXd v) {
      const double n = v.norm();
      return n > 0.0 ? Eigen::VectorXd(v / n) : v;
    };
    rows.push_back(unit(ra.output.w));
    for (int k : hm.faces) {
      const Eigen::VectorXd w = ra.neuron(net.neuron_at(k)).w;
      rows.push_back(unit(s.test(k) ? w : Eigen::VectorXd(-w)));
    }
    hm.rows.push_back(std::move(rows));
  }
  return hm;
}

namespace detail {

/// Best worst-row margin max_u min_r r . (f + g u) for one region, with u
/// restricted to U (or to the cap box when U is unbounded). Returns the
/// margin and the maximizing input.
inline std::pair<double, Eigen::VectorXd> region_margin(const ControlAffineSystem& sys,
                                                        const std::vector<Eigen::VectorXd>& rows,
                                                        const Eigen::VectorXd& fx, const Eigen::MatrixXd& gx,
                                                        const ConditionOptions& opt) {
  if (sys.open_loop()) {
    double t = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) t = std::min(t, r.dot(fx));
    return {t, Eigen::VectorXd()};
  }
  const bool box = sys.input.bounded();
  const Eigen::MatrixXd gd = box ? Eigen::MatrixXd(gx * sys.input.D) : gx;
  const int m = static_cast<int>(gd.cols());
  LinearProgram lp = LinearProgram::unbounded(m + 1);
  const double cap = box ? 1.0 : opt.u_cap;
  for (int k = 0; k < m; ++k) {
    lp.lower[k] = -cap;
    lp.upper[k] = cap;
  }
  for (const auto& r : rows) {
    Eigen::VectorXd a(m + 1);
    a.head(m) = -(gd.transpose() * r);
    a[m] = 1.0;
    lp.inequalities.push_back({a, r.dot(fx)});
  }
  lp.objective = -Eigen::VectorXd::Unit(m + 1, m);
  try {
    const auto out = solve(lp, opt.lp);
    if (!out.feasible()) return {-std::numeric_limits<double>::infinity(), Eigen::VectorXd::Zero(sys.m)};
    const Eigen::VectorXd w = out.witness.head(m);
    return {out.witness[m], box ? Eigen::VectorXd(sys.input.D * w) : w};
  } catch (const NumericalFailure&) {
    return {-std::numeric_limits<double>::infinity(), Eigen::VectorXd::Zero(sys.m)};
  }
}

}  // namespace detail

inline double hinge_margin(const ControlAffineSystem& sys, const HingeModel& hm, const Eigen::VectorXd& x,
                           const ConditionOptions& opt = {}) {
  const Eigen::VectorXd fx = sys.f(x);
  const Eigen::MatrixXd gx = sys.m > 0 ? sys.g_at(x) : Eigen::MatrixXd(sys.n, 0);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& rows : hm.rows) best = std::max(best, detail::region_margin(sys, rows, fx, gx, opt).first);
  return best;
}

/// Lower bound of hinge_margin over a box: the inputs optimal at the center
/// are held fixed and each row is bounded with interval arithmetic.
inline double hinge_margin_lower(const ControlAffineSystem& sys, const HingeModel& hm, const IntervalBox& box,
                                 const ConditionOptions& opt = {}) {
  const Eigen::VectorXd c = box.center();
  const Eigen::VectorXd fx = sys.f(c);
  const Eigen::MatrixXd gx = sys.m > 0 ? sys.g_at(c) : Eigen::MatrixXd(sys.n, 0);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& rows : hm.rows) {
    const auto [t, u] = detail::region_margin(sys, rows, fx, gx, opt);
    if (t == -std::numeric_limits<double>::infinity()) continue;
    const IntervalVector d = detail::drift_with_input(sys, box, u);
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) lo = std::min(lo, dot(r, d).lo());
    best = std::max(best, lo);
  }
  return best;
}

inline ConditionVerdict verify_hinge(const Network& net, const ControlAffineSystem& sys,
                                     const std::vector<ActivationSet>& sets, const ConditionOptions& opt = {}) {
  const HingeModel hm = hinge_model(net, sets);
  const LinearConstraints lc = hinge_constraints(net, hm.regions);
  const auto hbox = polytope_box(lc, sys.domain, opt.lp);
  if (!hbox) return detail::safe(DischargePath::BranchAndBound, std::numeric_limits<double>::infinity());

  if (opt.fast_paths) {
    const IntervalVector fb = sys.f_box(*hbox);
    bool all_positive = true;
    for (const auto& ra : hm.regions)
      if (!(dot(ra.output.w, fb).lo() > 0.0)) all_positive = false;
    if (all_positive) return detail::safe(DischargePath::SufficientZeroInput, 0.0);

    if (!sys.open_loop() && sys.input.kind == InputKind::Unconstrained) {
      const IntervalMatrix gb = sys.g_box(*hbox);
      for (int i = 0; i < sys.m; ++i)
        for (double sign : {1.0, -1.0}) {
          bool consensus = true;
          for (const auto& ra : hm.regions)
            if (!((Interval(sign) * detail::wg_interval(ra.output.w, gb)[i]).lo() > 0.0)) consensus = false;
          if (consensus) return detail::safe(DischargePath::SufficientSignConsensus, 0.0);
        }
    }
  }

  MinProblem p;
  p.dim = sys.n;
  p.constraints = lc;
  p.box = *hbox;
  p.f = [&](const Eigen::VectorXd& x) { return hinge_margin(sys, hm, x, opt); };
  p.F = [&](const IntervalBox& b) {
    const double lo = hinge_margin_lower(sys, hm, b, opt);
    return Interval(lo, std::max(lo, hinge_margin(sys, hm, b.center(), opt)));
  };
  const CertifiedMin r = bb_minimize(p, detail::bb_options(opt));
  if (r.status == MinStatus::Empty || r.lower_bound >= 0.0) return detail::safe(DischargePath::BranchAndBound, r.lower_bound);
  if (r.upper_bound < 0.0 && r.candidate.size()) return detail::confirm(net, sys, lc, r, DischargePath::BranchAndBound, opt);
  return detail::undecided(DischargePath::BranchAndBound, r,
                           r.status == MinStatus::Exhausted ? "budget exhausted" : "within delta of zero");
}

}  // namespace seev
