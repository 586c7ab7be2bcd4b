#pragma once

// Barrier-based safety filter and a fixed-step closed-loop simulator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seev/error.hpp"
#include "seev/network.hpp"
#include "seev/parallel.hpp"
#include "seev/systems.hpp"

namespace seev {

enum class Fallback { ClipNominal, Zero };

struct FilterConfig {
  double gamma = 1.0;  // alpha(b) = gamma * b
  double tol = 1e-9;
  double unstable_tol = 1e-6;
  int max_unstable = 12;
  Fallback fallback = Fallback::ClipNominal;

  void validate() const {
    if (!(gamma > 0.0)) throw InvalidArgument("filter: gamma must be positive");
    if (!(tol > 0.0)) throw InvalidArgument("filter: tolerance must be positive");
  }
};

struct FilterResult {
  Eigen::VectorXd u;
  bool active = false;      // u differs from the nominal input
  bool infeasible = false;  // no admissible input; u is the fallback
  int patterns = 0;         // activation patterns examined
};

/// Constraint a.u >= c.
struct InputConstraint {
  Eigen::VectorXd a;
  double c = 0.0;
};

namespace detail {

inline bool satisfies(const std::vector<InputConstraint>& rows, const Eigen::VectorXd& u, double tol) {
  for (const auto& r : rows)
    if (r.a.dot(u) < r.c - tol * std::max(1.0, std::abs(r.c))) return false;
  return true;
}

// Visits every subset of {0..r-1} with at most k elements.
template <class Fn>
void for_each_subset(int r, int k, Fn&& fn) {
  std::vector<int> idx;
  std::function<void(int)> rec = [&](int start) {
    fn(idx);
    if (static_cast<int>(idx.size()) == k) return;
    for (int i = start; i < r; ++i) {
      idx.push_back(i);
      rec(i + 1);
      idx.pop_back();
    }
  };
  rec(0);
}

}  // namespace detail

/// Euclidean projection of u0 onto {u : a_i.u >= c_i}. Exact: the KKT system
/// is solved for every candidate active set of size <= dim(u) and the
/// cheapest feasible point with nonnegative multipliers is kept.
inline std::optional<Eigen::VectorXd> project_onto(const Eigen::VectorXd& u0, std::vector<InputConstraint> rows,
                                                   double tol = 1e-9) {
  // normalized rows condition the small Gram systems
  std::vector<InputConstraint> kept;
  for (auto& r : rows) {
    const double nr = r.a.norm();
    if (nr <= 1e-14) {
      if (r.c > tol) return std::nullopt;
      continue;
    }
    kept.push_back({r.a / nr, r.c / nr});
  }
  if (detail::satisfies(kept, u0, tol)) return u0;
  if (kept.size() == 1) {
    const auto& r = kept.front();
    return Eigen::VectorXd(u0 + (r.c - r.a.dot(u0)) * r.a);
  }
  const int m = static_cast<int>(u0.size());
  const int r = static_cast<int>(kept.size());
  std::optional<Eigen::VectorXd> best;
  double best_cost = std::numeric_limits<double>::infinity();
  detail::for_each_subset(r, m, [&](const std::vector<int>& act) {
    if (act.empty()) return;
    const int k = static_cast<int>(act.size());
    Eigen::MatrixXd a(k, m);
    Eigen::VectorXd rhs(k);
    for (int i = 0; i < k; ++i) {
      a.row(i) = kept[act[i]].a.transpose();
      rhs[i] = kept[act[i]].c - kept[act[i]].a.dot(u0);
    }
    const Eigen::MatrixXd gram = a * a.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-10);
    if (lu.rank() < k) return;
    const Eigen::VectorXd lambda = lu.solve(rhs);
    if (lambda.minCoeff() < -tol) return;
    const Eigen::VectorXd u = u0 + a.transpose() * lambda;
    if (!detail::satisfies(kept, u, tol)) return;
    const double cost = (u - u0).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = u;
    }
  });
  return best;
}

namespace detail {

inline Eigen::MatrixXd input_box_inverse(const ControlAffineSystem& sys) {
  const Eigen::MatrixXd& d = sys.input.D;
  if (d.rows() != sys.m || d.cols() != sys.m) throw DimensionMismatch("filter: input bound must be m x m");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(d);
  if (!lu.isInvertible()) throw InvalidArgument("filter: input bound matrix is singular");
  return lu.inverse();
}

inline Eigen::VectorXd fallback_input(const ControlAffineSystem& sys, const Eigen::VectorXd& u_nom,
                                      const FilterConfig& cfg) {
  if (cfg.fallback == Fallback::Zero) return Eigen::VectorXd::Zero(sys.m);
  if (!sys.input.bounded()) return u_nom;
  const Eigen::VectorXd w = (input_box_inverse(sys) * u_nom).cwiseMax(-1.0).cwiseMin(1.0);
  return sys.input.D * w;
}

}  // namespace detail

/// Minimally modifies u_nom so that b does not decay faster than gamma * b.
/// On a point shared by several regions every consistent pattern is tried and
/// the input must also keep the state inside that pattern's region.
inline FilterResult filter_control(const Network& net, const ControlAffineSystem& sys, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u_nom, const FilterConfig& cfg = {}) {
  cfg.validate();
  if (sys.open_loop()) throw InvalidArgument("safe_control: the system has no control input");
  if (x.size() != sys.n || net.input_dim() != sys.n) throw DimensionMismatch("safe_control: state dimension");
  if (u_nom.size() != sys.m) throw DimensionMismatch("safe_control: nominal input dimension");

  const auto tr = trace(net, x);
  const Eigen::VectorXd fx = sys.f(x);
  const Eigen::MatrixXd gx = sys.g_at(x);
  const double alpha = cfg.gamma * tr.output;

  ActivationSet base = ActivationSet::none(net.total_neurons());
  std::vector<int> unstable;
  for (int i = 0; i < net.num_layers(); ++i)
    for (int j = 0; j < net.layer_size(i); ++j) {
      const int k = net.flat_index({i, j});
      base.set(k, tr.pre[i][j] >= 0.0);
      if (std::abs(tr.pre[i][j]) <= cfg.unstable_tol) unstable.push_back(k);
    }
  if (static_cast<int>(unstable.size()) > cfg.max_unstable) unstable.clear();

  std::vector<InputConstraint> bounds;
  if (sys.input.bounded()) {
    const Eigen::MatrixXd dinv = detail::input_box_inverse(sys);
    for (int i = 0; i < sys.m; ++i) {
      bounds.push_back({dinv.row(i).transpose(), -1.0});
      bounds.push_back({-dinv.row(i).transpose(), -1.0});
    }
  }

  FilterResult res;
  double best_cost = std::numeric_limits<double>::infinity();
  const long combos = 1L << unstable.size();
  for (long mask = 0; mask < combos; ++mask) {
    ActivationSet s = base;
    for (std::size_t t = 0; t < unstable.size(); ++t) s.set(unstable[t], (mask >> t) & 1);
    const RegionAffine ra = region_affine(net, s);
    std::vector<InputConstraint> rows = bounds;
    rows.push_back({gx.transpose() * ra.output.w, -alpha - ra.output.w.dot(fx)});
    for (int k : unstable) {
      Eigen::VectorXd w = ra.neuron(net.neuron_at(k)).w;
      if (!s.test(k)) w = -w;
      rows.push_back({gx.transpose() * w, -w.dot(fx)});
    }
    ++res.patterns;
    const auto u = project_onto(u_nom, std::move(rows), cfg.tol);
    if (!u) continue;
    const double cost = (*u - u_nom).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      res.u = *u;
    }
  }
  if (!std::isfinite(best_cost)) {
    res.u = detail::fallback_input(sys, u_nom, cfg);
    res.infeasible = true;
    res.active = true;
    return res;
  }
  res.active = best_cost > cfg.tol * cfg.tol;
  return res;
}

inline Eigen::VectorXd safe_control(const Network& net, const ControlAffineSystem& sys, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& u_nom, const FilterConfig& cfg = {}) {
  return filter_control(net, sys, x, u_nom, cfg).u;
}

// ---------------------------------------------------------------------------

using NominalPolicy = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

inline NominalPolicy zero_policy(int m) {
  return [m](double, const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(m).eval(); };
}

/// Entry k holds the state at times[k] and the input applied over
/// [times[k], times[k+1]); the last input is what the filter would apply next.
struct Trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> inputs;
  std::vector<double> b;
  std::vector<double> h;
  std::vector<std::uint8_t> filter_active;
  std::vector<std::uint8_t> infeasible;
  bool exited = false;

  std::size_t size() const { return times.size(); }
  double min_b() const {
    double v = std::numeric_limits<double>::infinity();
    for (double x : b) v = std::min(v, x);
    return v;
  }
  double min_h() const {
    double v = std::numeric_limits<double>::infinity();
    for (double x : h) v = std::min(v, x);
    return v;
  }
  int infeasible_steps() const {
    int c = 0;
    for (auto f : infeasible) c += f;
    return c;
  }
};

/// Fixed-step RK4; the filtered input is held constant across each step.
/// Stops early (with `exited`) when the state leaves the domain.
inline Trajectory simulate(const Network& net, const ControlAffineSystem& sys, const Eigen::VectorXd& x0,
                           const NominalPolicy& nominal, double t_end, double dt, const FilterConfig& cfg = {}) {
  if (x0.size() != sys.n || net.input_dim() != sys.n) throw DimensionMismatch("simulate: state dimension");
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw InvalidArgument("simulate: need dt > 0 and T >= 0");
  if (forward(net, x0) < 0.0) throw InvalidArgument("simulate: x0 lies outside the safe set of the barrier");
  const bool controlled = !sys.open_loop();
  const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));

  Trajectory tr;
  auto record = [&](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    FilterResult fr;
    if (controlled) {
      fr = filter_control(net, sys, x, nominal ? nominal(t, x) : Eigen::VectorXd::Zero(sys.m), cfg);
    } else {
      fr.u = Eigen::VectorXd(0);
    }
    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.inputs.push_back(fr.u);
    tr.b.push_back(forward(net, x));
    tr.h.push_back(sys.h(x));
    tr.filter_active.push_back(fr.active);
    tr.infeasible.push_back(fr.infeasible);
    return fr.u;
  };
  auto rhs = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd {
    Eigen::VectorXd dx = sys.f(x);
    if (controlled) dx += sys.g_at(x) * u;
    return dx;
  };

  Eigen::VectorXd x = x0;
  Eigen::VectorXd u = record(0.0, x);
  for (long k = 0; k < steps; ++k) {
    const double h = std::min(dt, t_end - k * dt);
    const Eigen::VectorXd k1 = rhs(x, u);
    const Eigen::VectorXd k2 = rhs(x + 0.5 * h * k1, u);
    const Eigen::VectorXd k3 = rhs(x + 0.5 * h * k2, u);
    const Eigen::VectorXd k4 = rhs(x + h * k3, u);
    const Eigen::VectorXd next = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!next.allFinite() || !sys.domain.contains(next)) {
      tr.exited = true;
      break;
    }
    x = next;
    u = record(k + 1 == steps ? t_end : (k + 1) * dt, x);
  }
  return tr;
}

inline std::vector<Trajectory> simulate_many(const Network& net, const ControlAffineSystem& sys,
                                             const std::vector<Eigen::VectorXd>& starts, const NominalPolicy& nominal,
                                             double t_end, double dt, const FilterConfig& cfg = {}, int workers = 0) {
  std::vector<Trajectory> out(starts.size());
  parallel_for(starts.size(), resolve_workers(workers),
               [&](std::size_t i) { out[i] = simulate(net, sys, starts[i], nominal, t_end, dt, cfg); });
  return out;
}

// ---------------------------------------------------------------------------
// CSV: t, x1..xn, u1..um, b, h, active, infeasible

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  const int n = tr.states.empty() ? 0 : static_cast<int>(tr.states[0].size());
  const int m = tr.inputs.empty() ? 0 : static_cast<int>(tr.inputs[0].size());
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x" << i + 1;
  for (int i = 0; i < m; ++i) os << ",u" << i + 1;
  os << ",b,h,active,infeasible\n";
  const auto old = os.precision(17);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << tr.times[k];
    for (int i = 0; i < n; ++i) os << ',' << tr.states[k][i];
    for (int i = 0; i < m; ++i) os << ',' << tr.inputs[k][i];
    os << ',' << tr.b[k] << ',' << tr.h[k] << ',' << int(tr.filter_active[k]) << ',' << int(tr.infeasible[k]) << '\n';
  }
  os.precision(old);
}

inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("trajectory: missing header");
  int n = 0, m = 0;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (!col.empty() && col[0] == 'x') ++n;
      if (!col.empty() && col[0] == 'u') ++m;
    }
  }
  Trajectory tr;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> v;
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ParseError("trajectory: bad number '" + cell + "'");
      }
    }
    if (static_cast<int>(v.size()) != 1 + n + m + 4) throw ParseError("trajectory: wrong column count");
    tr.times.push_back(v[0]);
    tr.states.push_back(Eigen::Map<Eigen::VectorXd>(v.data() + 1, n));
    tr.inputs.push_back(Eigen::Map<Eigen::VectorXd>(v.data() + 1 + n, m));
    tr.b.push_back(v[1 + n + m]);
    tr.h.push_back(v[2 + n + m]);
    tr.filter_active.push_back(v[3 + n + m] != 0.0);
    tr.infeasible.push_back(v[4 + n + m] != 0.0);
  }
  return tr;
}

}  // namespace seev
