#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "seev/error.hpp"
#include "seev/interval.hpp"

namespace seev {

enum class InputKind { None, Unconstrained, Box };

/// Admissible inputs. For `Box`, U = {D w : |w|_inf <= 1}.
struct InputSet {
  InputKind kind = InputKind::None;
  Eigen::MatrixXd D;

  static InputSet none() { return {}; }
  static InputSet unconstrained() { return {InputKind::Unconstrained, {}}; }
  static InputSet box(Eigen::MatrixXd d) { return {InputKind::Box, std::move(d)}; }
  bool bounded() const { return kind == InputKind::Box; }
};

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using IntervalField = std::function<IntervalVector(const IntervalBox&)>;

struct ControlAffineSystem {
  std::string name;
  int n = 0;
  int m = 0;

  VectorField f;
  IntervalField f_box;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> g;
  std::function<IntervalMatrix(const IntervalBox&)> g_box;
  std::optional<Eigen::MatrixXd> constant_g;

  std::function<double(const Eigen::VectorXd&)> h;
  std::function<Interval(const IntervalBox&)> h_box;
  VectorField h_grad;
  bool h_convex = false;

  IntervalBox domain;
  std::function<bool(const Eigen::VectorXd&)> in_initial;
  std::function<Eigen::VectorXd(std::mt19937_64&)> sample_initial;

  // unsafe set {h < 0} when it is a ball in some coordinates
  struct Ball {
    std::vector<int> coords;
    Eigen::VectorXd center;
    double radius = 0.0;
  };
  std::optional<Ball> unsafe_ball;
  InputSet input;

  bool open_loop() const { return m == 0 || input.kind == InputKind::None; }
  bool in_safe(const Eigen::VectorXd& x) const { return h(x) >= 0.0; }

  Eigen::VectorXd sample_domain(std::mt19937_64& rng) const {
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x[k] = std::uniform_real_distribution<double>(domain[k].lo(), domain[k].hi())(rng);
    return x;
  }

  /// A point of X with h < 0: drawn from the unsafe ball when one is known,
  /// otherwise by rejection from the domain.
  std::optional<Eigen::VectorXd> sample_unsafe(std::mt19937_64& rng, int attempts = 1000) const {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uni;
    for (int a = 0; a < attempts; ++a) {
      Eigen::VectorXd x = sample_domain(rng);
      if (unsafe_ball) {
        const auto& b = *unsafe_ball;
        const int d = static_cast<int>(b.coords.size());
        Eigen::VectorXd dir(d);
        for (int i = 0; i < d; ++i) dir[i] = nd(rng);
        const double r = b.radius * std::pow(uni(rng), 1.0 / d);
        dir *= r / std::max(dir.norm(), 1e-300);
        for (int i = 0; i < d; ++i) x[b.coords[i]] = b.center[i] + dir[i];
        if (!domain.contains(x)) continue;
      }
      if (h(x) < 0.0) return x;
    }
    return std::nullopt;
  }

  Eigen::MatrixXd g_at(const Eigen::VectorXd& x) const {
    if (m == 0) return Eigen::MatrixXd(n, 0);
    return constant_g ? *constant_g : g(x);
  }

  Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd dx = f(x);
    if (m > 0) dx += g_at(x) * u;
    return dx;
  }

  void check(const Eigen::VectorXd& x) const {
    if (x.size() != n) throw DimensionMismatch(name + ": state has dimension " + std::to_string(x.size()) +
                                               ", expected " + std::to_string(n));
  }
};

// Building blocks -----------------------------------------------------------

inline IntervalVector linear_enclosure(const Eigen::MatrixXd& a, const IntervalBox& box) {
  IntervalVector out(a.rows());
  for (int r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r).transpose(), box.coords());
  return out;
}

/// Sets f, f_box from a constant matrix A (f(x) = A x + c).
inline void set_linear_drift(ControlAffineSystem& sys, const Eigen::MatrixXd& a, Eigen::VectorXd c = {}) {
  if (c.size() == 0) c = Eigen::VectorXd::Zero(a.rows());
  sys.f = [a, c](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x + c; };
  sys.f_box = [a, c](const IntervalBox& box) {
    IntervalVector out = linear_enclosure(a, box);
    for (int r = 0; r < a.rows(); ++r) out[r] += Interval(c[r]);
    return out;
  };
}

inline void set_constant_input(ControlAffineSystem& sys, const Eigen::MatrixXd& g) {
  sys.m = static_cast<int>(g.cols());
  sys.constant_g = g;
  sys.g = [g](const Eigen::VectorXd&) { return g; };
  sys.g_box = [g](const IntervalBox&) { return IntervalMatrix(g); };
}

/// h(x) = sum_k (x_k - c_k)^2 over the selected coordinates, minus r2.
inline void set_sphere_h(ControlAffineSystem& sys, std::vector<int> coords, Eigen::VectorXd center, double r2) {
  sys.h = [=](const Eigen::VectorXd& x) {
    double s = -r2;
    for (std::size_t i = 0; i < coords.size(); ++i) s += (x[coords[i]] - center[i]) * (x[coords[i]] - center[i]);
    return s;
  };
  sys.h_box = [=](const IntervalBox& box) {
    Interval s(-r2);
    for (std::size_t i = 0; i < coords.size(); ++i) s += sqr(box[coords[i]] - Interval(center[i]));
    return s;
  };
  const int n = sys.n;
  sys.h_grad = [=](const Eigen::VectorXd& x) {
    Eigen::VectorXd gr = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < coords.size(); ++i) gr[coords[i]] = 2.0 * (x[coords[i]] - center[i]);
    return gr;
  };
  sys.h_convex = true;
  sys.unsafe_ball = ControlAffineSystem::Ball{coords, center, std::sqrt(r2)};
}

inline void set_box_initial(ControlAffineSystem& sys, IntervalBox init) {
  sys.in_initial = [init](const Eigen::VectorXd& x) { return init.contains(x); };
  sys.sample_initial = [init](std::mt19937_64& rng) {
    Eigen::VectorXd x(init.dim());
    for (int k = 0; k < init.dim(); ++k) x[k] = std::uniform_real_distribution<double>(init[k].lo(), init[k].hi())(rng);
    return x;
  };
}

// Benchmarks ----------------------------------------------------------------

struct SystemOptions {
  double oa_speed = 1.0;
  double sr_mean_motion = 1.0;
  std::optional<Eigen::MatrixXd> input_bound;  // D for U = {D w : |w| <= 1}
  double sr_position_bound = 5.0;
  bool hi_ord8_literal_constant = false;
};

/// Applies one `key=value` system setting. Returns false when the key is not
/// a system option, so callers can route it elsewhere. `input_bound` takes the
/// diagonal of D as a comma list.
inline bool set_system_option(SystemOptions& o, const std::string& key, const std::string& value) {
  auto number = [&](const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw ParseError("system option '" + key + "': bad value '" + text + "'");
    return v;
  };
  if (key == "oa_speed" || key == "v") {
    o.oa_speed = number(value);
  } else if (key == "sr_mean_motion" || key == "n_mean") {
    o.sr_mean_motion = number(value);
  } else if (key == "sr_position_bound") {
    o.sr_position_bound = number(value);
  } else if (key == "hi_ord8_literal_constant") {
    if (value != "0" && value != "1" && value != "true" && value != "false")
      throw ParseError("system option '" + key + "': bad value '" + value + "'");
    o.hi_ord8_literal_constant = value == "1" || value == "true";
  } else if (key == "input_bound") {
    std::vector<double> diag;
    std::size_t start = 0;
    while (start <= value.size()) {
      const auto comma = value.find(',', start);
      const std::string item = value.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!item.empty()) diag.push_back(number(item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (diag.empty()) throw ParseError("system option 'input_bound': empty");
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(diag.size()), static_cast<Eigen::Index>(diag.size()));
    for (std::size_t i = 0; i < diag.size(); ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag[i];
    o.input_bound = d;
  } else {
    return false;
  }
  return true;
}

inline ControlAffineSystem darboux() {
  ControlAffineSystem sys;
  sys.name = "darboux";
  sys.n = 2;
  sys.m = 0;
  sys.f = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd dx(2);
    dx << x[1] + 2.0 * x[0] * x[1], -x[0] + 2.0 * x[0] * x[0] - x[1] * x[1];
    return dx;
  };
  sys.f_box = [](const IntervalBox& b) {
    const Interval& x1 = b[0];
    const Interval& x2 = b[1];
    // x2 (1 + 2 x1) and -x1 + 2 x1^2 - x2^2 with single occurrences where possible.
    return IntervalVector{x2 * (Interval(1.0) + Interval(2.0) * x1),
                          Interval(2.0) * sqr(x1 - Interval(0.25)) - Interval(0.125) - sqr(x2)};
  };
  sys.h = [](const Eigen::VectorXd& x) { return x[0] + x[1] * x[1]; };
  sys.h_box = [](const IntervalBox& b) { return b[0] + sqr(b[1]); };
  sys.h_grad = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd gr(2);
    gr << 1.0, 2.0 * x[1];
    return gr;
  };
  sys.h_convex = true;
  sys.domain = IntervalBox::uniform(2, -2.0, 2.0);
  set_box_initial(sys, IntervalBox(IntervalVector{{0.0, 1.0}, {1.0, 2.0}}));
  sys.input = InputSet::none();
  return sys;
}

inline ControlAffineSystem obstacle_avoidance(const SystemOptions& opt = {}) {
  ControlAffineSystem sys;
  sys.name = "oa";
  sys.n = 3;
  const double v = opt.oa_speed;
  sys.f = [v](const Eigen::VectorXd& x) {
    Eigen::VectorXd dx(3);
    dx << v * std::sin(x[2]), v * std::cos(x[2]), 0.0;
    return dx;
  };
  sys.f_box = [v](const IntervalBox& b) {
    return IntervalVector{Interval(v) * sin(b[2]), Interval(v) * cos(b[2]), Interval(0.0)};
  };
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 1);
  g(2, 0) = 1.0;
  set_constant_input(sys, g);
  set_sphere_h(sys, {0, 1}, Eigen::Vector2d::Zero(), 0.04);
  sys.domain = IntervalBox::uniform(3, -2.0, 2.0);
  const double a = std::numbers::pi / 6.0;
  set_box_initial(sys, IntervalBox(IntervalVector{{-0.1, 0.1}, {-2.0, -1.8}, {-a, a}}));
  sys.in_initial = [a](const Eigen::VectorXd& x) {
    return std::abs(x[0]) <= 0.1 && x[1] >= -2.0 && x[1] <= -1.8 && std::abs(x[2]) < a;
  };
  sys.input = opt.input_bound ? InputSet::box(*opt.input_bound) : InputSet::unconstrained();
  return sys;
}

inline Eigen::MatrixXd cwh_matrix(double nm) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(6, 6);
  a.topRightCorner(3, 3).setIdentity();
  a(3, 0) = 3.0 * nm * nm;
  a(3, 4) = 2.0 * nm;
  a(4, 3) = -2.0 * nm;
  a(5, 2) = -nm * nm;
  return a;
}

inline ControlAffineSystem spacecraft_rendezvous(const SystemOptions& opt = {}) {
  ControlAffineSystem sys;
  sys.name = "sr";
  sys.n = 6;
  set_linear_drift(sys, cwh_matrix(opt.sr_mean_motion));
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(6, 3);
  g.bottomRows(3).setIdentity();
  set_constant_input(sys, g);
  set_sphere_h(sys, {0, 1, 2}, Eigen::Vector3d::Zero(), 0.0625);
  const double pb = opt.sr_position_bound;
  sys.domain = IntervalBox(IntervalVector{{-pb, pb}, {-pb, pb}, {-pb, pb}, {-1, 1}, {-1, 1}, {-1, 1}});
  sys.in_initial = [dom = sys.domain](const Eigen::VectorXd& x) {
    return dom.contains(x) && x.head(3).squaredNorm() >= 0.75 * 0.75;
  };
  sys.sample_initial = [dom = sys.domain](std::mt19937_64& rng) {
    Eigen::VectorXd x(6);
    do {
      for (int k = 0; k < 6; ++k) x[k] = std::uniform_real_distribution<double>(dom[k].lo(), dom[k].hi())(rng);
    } while (x.head(3).squaredNorm() < 0.75 * 0.75);
    return x;
  };
  sys.input = opt.input_bound ? InputSet::box(*opt.input_bound) : InputSet::unconstrained();
  return sys;
}

inline const std::vector<double>& hi_ord8_coefficients() {
  static const std::vector<double> c{576, 2400, 4180, 3980, 2273, 800, 170, 20};
  return c;
}

inline ControlAffineSystem hi_ord8(const SystemOptions& opt = {}) {
  ControlAffineSystem sys;
  sys.name = "hi_ord8";
  sys.n = 8;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(8, 8);
  a.topRightCorner(7, 7).setIdentity();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(8);
  const auto& coef = hi_ord8_coefficients();
  for (int k = 0; k < 8; ++k) a(7, k) = -coef[k];
  if (opt.hi_ord8_literal_constant) {
    a(7, 0) = 0.0;
    c[7] = -coef[0];
  }
  set_linear_drift(sys, a, c);
  sys.m = 0;
  set_sphere_h(sys, {0, 1, 2, 3, 4, 5, 6, 7}, Eigen::VectorXd::Constant(8, -2.0), 3.0);
  sys.domain = IntervalBox::uniform(8, -2.0, 2.0);
  sys.in_initial = [](const Eigen::VectorXd& x) { return (x.array() - 1.0).square().sum() <= 1.0; };
  sys.sample_initial = [](std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    Eigen::VectorXd d(8);
    for (int k = 0; k < 8; ++k) d[k] = nd(rng);
    const double r = std::pow(std::uniform_real_distribution<double>()(rng), 1.0 / 8.0);
    return Eigen::VectorXd((Eigen::VectorXd::Ones(8) + r * d.normalized()).eval());
  };
  sys.input = InputSet::none();
  return sys;
}

inline std::vector<std::string> system_names() { return {"darboux", "oa", "sr", "hi_ord8"}; }

inline ControlAffineSystem make_system(const std::string& name, const SystemOptions& opt = {}) {
  ControlAffineSystem sys;
  if (name == "darboux") sys = darboux();
  else if (name == "oa" || name == "obstacle_avoidance") sys = obstacle_avoidance(opt);
  else if (name == "sr" || name == "spacecraft_rendezvous") sys = spacecraft_rendezvous(opt);
  else if (name == "hi_ord8" || name == "hi-ord8") sys = hi_ord8(opt);
  else throw NotFound("unknown system '" + name + "'");
  if (sys.input.bounded() && (sys.input.D.rows() != sys.m || sys.input.D.cols() != sys.m))
    throw DimensionMismatch("input bound for '" + name + "' must be " + std::to_string(sys.m) + "x" + std::to_string(sys.m));
  return sys;
}

}  // namespace seev
