#pragma once

// Closed real intervals with outward rounding, plus boxes of them.
//
// Every arithmetic result is widened by one ulp on each side, so the
// enclosures stay valid under round-to-nearest without touching the FPU
// rounding mode.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace seev {

class Interval {
 public:
  constexpr Interval() = default;
  constexpr Interval(double v) : lo_(v), hi_(v) {}  // NOLINT(implicit)
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(lo <= hi)) throw std::invalid_argument("Interval: lo > hi");
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double width() const { return hi_ - lo_; }
  double mid() const { return 0.5 * (lo_ + hi_); }
  double mag() const { return std::max(std::abs(lo_), std::abs(hi_)); }
  bool contains(double v) const { return lo_ <= v && v <= hi_; }
  bool contains(const Interval& o) const { return lo_ <= o.lo_ && o.hi_ <= hi_; }
  bool contains_zero() const { return lo_ <= 0.0 && 0.0 <= hi_; }

  static Interval outward(double lo, double hi) {
    Interval r;
    r.lo_ = std::nextafter(lo, -std::numeric_limits<double>::infinity());
    r.hi_ = std::nextafter(hi, std::numeric_limits<double>::infinity());
    return r;
  }

  Interval& operator+=(const Interval& o) { return *this = *this + o; }
  Interval& operator-=(const Interval& o) { return *this = *this - o; }
  Interval& operator*=(const Interval& o) { return *this = *this * o; }

  friend Interval operator+(const Interval& a, const Interval& b) {
    return outward(a.lo_ + b.lo_, a.hi_ + b.hi_);
  }
  friend Interval operator-(const Interval& a, const Interval& b) {
    return outward(a.lo_ - b.hi_, a.hi_ - b.lo_);
  }
  friend Interval operator-(const Interval& a) {
    Interval r;
    r.lo_ = -a.hi_;
    r.hi_ = -a.lo_;
    return r;
  }
  friend Interval operator*(const Interval& a, const Interval& b) {
    if (a.is_point() && a.lo_ == 0.0) return Interval(0.0);
    if (b.is_point() && b.lo_ == 0.0) return Interval(0.0);
    const double p1 = a.lo_ * b.lo_, p2 = a.lo_ * b.hi_;
    const double p3 = a.hi_ * b.lo_, p4 = a.hi_ * b.hi_;
    return outward(std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4}));
  }
  friend bool operator==(const Interval& a, const Interval& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

  friend std::ostream& operator<<(std::ostream& os, const Interval& v) {
    return os << '[' << v.lo_ << ", " << v.hi_ << ']';
  }

 private:
  bool is_point() const { return lo_ == hi_; }

  double lo_ = 0.0;
  double hi_ = 0.0;
};

inline Interval hull(const Interval& a, const Interval& b) {
  return Interval(std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

inline Interval sqr(const Interval& a) {
  if (a.lo() >= 0.0) return Interval::outward(a.lo() * a.lo(), a.hi() * a.hi());
  if (a.hi() <= 0.0) return Interval::outward(a.hi() * a.hi(), a.lo() * a.lo());
  const double m = std::max(-a.lo(), a.hi());
  return Interval(0.0, std::nextafter(m * m, std::numeric_limits<double>::infinity()));
}

inline Interval abs(const Interval& a) {
  if (a.lo() >= 0.0) return a;
  if (a.hi() <= 0.0) return -a;
  return Interval(0.0, a.mag());
}

namespace detail {

// Enclosure of sin over [lo, hi] from endpoint values and interior extrema.
inline Interval periodic_range(double lo, double hi, double (*fn)(double), double max_at) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (hi - lo >= two_pi) return Interval(-1.0, 1.0);
  double a = fn(lo), b = fn(hi);
  double mn = std::min(a, b), mx = std::max(a, b);
  // Maximum at max_at + 2 k pi, minimum at max_at + pi + 2 k pi.
  const double kmax = std::ceil((lo - max_at) / two_pi);
  if (max_at + kmax * two_pi <= hi) mx = 1.0;
  const double min_at = max_at + std::numbers::pi;
  const double kmin = std::ceil((lo - min_at) / two_pi);
  if (min_at + kmin * two_pi <= hi) mn = -1.0;
  // libm sin/cos are faithful to within an ulp; widen a few to be safe.
  const double slack = 4.0 * std::numeric_limits<double>::epsilon();
  return Interval(std::max(-1.0, mn - slack), std::min(1.0, mx + slack));
}

}  // namespace detail

inline Interval sin(const Interval& a) {
  return detail::periodic_range(a.lo(), a.hi(), [](double v) { return std::sin(v); },
                                std::numbers::pi / 2.0);
}

inline Interval cos(const Interval& a) {
  return detail::periodic_range(a.lo(), a.hi(), [](double v) { return std::cos(v); }, 0.0);
}

using IntervalVector = std::vector<Interval>;

/// Axis-aligned box; the domain type for branch and bound and the interval
/// forms of the system dynamics.
class IntervalBox {
 public:
  IntervalBox() = default;
  explicit IntervalBox(IntervalVector coords) : coords_(std::move(coords)) {}
  IntervalBox(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("IntervalBox: size mismatch");
    coords_.reserve(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) coords_.emplace_back(lo[i], hi[i]);
  }
  static IntervalBox uniform(int dim, double lo, double hi) {
    return IntervalBox(IntervalVector(dim, Interval(lo, hi)));
  }

  int dim() const { return static_cast<int>(coords_.size()); }
  const Interval& operator[](int i) const { return coords_[i]; }
  Interval& operator[](int i) { return coords_[i]; }
  const IntervalVector& coords() const { return coords_; }

  Eigen::VectorXd lower() const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = coords_[i].lo();
    return v;
  }
  Eigen::VectorXd upper() const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = coords_[i].hi();
    return v;
  }
  Eigen::VectorXd center() const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = coords_[i].mid();
    return v;
  }
  int widest() const {
    int best = 0;
    for (int i = 1; i < dim(); ++i)
      if (coords_[i].width() > coords_[best].width()) best = i;
    return best;
  }
  double max_width() const { return dim() == 0 ? 0.0 : coords_[widest()].width(); }

  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (x[i] < coords_[i].lo() - tol || x[i] > coords_[i].hi() + tol) return false;
    return true;
  }
  bool contains(const IntervalBox& o) const {
    for (int i = 0; i < dim(); ++i)
      if (!coords_[i].contains(o[i])) return false;
    return true;
  }

  std::pair<IntervalBox, IntervalBox> bisect(int axis) const {
    IntervalBox left = *this, right = *this;
    const double m = coords_[axis].mid();
    left[axis] = Interval(coords_[axis].lo(), m);
    right[axis] = Interval(m, coords_[axis].hi());
    return {left, right};
  }

  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = x;
    for (int i = 0; i < dim(); ++i) y[i] = std::clamp(y[i], coords_[i].lo(), coords_[i].hi());
    return y;
  }

 private:
  IntervalVector coords_;
};

inline Interval dot(const Eigen::VectorXd& w, const IntervalVector& x) {
  assert(static_cast<std::size_t>(w.size()) == x.size());
  Interval acc(0.0);
  for (Eigen::Index i = 0; i < w.size(); ++i) acc += w[i] * x[i];
  return acc;
}

/// n x m matrix of intervals, row-major.
class IntervalMatrix {
 public:
  IntervalMatrix() = default;
  IntervalMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(rows * cols, Interval(0.0)) {}
  explicit IntervalMatrix(const Eigen::MatrixXd& m)
      : IntervalMatrix(static_cast<int>(m.rows()), static_cast<int>(m.cols())) {
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c) (*this)(r, c) = m(r, c);
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Interval& operator()(int r, int c) { return data_[r * cols_ + c]; }
  const Interval& operator()(int r, int c) const { return data_[r * cols_ + c]; }

  /// w^T M as an interval row vector of length cols().
  IntervalVector left_multiply(const Eigen::VectorXd& w) const {
    IntervalVector out(cols_, Interval(0.0));
    for (int c = 0; c < cols_; ++c)
      for (int r = 0; r < rows_; ++r) out[c] += w[r] * (*this)(r, c);
    return out;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Interval> data_;
};

}  // namespace seev
