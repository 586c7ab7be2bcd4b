#pragma once

#include <Eigen/Dense>

namespace seev {

/// a . x <= b
struct Halfspace {
  Eigen::VectorXd a;
  double b = 0.0;
};

/// a . x = b
struct Hyperplane {
  Eigen::VectorXd a;
  double b = 0.0;
};

/// Affine scalar form w . x + c.
struct AffineForm {
  Eigen::VectorXd w;
  double c = 0.0;

  double operator()(const Eigen::VectorXd& x) const { return w.dot(x) + c; }
  Hyperplane zero_set() const { return {w, -c}; }
  Halfspace nonnegative() const { return {-w, c}; }
  Halfspace nonpositive() const { return {w, -c}; }
};

}  // namespace seev
