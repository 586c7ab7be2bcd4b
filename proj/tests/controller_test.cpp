#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "seev/controller.hpp"
#include "test_nets.hpp"

using namespace seev;
using seev::testing::mat;
using seev::testing::vec;

namespace {

// b(x) = relu(x1 + 10) - 10 = x1 on the domain
Network x1_net() { return Network(2, {{mat({{1.0, 0.0}}), vec({10.0})}}, vec({1.0}), -10.0); }

ControlAffineSystem planar(const Eigen::MatrixXd& a, std::optional<Eigen::MatrixXd> d = std::nullopt) {
  ControlAffineSystem sys;
  sys.name = "planar";
  sys.n = 2;
  sys.domain = IntervalBox::uniform(2, -2.0, 2.0);
  set_linear_drift(sys, a);
  set_constant_input(sys, Eigen::MatrixXd::Identity(2, 2));
  set_sphere_h(sys, {0, 1}, vec({1.6, 1.6}), 0.16);
  set_box_initial(sys, IntervalBox::uniform(2, -0.1, 0.1));
  sys.input = d ? InputSet::box(*d) : InputSet::unconstrained();
  return sys;
}

ControlAffineSystem open_loop(const Eigen::MatrixXd& a) {
  ControlAffineSystem sys;
  sys.name = "open";
  sys.n = 2;
  sys.domain = IntervalBox::uniform(2, -5.0, 5.0);
  set_linear_drift(sys, a);
  sys.m = 0;
  sys.input = InputSet::none();
  set_sphere_h(sys, {0, 1}, vec({4.0, 4.0}), 0.01);
  set_box_initial(sys, IntervalBox::uniform(2, -0.1, 0.1));
  return sys;
}

const Eigen::MatrixXd kZero = Eigen::MatrixXd::Zero(2, 2);

// The projection lies in the relative interior of some face, where it is
// also the projection onto that face's affine hull. So the cheapest feasible
// affine-hull projection over all row subsets is the answer.
Eigen::VectorXd face_oracle(const Eigen::VectorXd& u0, const std::vector<InputConstraint>& rows) {
  const int r = static_cast<int>(rows.size());
  const int m = static_cast<int>(u0.size());
  Eigen::VectorXd best;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << r); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < r; ++i)
      if (mask >> i & 1) act.push_back(i);
    Eigen::VectorXd u = u0;
    if (!act.empty()) {
      Eigen::MatrixXd a(act.size(), m);
      Eigen::VectorXd rhs(act.size());
      for (std::size_t i = 0; i < act.size(); ++i) {
        a.row(i) = rows[act[i]].a.transpose();
        rhs[i] = rows[act[i]].c - rows[act[i]].a.dot(u0);
      }
      const Eigen::VectorXd step = a.completeOrthogonalDecomposition().solve(rhs);
      if ((a * step - rhs).norm() > 1e-9 * std::max(1.0, rhs.norm())) continue;  // empty affine hull
      u += step;
    }
    bool ok = true;
    for (const auto& row : rows) ok = ok && row.a.dot(u) >= row.c - 1e-9 * std::max(1.0, std::abs(row.c));
    if (ok && (u - u0).squaredNorm() < best_cost) {
      best_cost = (u - u0).squaredNorm();
      best = u;
    }
  }
  return best;
}

}  // namespace

TEST(SafeControl, BoundaryPointProjectsOntoHalfspace) {
  const auto sys = planar(kZero);
  FilterConfig cfg;
  cfg.gamma = 1.0;
  const auto u = safe_control(x1_net(), sys, vec({0.0, 0.3}), vec({-1.0, 0.0}), cfg);
  EXPECT_NEAR(u[0], 0.0, 1e-12);
  EXPECT_NEAR(u[1], 0.0, 1e-12);
}

TEST(SafeControl, InactiveConstraintKeepsNominal) {
  const auto sys = planar(kZero);
  const auto r = filter_control(x1_net(), sys, vec({1.0, 0.0}), vec({-0.5, 0.2}));
  EXPECT_FALSE(r.active);
  EXPECT_FALSE(r.infeasible);
  EXPECT_TRUE(r.u.isApprox(vec({-0.5, 0.2})));
}

TEST(SafeControl, OpenLoopIsRejected) {
  EXPECT_THROW(safe_control(seev::testing::diamond_net(), open_loop(kZero), vec({0.0, 0.0}), Eigen::VectorXd(0)),
               InvalidArgument);
}

TEST(SafeControl, NonPositiveGammaIsRejected) {
  FilterConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(safe_control(x1_net(), planar(kZero), vec({0.0, 0.0}), vec({0.0, 0.0}), cfg), InvalidArgument);
}

TEST(SafeControl, MultiRegionPointPicksCheapestPattern) {
  // diamond b = 1 - |x1| - |x2| on the x1 axis: the two x2 neurons are at zero
  // and four patterns compete; the cheapest keeps x2 >= 0 on the facet
  // x1 + x2 <= 1 - gamma-slack.
  const auto sys = planar(kZero);
  const auto r = filter_control(seev::testing::diamond_net(), sys, vec({0.5, 0.0}), vec({1.0, 1.0}));
  EXPECT_EQ(r.patterns, 4);
  EXPECT_FALSE(r.infeasible);
  EXPECT_NEAR(r.u[0], 0.25, 1e-12);
  EXPECT_NEAR(r.u[1], 0.25, 1e-12);
}

TEST(SafeControl, BoxInputInfeasibleFallsBackToClippedNominal) {
  // drift pulls x1 down at rate 1 but |u1| <= 0.5
  Eigen::MatrixXd a = kZero;
  auto sys = planar(a, mat({{0.5, 0.0}, {0.0, 0.5}}));
  sys.f = [](const Eigen::VectorXd&) { return vec({-1.0, 0.0}); };
  const auto r = filter_control(x1_net(), sys, vec({0.0, 0.0}), vec({3.0, -0.2}));
  EXPECT_TRUE(r.infeasible);
  EXPECT_NEAR(r.u[0], 0.5, 1e-12);
  EXPECT_NEAR(r.u[1], -0.2, 1e-12);
  FilterConfig zero;
  zero.fallback = Fallback::Zero;
  EXPECT_TRUE(filter_control(x1_net(), sys, vec({0.0, 0.0}), vec({3.0, -0.2}), zero).u.isZero());
}

TEST(SafeControl, BoxInputFeasible) {
  auto sys = planar(kZero, mat({{2.0, 0.0}, {0.0, 2.0}}));
  sys.f = [](const Eigen::VectorXd&) { return vec({-1.0, 0.0}); };
  const auto r = filter_control(x1_net(), sys, vec({0.0, 0.0}), vec({0.0, 3.0}));
  EXPECT_FALSE(r.infeasible);
  EXPECT_NEAR(r.u[0], 1.0, 1e-12);
  EXPECT_NEAR(r.u[1], 2.0, 1e-12);  // clipped by the box
}

TEST(SafeControlProperty, SingleConstraintMatchesAnalyticProjection) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 500; ++trial) {
    const Network net = seev::testing::random_net(rng, 2, {6}, 1.0);
    Eigen::MatrixXd a(2, 2);
    for (int i = 0; i < 4; ++i) a(i / 2, i % 2) = nd(rng);
    auto sys = planar(a);
    Eigen::MatrixXd g(2, 2);
    for (int i = 0; i < 4; ++i) g(i / 2, i % 2) = nd(rng);
    set_constant_input(sys, g);
    const Eigen::VectorXd x = vec({nd(rng), nd(rng)});
    const Eigen::VectorXd u0 = vec({nd(rng), nd(rng)});
    FilterConfig cfg;
    cfg.gamma = 0.5 + std::abs(nd(rng));
    const auto r = filter_control(net, sys, x, u0, cfg);
    if (r.patterns != 1) continue;
    const RegionAffine ra = region_affine(net, activation_pattern(net, x).active);
    const Eigen::VectorXd q = g.transpose() * ra.output.w;
    const double c = -cfg.gamma * forward(net, x) - ra.output.w.dot(sys.f(x));
    if (q.norm() < 1e-12) {
      EXPECT_EQ(r.infeasible, c > 1e-9);
      continue;
    }
    Eigen::VectorXd expect = u0;
    if (q.dot(u0) < c) expect = u0 + (c - q.dot(u0)) / q.squaredNorm() * q;
    EXPECT_LT((r.u - expect).norm(), 1e-9 * std::max(1.0, expect.norm()));
    EXPECT_GE(q.dot(r.u), c - 1e-9 * std::max(1.0, std::abs(c)));
  }
}

TEST(ProjectOntoProperty, AgreesWithFaceEnumeration) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  int feasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + trial % 3;
    const int r = 1 + static_cast<int>(rng() % 5);
    std::vector<InputConstraint> rows;
    for (int i = 0; i < r; ++i) {
      Eigen::VectorXd a(m);
      for (int k = 0; k < m; ++k) a[k] = nd(rng);
      rows.push_back({a, nd(rng) - 0.5});
    }
    Eigen::VectorXd u0(m);
    for (int k = 0; k < m; ++k) u0[k] = 2.0 * nd(rng);
    const auto u = project_onto(u0, rows);
    const Eigen::VectorXd o = face_oracle(u0, rows);
    if (!u) {
      EXPECT_EQ(o.size(), 0) << "trial " << trial;
      continue;
    }
    ++feasible;
    for (const auto& row : rows) EXPECT_GE(row.a.dot(*u), row.c - 1e-8);
    ASSERT_EQ(o.size(), m) << "trial " << trial;
    EXPECT_LT((*u - o).norm(), 1e-7 * std::max(1.0, (o - u0).norm())) << "trial " << trial;
  }
  EXPECT_GT(feasible, 100);
}

TEST(ProjectOnto, InfeasibleSystemGivesNothing) {
  std::vector<InputConstraint> rows{{vec({1.0}), 1.0}, {vec({-1.0}), 0.0}};
  EXPECT_FALSE(project_onto(vec({0.0}), rows).has_value());
  EXPECT_FALSE(project_onto(vec({0.0}), {{vec({0.0}), 1.0}}).has_value());
}

TEST(Simulate, InwardDriftNeverActivatesFilter) {
  const auto sys = planar(-Eigen::MatrixXd::Identity(2, 2));
  const auto tr = simulate(seev::testing::diamond_net(), sys, vec({0.5, 0.2}), zero_policy(2), 2.0, 1e-2);
  EXPECT_FALSE(tr.exited);
  EXPECT_EQ(tr.size(), 201u);
  EXPECT_NEAR(tr.times.back(), 2.0, 1e-12);
  for (auto a : tr.filter_active) EXPECT_EQ(a, 0);
  for (std::size_t k = 1; k < tr.size(); ++k) EXPECT_GT(tr.times[k], tr.times[k - 1]);
}

TEST(Simulate, FilterKeepsBarrierNonnegative) {
  const auto sys = planar(0.3 * Eigen::MatrixXd::Identity(2, 2));
  NominalPolicy push = [](double, const Eigen::VectorXd&) { return vec({1.0, 0.7}); };
  const auto tr = simulate(seev::testing::diamond_net(), sys, vec({0.1, 0.0}), push, 5.0, 1e-3);
  EXPECT_FALSE(tr.exited);
  EXPECT_GE(tr.min_b(), -1e-3);
  EXPECT_EQ(tr.infeasible_steps(), 0);
  long active = 0;
  for (auto a : tr.filter_active) active += a;
  EXPECT_GT(active, 0);
}

TEST(Simulate, Rk4GlobalErrorShrinksSixteenfold) {
  // rotation: exact solution known
  const auto sys = open_loop(mat({{0.0, -1.0}, {1.0, 0.0}}));
  const Network net = seev::testing::diamond_net(100.0);
  const Eigen::VectorXd x0 = vec({1.0, 0.5});
  const double t_end = 3.0;
  const Eigen::Matrix2d rot = (Eigen::Matrix2d() << std::cos(t_end), -std::sin(t_end), std::sin(t_end),
                               std::cos(t_end)).finished();
  const Eigen::VectorXd exact = rot * x0;
  auto err = [&](double dt) {
    return (simulate(net, sys, x0, nullptr, t_end, dt).states.back() - exact).norm();
  };
  const double e1 = err(0.1), e2 = err(0.05);
  EXPECT_GT(e1 / e2, 13.0);
  EXPECT_LT(e1 / e2, 19.0);
}

TEST(Simulate, BarrierDriftShrinksWithStepSize) {
  // b is linear here, so the per-step b error is the projected RK4 local error
  const auto sys = open_loop(mat({{0.0, -1.0}, {1.0, 0.0}}));
  const Network net = seev::testing::diamond_net(100.0);
  const Eigen::VectorXd x0 = vec({1.0, 0.5});
  auto drift = [&](double dt) {
    const auto coarse = simulate(net, sys, x0, nullptr, 1.0, dt);
    const auto fine = simulate(net, sys, x0, nullptr, 1.0, dt / 16.0);
    double worst = 0.0;
    for (std::size_t k = 0; k < coarse.size(); ++k) worst = std::max(worst, std::abs(coarse.b[k] - fine.b[16 * k]));
    return worst;
  };
  const double r = drift(0.1) / drift(0.05);
  EXPECT_GT(r, 12.0);
  EXPECT_LT(r, 20.0);
}

TEST(Simulate, LeavingTheDomainTruncates) {
  const auto sys = open_loop(2.0 * Eigen::MatrixXd::Identity(2, 2));
  const auto tr = simulate(seev::testing::diamond_net(100.0), sys, vec({1.0, 1.0}), nullptr, 10.0, 1e-2);
  EXPECT_TRUE(tr.exited);
  EXPECT_LT(tr.times.back(), 10.0);
  for (const auto& x : tr.states) EXPECT_TRUE(sys.domain.contains(x));
}

TEST(Simulate, StartOutsideSafeSetIsRejected) {
  EXPECT_THROW(simulate(seev::testing::diamond_net(), planar(kZero), vec({1.5, 0.0}), nullptr, 1.0, 0.1),
               InvalidArgument);
  EXPECT_THROW(simulate(seev::testing::diamond_net(), planar(kZero), vec({0.0, 0.0}), nullptr, 1.0, 0.0),
               InvalidArgument);
}

TEST(Simulate, ManyMatchesOneByOne) {
  const auto sys = planar(0.3 * Eigen::MatrixXd::Identity(2, 2));
  NominalPolicy push = [](double t, const Eigen::VectorXd&) { return vec({std::cos(t), std::sin(t)}); };
  std::vector<Eigen::VectorXd> starts{vec({0.1, 0.1}), vec({-0.3, 0.2}), vec({0.0, -0.5})};
  const auto all = simulate_many(seev::testing::diamond_net(), sys, starts, push, 1.0, 1e-2, {}, 3);
  ASSERT_EQ(all.size(), 3u);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const auto one = simulate(seev::testing::diamond_net(), sys, starts[i], push, 1.0, 1e-2);
    EXPECT_EQ(one.states.back(), all[i].states.back());
  }
}

TEST(Trajectory, CsvRoundTrip) {
  const auto sys = planar(0.3 * Eigen::MatrixXd::Identity(2, 2));
  NominalPolicy push = [](double, const Eigen::VectorXd&) { return vec({1.0, 0.7}); };
  const auto tr = simulate(seev::testing::diamond_net(), sys, vec({0.1, 0.0}), push, 0.5, 1e-2);
  std::stringstream ss;
  write_trajectory_csv(ss, tr);
  const auto back = read_trajectory_csv(ss);
  ASSERT_EQ(back.size(), tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_EQ(back.times[k], tr.times[k]);
    EXPECT_EQ(back.states[k], tr.states[k]);
    EXPECT_EQ(back.inputs[k], tr.inputs[k]);
    EXPECT_EQ(back.b[k], tr.b[k]);
    EXPECT_EQ(back.filter_active[k], tr.filter_active[k]);
  }
  std::stringstream bad("t,x1,b,h,active,infeasible\n0,1,2\n");
  EXPECT_THROW(read_trajectory_csv(bad), ParseError);
}
