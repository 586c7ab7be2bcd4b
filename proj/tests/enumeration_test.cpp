#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "seev/enumeration.hpp"
#include "test_nets.hpp"

namespace seev {
namespace {

using testing::abs_net;
using testing::fold_abs_net;
using testing::random_net;
using testing::vec;
using testing::vee_net;

ActivationSet set_of(const Network& net, std::initializer_list<Neuron> members) {
  ActivationSet s = ActivationSet::none(net.total_neurons());
  for (auto n : members) s.set(net.flat_index(n), true);
  return s;
}

const IntervalBox kLine = IntervalBox::uniform(1, -2.0, 2.0);
const IntervalBox kSquare = IntervalBox::uniform(2, -2.0, 2.0);

TEST(InitialActivationSet, BisectionFindsRegionOfTheCrossing) {
  const Network net = abs_net();
  const auto s0 = initial_activation_set(net, {vec({0.0})}, {vec({2.0})}, kLine);
  EXPECT_EQ(s0, set_of(net, {{0, 0}, {1, 0}}));
}

TEST(InitialActivationSet, ExactZeroOnFirstProbe) {
  const Network net = abs_net();
  const auto s0 = initial_activation_set(net, {vec({0.0})}, {vec({1.0})}, kLine);
  EXPECT_EQ(s0, activation_pattern(net, vec({0.5})).active);
}

TEST(InitialActivationSet, PairsWithWrongSignsAreSkipped) {
  const Network net = abs_net();
  // b(-1) = 0.5 > 0, so -1 cannot serve as the unsafe end.
  EXPECT_THROW(initial_activation_set(net, {vec({-1.0})}, {vec({2.0})}, kLine), NotFound);
  EXPECT_NO_THROW(initial_activation_set(net, {vec({-1.0}), vec({0.1})}, {vec({2.0})}, kLine));
}

TEST(Nbfs, SingleRegionBoundary) {
  // b(x) = x1 + x2 - 0.5 from one always-active neuron.
  const Network net(2, {{testing::mat({{1.0, 1.0}}), vec({10.0})}}, vec({1.0}), -10.5);
  const auto s0 = ActivationSet::all(1);
  const auto cat = nbfs(net, s0, kSquare);
  ASSERT_EQ(cat.regions.size(), 1u);
  EXPECT_EQ(cat.regions[0], s0);
  EXPECT_NEAR(forward(net, cat.witnesses[0]), 0.0, 1e-9);
  EXPECT_TRUE(hinge_enum(net, cat.regions, 2, kSquare).empty());
}

TEST(Nbfs, VeeHasTwoRegionsAndOneHinge) {
  const Network net = vee_net();
  const auto s0 = activation_pattern(net, vec({1.0, 0.5})).active;
  const auto cat = nbfs(net, s0, kSquare);
  ASSERT_EQ(cat.regions.size(), 2u);
  const auto hinges = hinge_enum(net, cat.regions, 2, kSquare);
  ASSERT_EQ(hinges.size(), 1u);
  EXPECT_EQ(hinges[0], (Hinge{0, 1}));
}

TEST(Nbfs, DisconnectedZeroLevelNeedsSeparateSeeds) {
  const Network net = fold_abs_net(-0.5);  // zero level is x1 = +-0.5
  const auto right = activation_pattern(net, vec({0.5, 0.0})).active;
  EXPECT_EQ(nbfs(net, right, kSquare).regions.size(), 1u);

  const std::vector<Eigen::VectorXd> unsafe{vec({0.0, 0.0})};
  const std::vector<Eigen::VectorXd> safe{vec({1.5, 0.0}), vec({-1.5, 0.0})};
  const auto cat = enumerate(net, unsafe, safe, kSquare);
  EXPECT_EQ(cat.regions.size(), 2u);
  EXPECT_TRUE(cat.hinges.empty());  // the fold at x1 = 0 has b = -0.5
}

TEST(HingeEnum, FoldOnTheZeroLevel) {
  const Network net = fold_abs_net(0.0);
  const std::vector<ActivationSet> regions{activation_pattern(net, vec({-1.0, 0.0})).active,
                                           activation_pattern(net, vec({1.0, 0.0})).active};
  ASSERT_EQ(symmetric_difference(regions[0], regions[1]), 1);
  const auto hinges = hinge_enum(net, regions, 2, kSquare);
  ASSERT_EQ(hinges.size(), 1u);
}

TEST(HingeEnum, OneDimensionalFoldIsExamined) {
  const Network net(1, {{testing::mat({{1.0}, {1.0}}), vec({0.0, 10.0})}}, vec({2.0, -1.0}), 10.0);  // |x|
  const std::vector<ActivationSet> regions{ActivationSet(std::vector<std::uint8_t>{0, 1}), ActivationSet::all(2)};
  EXPECT_EQ(hinge_enum(net, regions, 1, kLine).size(), 1u);
}

TEST(Enumerate, NotFoundWithoutStraddlingPairs) {
  const Network net = abs_net(0.5);  // b > 0 everywhere
  EXPECT_THROW(enumerate(net, {vec({0.0})}, {vec({1.0})}, kLine), NotFound);
}

TEST(Enumerate, RegionBudget) {
  std::mt19937_64 rng(4);
  const Network net = random_net(rng, 2, {8, 8});
  EnumOptions opt;
  opt.max_regions = 1;
  const auto cat = [&] {
    EnumOptions loose;
    return enumerate(net, {vec({-2, -2}), vec({2, 2}), vec({-2, 2}), vec({2, -2})},
                     {vec({-2, -2}), vec({2, 2}), vec({-2, 2}), vec({2, -2}), vec({0, 0})}, kSquare, loose);
  };
  try {
    if (cat().regions.size() > 1) {
      EXPECT_THROW(enumerate(net, {vec({-2, -2}), vec({2, 2}), vec({-2, 2}), vec({2, -2})},
                             {vec({-2, -2}), vec({2, 2}), vec({-2, 2}), vec({2, -2}), vec({0, 0})}, kSquare, opt),
                   RegionBudgetExceeded);
    }
  } catch (const NotFound&) {
    GTEST_SKIP() << "net has no boundary in the box";
  }
}

TEST(Catalog, RoundTrip) {
  const Network net = vee_net();
  BoundaryCatalog cat = nbfs(net, activation_pattern(net, vec({1.0, 0.5})).active, kSquare);
  cat.hinges = hinge_enum(net, cat.regions, 2, kSquare);
  std::stringstream ss;
  write_catalog(ss, cat);
  const auto back = read_catalog(ss);
  EXPECT_EQ(back.regions, cat.regions);
  EXPECT_EQ(back.hinges, cat.hinges);
  ASSERT_EQ(back.witnesses.size(), cat.witnesses.size());
  for (std::size_t i = 0; i < cat.witnesses.size(); ++i) EXPECT_EQ(back.witnesses[i], cat.witnesses[i]);
  std::stringstream bad("catalog v1 n=2 neurons=3 regions=2 hinges=0\nregion 0 7 0 0\n");
  EXPECT_THROW(read_catalog(bad), ParseError);
}

// Properties ----------------------------------------------------------------

std::optional<ActivationSet> grid_seed(const Network& net, const IntervalBox& box) {
  const int n = 24;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d a(box[0].lo() + box[0].width() * i / n, box[1].lo() + box[1].width() * j / n);
      const Eigen::Vector2d b(a[0], box[1].lo() + box[1].width() * (j + 1) / n);
      const double fa = forward(net, a), fb = forward(net, b);
      if ((fa < 0) != (fb < 0) && fa != 0 && fb != 0) {
        const auto lo = fa < 0 ? a : b, hi = fa < 0 ? b : a;
        return initial_activation_set(net, {lo}, {hi}, box);
      }
    }
  return std::nullopt;
}

TEST(EnumerationProperty, MatchesBruteForceComponent) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> width(2, 5);
  int compared = 0;
  for (int trial = 0; compared < 25 && trial < 200; ++trial) {
    std::vector<int> sizes{width(rng)};
    if (trial % 2) sizes.push_back(width(rng));
    const Network net = random_net(rng, 2, sizes);
    const auto s0 = grid_seed(net, kSquare);
    if (!s0) continue;
    const auto cat = nbfs(net, *s0, kSquare);
    const auto oracle = testing::brute_force_component(net, *s0, kSquare);
    const std::set<ActivationSet> got(cat.regions.begin(), cat.regions.end());
    EXPECT_EQ(got, oracle.regions) << "trial " << trial;
    std::set<std::pair<ActivationSet, ActivationSet>> hinges;
    for (const auto& h : hinge_enum(net, cat.regions, 2, kSquare)) {
      ASSERT_EQ(h.size(), 2u);
      hinges.insert(std::minmax(cat.regions[h[0]], cat.regions[h[1]]));
    }
    EXPECT_EQ(hinges, oracle.hinges) << "trial " << trial;
    ++compared;
  }
  EXPECT_EQ(compared, 25);
}

TEST(EnumerationProperty, BisectionBoundaryPointsAreCovered) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = random_net(rng, 2, {6, 4});
    std::vector<Eigen::VectorXd> neg, pos;
    for (int s = 0; s < 400; ++s) {
      const Eigen::Vector2d x(coord(rng), coord(rng));
      (forward(net, x) < 0 ? neg : pos).push_back(x);
    }
    if (neg.empty() || pos.empty()) continue;
    neg.resize(std::min<std::size_t>(neg.size(), 20));
    pos.resize(std::min<std::size_t>(pos.size(), 20));
    EnumOptions opt;
    opt.seed_pairs = 400;
    const auto cat = enumerate(net, neg, pos, kSquare, opt);
    for (const auto& a : neg)
      for (const auto& b : pos) {
        Eigen::VectorXd lo = a, hi = b;
        for (int it = 0; it < 60; ++it) {
          const Eigen::VectorXd mid = 0.5 * (lo + hi);
          (forward(net, mid) < 0 ? lo : hi) = mid;
        }
        // The crossing lies in the closure of the pattern at either end.
        const bool covered = cat.find(activation_pattern(net, lo).active) >= 0 ||
                             cat.find(activation_pattern(net, hi).active) >= 0;
        EXPECT_TRUE(covered) << "trial " << trial;
      }
  }
}

TEST(EnumerationProperty, IndependentOfWorkerCount) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const Network net = random_net(rng, 2, {8, 6});
    const auto s0 = grid_seed(net, kSquare);
    if (!s0) continue;
    EnumOptions one, four;
    four.workers = 4;
    const auto a = nbfs(net, *s0, kSquare, one);
    const auto b = nbfs(net, *s0, kSquare, four);
    EXPECT_EQ(a.regions, b.regions);
    EXPECT_EQ(hinge_enum(net, a.regions, 2, kSquare, one), hinge_enum(net, b.regions, 2, kSquare, four));
  }
}

TEST(EnumerationProperty, CatalogInvariants) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = random_net(rng, 2, {6, 5});
    const auto s0 = grid_seed(net, kSquare);
    if (!s0) continue;
    auto cat = nbfs(net, *s0, kSquare);
    cat.hinges = hinge_enum(net, cat.regions, 2, kSquare);
    EXPECT_TRUE(std::is_sorted(cat.regions.begin(), cat.regions.end()));
    EXPECT_EQ(std::adjacent_find(cat.regions.begin(), cat.regions.end()), cat.regions.end());
    for (std::size_t i = 0; i < cat.regions.size(); ++i) {
      EXPECT_TRUE(boundary_lp(net, cat.regions[i], kSquare).feasible());
      EXPECT_NEAR(region_affine(net, cat.regions[i]).output(cat.witnesses[i]), 0.0, 1e-6);
    }
    for (const auto& h : cat.hinges) {
      std::vector<ActivationSet> members;
      for (int i : h) members.push_back(cat.regions.at(i));
      EXPECT_TRUE(hinge_lp(net, members, kSquare).feasible());
    }
  }
}

}  // namespace
}  // namespace seev
