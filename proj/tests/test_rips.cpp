#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "topojscc/rips.hpp"

using namespace topojscc;

namespace {

PointCloud random_cloud(Rng& rng, int b, int dim, bool with_duplicates = false) {
  PointCloud c(b);
  for (auto& p : c) {
    p.resize(dim);
    for (auto& v : p) v = rng.uniform(-1, 1);
  }
  if (with_duplicates && b >= 2) c[b - 1] = c[0];
  return c;
}

}  // namespace

TEST(PairwiseDistances, ThreeFourFive) {
  const PointCloud c{{0, 0}, {3, 4}};
  const DistanceMatrix m = pairwise_distances(c);
  EXPECT_DOUBLE_EQ(m.at(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(m.at(1, 0), 5.0);
  EXPECT_DOUBLE_EQ(m.at(0, 0), 0.0);
}

TEST(PairwiseDistances, IdenticalPointsAndProperties) {
  Rng rng(1);
  PointCloud c = random_cloud(rng, 6, 3, true);
  const DistanceMatrix m = pairwise_distances(c);
  EXPECT_DOUBLE_EQ(m.at(0, 5), 0.0);
  for (int i = 0; i < m.n; ++i) {
    EXPECT_DOUBLE_EQ(m.at(i, i), 0.0);
    for (int j = 0; j < m.n; ++j) EXPECT_DOUBLE_EQ(m.at(i, j), m.at(j, i));
  }
  EXPECT_THROW(pairwise_distances(PointCloud{{0, 0}}), Error);
  EXPECT_THROW(pairwise_distances(PointCloud{{0, 0}, {1, 2, 3}}), Error);
}

TEST(RipsDiagram, CollinearPointsDim0DeathsAreMstWeights) {
  // points at 0, 1, 3: pairwise gaps 1, 2, 3; the MST keeps {1, 2}
  const PointCloud c{{0.0}, {1.0}, {3.0}};
  const PersistenceDiagram d = rips_diagram(c, 1, 10.0);
  std::multiset<double> deaths;
  int essentials = 0;
  for (const auto& p : d.points) {
    ASSERT_EQ(p.dim, 0);
    if (p.essential) {
      ++essentials;
      EXPECT_DOUBLE_EQ(p.death, 10.0);
    } else {
      deaths.insert(p.death);
    }
  }
  EXPECT_EQ(essentials, 1);
  EXPECT_EQ(deaths, (std::multiset<double>{1.0, 2.0}));
}

TEST(RipsDiagram, UnitSquareLoop) {
  const PointCloud c{{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const PersistenceDiagram d = rips_diagram(c, 1, 2.0);
  const auto d1 = d.restrict_dim(1);
  ASSERT_EQ(d1.points.size(), 1u);
  EXPECT_DOUBLE_EQ(d1.points[0].birth, 1.0);
  EXPECT_DOUBLE_EQ(d1.points[0].death, std::sqrt(2.0));
  EXPECT_FALSE(d1.points[0].essential);
}

TEST(RipsDiagram, TwoPointsHaveNoLoops) {
  const PointCloud c{{0, 0}, {2, 0}};
  const PersistenceDiagram d = rips_diagram(c, 1, 5.0);
  EXPECT_EQ(d.count_dim(1), 0u);
  EXPECT_THROW(rips_diagram(c, 1, 0.0), Error);
  EXPECT_THROW(rips_diagram(c, 1, -1.0), Error);
}

TEST(RipsDiagram, MatchesNaiveReductionOracle) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int b = 2 + rng.uniform_int(7);
    const int dim = 1 + rng.uniform_int(4);
    const PointCloud c = random_cloud(rng, b, dim, trial % 5 == 0);
    const DistanceMatrix m = pairwise_distances(c);
    double eps = default_eps_max(m);
    if (eps == 0.0) continue;  // fully degenerate cloud
    if (trial % 3 == 0) eps *= 0.6;  // exercise truncated filtrations too
    const PersistenceDiagram d = rips_diagram(m, 1, eps);
    const auto got = testutil::to_oracle_rips(d);
    const auto want = oracle::rips_reference(m.d, b, eps);
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (std::size_t i = 0; i < got.size(); ++i)
      ASSERT_TRUE(got[i] == want[i]) << "trial " << trial << " point " << i;
  }
}

TEST(RipsDiagram, Dim0DeathsEqualMstWeights) {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const int b = 3 + rng.uniform_int(10);
    const PointCloud c = random_cloud(rng, b, 3);
    const DistanceMatrix m = pairwise_distances(c);
    const PersistenceDiagram d = rips_diagram(m, 0, default_eps_max(m));
    // Prim's algorithm, written independently
    std::vector<char> in_tree(b, 0);
    std::vector<double> key(b, 1e18);
    in_tree[0] = 1;
    for (int j = 1; j < b; ++j) key[j] = m.at(0, j);
    std::multiset<double> mst;
    for (int it = 1; it < b; ++it) {
      int best = -1;
      for (int j = 0; j < b; ++j)
        if (!in_tree[j] && (best < 0 || key[j] < key[best])) best = j;
      mst.insert(key[best]);
      in_tree[best] = 1;
      for (int j = 0; j < b; ++j)
        if (!in_tree[j]) key[j] = std::min(key[j], m.at(best, j));
    }
    std::multiset<double> deaths;
    for (const auto& p : d.points)
      if (!p.essential) deaths.insert(p.death);
    EXPECT_EQ(deaths, mst) << "trial " << trial;
  }
}

TEST(RipsDiagram, PermutationInvariance) {
  Rng rng(31);
  const PointCloud c = random_cloud(rng, 7, 3);
  const PersistenceDiagram base = rips_diagram(c, 1, default_eps_max(pairwise_distances(c)));
  std::vector<int> perm{3, 0, 6, 2, 5, 1, 4};
  PointCloud shuffled(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) shuffled[i] = c[perm[i]];
  const PersistenceDiagram d =
      rips_diagram(shuffled, 1, default_eps_max(pairwise_distances(shuffled)));
  EXPECT_EQ(testutil::to_oracle_rips(base), testutil::to_oracle_rips(d));
}

TEST(RipsDiagram, IsometryInvariance) {
  Rng rng(37);
  const int b = 8, dim = 4;
  PointCloud c = random_cloud(rng, b, dim);
  // rotate in the (0,1) and (2,3) planes, then translate
  const double a1 = 0.83, a2 = -1.21;
  PointCloud moved(b);
  for (int i = 0; i < b; ++i) {
    moved[i] = c[i];
    moved[i][0] = std::cos(a1) * c[i][0] - std::sin(a1) * c[i][1] + 2.5;
    moved[i][1] = std::sin(a1) * c[i][0] + std::cos(a1) * c[i][1] - 1.0;
    moved[i][2] = std::cos(a2) * c[i][2] - std::sin(a2) * c[i][3] + 0.25;
    moved[i][3] = std::sin(a2) * c[i][2] + std::cos(a2) * c[i][3] + 7.0;
  }
  const PersistenceDiagram da = rips_diagram(c, 1, default_eps_max(pairwise_distances(c)));
  const PersistenceDiagram db = rips_diagram(moved, 1, default_eps_max(pairwise_distances(moved)));
  ASSERT_EQ(da.points.size(), db.points.size());
  for (std::size_t i = 0; i < da.points.size(); ++i) {
    EXPECT_NEAR(da.points[i].birth, db.points[i].birth, 1e-9);
    EXPECT_NEAR(da.points[i].death, db.points[i].death, 1e-9);
    EXPECT_EQ(da.points[i].dim, db.points[i].dim);
  }
}

TEST(RipsCellEncoding, RoundTrips) {
  const int b = 11;
  for (int u = 0; u < b; ++u)
    for (int v = u; v < b; ++v) {
      const auto [du, dv] = decode_rips_cell(encode_rips_cell(u, v, b), b);
      EXPECT_EQ(du, u);
      EXPECT_EQ(dv, v);
    }
}
