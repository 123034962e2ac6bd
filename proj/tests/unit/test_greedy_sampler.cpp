#include <gtest/gtest.h>

#include <random>
#include <set>

#include "evb/error.hpp"
#include "evb/greedy_sampler.hpp"
#include "test_util.hpp"

using namespace evb;

namespace {

void connect(SparseScene& s, std::uint32_t a, std::uint32_t b, int n) {
  std::uint64_t next = s.points3d.empty() ? 1 : s.points3d.rbegin()->first + 1;
  for (int i = 0; i < n; ++i) test::add_point(s, next + i, {0, 0, 1}, {a, b});
}

SparseScene star() {
  SparseScene s;
  test::add_camera(s);
  test::add_image(s, 1, RotationSO3(), {0, 0, 0});
  for (std::uint32_t i = 2; i <= 6; ++i) {
    test::add_image(s, i, RotationSO3(), {10.0 * i, 0, 0});
    connect(s, 1, i, 40);
  }
  return s;
}

}  // namespace

TEST(CovisGraph, InclusiveThresholds) {
  SparseScene s;
  test::add_camera(s);
  test::add_image(s, 1, RotationSO3(), {0, 0, 0});
  test::add_image(s, 2, RotationSO3(), {2.5, 0, 0});
  test::add_image(s, 3, RotationSO3(), {0, 2.5, 0});
  connect(s, 1, 2, 30);
  connect(s, 1, 3, 29);
  auto g = build_covis_graph(s, {}, 2.0);
  ASSERT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(g.edges[0].a, 1u);
  EXPECT_EQ(g.edges[0].b, 2u);
  EXPECT_EQ(g.edges[0].shared, 30u);
  EXPECT_DOUBLE_EQ(g.edges[0].distance, 5.0);
  EXPECT_EQ(build_covis_graph(s, {}, 1.9).edges.size(), 0u);
  EXPECT_THROW(build_covis_graph(s, {}), InvalidArgument);
  s.scale_to_meters = 2.0;
  EXPECT_EQ(build_covis_graph(s, {}).edges.size(), 1u);
  EXPECT_EQ(build_covis_graph(s, {30, 0.0}, std::nullopt).edges.size(), 1u);
}

TEST(CovisGraph, MatchesBruteForce) {
  std::mt19937_64 rng(81);
  for (int trial = 0; trial < 10; ++trial) {
    SparseScene s;
    test::add_camera(s);
    int n = 5 + static_cast<int>(rng() % 60);
    for (int i = 1; i <= n; ++i)
      test::add_image(s, i, test::random_rotation(rng), test::random_vec(rng, 8));
    for (int p = 0; p < 40 * n; ++p) {
      std::uint32_t a = 1 + rng() % n, b = 1 + rng() % n;
      if (a == b) continue;
      test::add_point(s, p + 1, {0, 0, 1}, {a, b});
    }
    CovisParams params{5, 3.0};
    auto g = build_covis_graph(s, params, 1.5);
    std::set<std::pair<std::uint32_t, std::uint32_t>> got, want;
    for (auto& e : g.edges) got.insert({e.a, e.b});
    for (int a = 1; a <= n; ++a)
      for (int b = a + 1; b <= n; ++b) {
        double d = (s.images.at(a).center() - s.images.at(b).center()).norm() * 1.5;
        if (shared_points(s, a, b) >= 5 && d >= 3.0) want.insert({a, b});
      }
    EXPECT_EQ(got, want) << trial;
  }
}

TEST(Greedy, StarPicksHub) {
  auto g = build_covis_graph(star(), {30, 0.0});
  SamplerParams p;
  p.n = 2;
  p.start = 4;
  auto r = greedy_sample(g, p);
  EXPECT_EQ(r.images, (std::vector<std::uint32_t>{4, 1}));
  EXPECT_FALSE(r.truncated);
}

TEST(Greedy, PathFollowsFrontier) {
  SparseScene s;
  test::add_camera(s);
  for (std::uint32_t i = 1; i <= 4; ++i) test::add_image(s, i, RotationSO3(), {double(i), 0, 0});
  for (std::uint32_t i = 1; i < 4; ++i) connect(s, i, i + 1, 30);
  auto g = build_covis_graph(s, {30, 1.0}, 1.0);
  SamplerParams p;
  p.n = 3;
  p.start = 1;
  EXPECT_EQ(greedy_sample(g, p).images, (std::vector<std::uint32_t>{1, 2, 3}));
}

TEST(Greedy, TruncatesAtComponent) {
  SparseScene s = star();
  test::add_image(s, 50, RotationSO3(), {100, 0, 0});
  test::add_image(s, 51, RotationSO3(), {200, 0, 0});
  connect(s, 50, 51, 40);
  auto g = build_covis_graph(s, {30, 0.0});
  auto comps = g.components();
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].size(), 6u);
  SamplerParams p;
  p.n = 10;
  p.seed = 3;
  auto r = greedy_sample(g, p);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.warning.empty());
  EXPECT_EQ(std::set<std::uint32_t>(r.images.begin(), r.images.end()),
            std::set<std::uint32_t>(comps[0].begin(), comps[0].end()));
}

TEST(Greedy, DeterministicAndConnected) {
  std::mt19937_64 rng(82);
  SparseScene s;
  test::add_camera(s);
  for (int i = 1; i <= 40; ++i) test::add_image(s, i, RotationSO3(), test::random_vec(rng, 20));
  for (int p = 0; p < 120; ++p) {
    std::uint32_t a = 1 + rng() % 40, b = 1 + rng() % 40;
    if (a != b) connect(s, a, b, 30);
  }
  auto g = build_covis_graph(s, {30, 0.0});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SamplerParams p;
    p.seed = seed;
    auto a = greedy_sample(g, p), b = greedy_sample(g, p);
    EXPECT_EQ(a.images, b.images);
    auto largest = g.components()[0];
    EXPECT_TRUE(std::binary_search(largest.begin(), largest.end(), a.images[0]));
    for (std::size_t i = 1; i < a.images.size(); ++i) {
      bool adj = false;
      for (std::size_t j = 0; j < i; ++j) {
        const auto& nb = g.adjacency.at(a.images[j]);
        adj |= std::binary_search(nb.begin(), nb.end(), a.images[i]);
      }
      EXPECT_TRUE(adj);
    }
  }
  EXPECT_THROW(greedy_sample(CovisGraph{}), Error);
}
