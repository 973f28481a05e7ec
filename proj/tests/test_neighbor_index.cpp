#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "maadv/neighbor_index.hpp"
#include "test_support.hpp"

using namespace maadv;
using maadv::fixtures::brute_neighbours;
using maadv::fixtures::make_stream;
using maadv::fixtures::random_unit_stream;

namespace {

EventStream three_points() { return make_stream({{0, 0, 0}, {0.1, 0, 0.1}, {0.9, 0.9, 0.9}}); }

}  // namespace

TEST(KnnSpatial, HandExample) {
  const auto [idx, dist] = knn_spatial(three_points(), 1);
  EXPECT_EQ(idx, (std::vector<std::size_t>{1, 0, 1}));
  EXPECT_NEAR(dist[0], 0.1414, 1e-4);
  EXPECT_NEAR(dist[1], 0.1414, 1e-4);
  EXPECT_NEAR(dist[2], 1.4457, 1e-4);
}

TEST(KnnSpatial, PadsWithSelf) {
  const auto [idx, dist] = knn_spatial(three_points(), 5);
  EXPECT_EQ(std::vector<std::size_t>(idx.begin(), idx.begin() + 5), (std::vector<std::size_t>{1, 2, 0, 0, 0}));
  EXPECT_EQ(dist[2], 0.0);
  EXPECT_EQ(dist[3], 0.0);
  EXPECT_EQ(dist[4], 0.0);
}

TEST(KnnSpatial, Preconditions) {
  EXPECT_THROW(knn_spatial(make_stream({{0, 0, 0}}), 1), Error);
  EXPECT_THROW(knn_spatial(three_points(), 0), Error);
}

TEST(KnnCausal, HandExample) {
  EXPECT_EQ(knn_temporal_causal(three_points(), 1), (std::vector<std::size_t>{1, 2, 2}));
}

TEST(KnnCausal, LastEventRowIsSelf) {
  const auto s = random_unit_stream(40, 4);
  const auto idx = knn_temporal_causal(s, 6);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(idx[39 * 6 + j], 39u);
}

TEST(KnnCausal, NeighboursNeverEarlier) {
  const auto s = random_unit_stream(120, 8, true);
  const auto idx = knn_temporal_causal(s, 10);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < 10; ++j) EXPECT_GE(s[idx[i * 10 + j]].t, s[i].t);
  }
}

TEST(KnnCausal, StorageOrderIrrelevantAfterSort) {
  const auto s = random_unit_stream(80, 10);
  EventStream rev = s;
  std::reverse(rev.events.begin(), rev.events.end());
  rev.sort_by_t();
  ASSERT_EQ(rev.events, s.events);
  EXPECT_EQ(knn_temporal_causal(rev, 5), knn_temporal_causal(s, 5));
}

TEST(KnnOracle, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 2 + seed * 12;
    const auto s = random_unit_stream(n, 100 + seed, seed % 2 == 0);
    const std::size_t k = 1 + seed % 11;
    const auto index = build_neighbor_index(s, k);
    for (std::size_t i = 0; i < n; ++i) {
      const auto sp = brute_neighbours(s, i, false);
      const auto tp = brute_neighbours(s, i, true);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t want_s = j < sp.size() ? sp[j].second : i;
        const double want_d = j < sp.size() ? sp[j].first : 0.0;
        const std::size_t want_t = j < tp.size() ? tp[j].second : i;
        EXPECT_EQ(index.spatial_row(i)[j], want_s);
        EXPECT_EQ(index.dist_row(i)[j], want_d);
        EXPECT_EQ(index.temporal_row(i)[j], want_t);
      }
    }
  }
}

TEST(NeighborIndex, NonCausalReusesSpatial) {
  const auto s = random_unit_stream(30, 1);
  const auto index = build_neighbor_index(s, 4, false);
  EXPECT_EQ(index.temporal_idx, index.spatial_idx);
}
