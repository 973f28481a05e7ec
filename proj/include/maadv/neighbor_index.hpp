#ifndef MAADV_NEIGHBOR_INDEX_HPP
#define MAADV_NEIGHBOR_INDEX_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "event_core.hpp"

namespace maadv {

// Row-major N x K tables. Rows with fewer than K candidates are padded with
// the query's own index at distance 0.
struct NeighborIndex {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> spatial_idx;
  std::vector<double> spatial_dist;
  std::vector<std::size_t> temporal_idx;

  std::span<const std::size_t> spatial_row(std::size_t i) const {
    return {spatial_idx.data() + i * k, k};
  }
  std::span<const double> dist_row(std::size_t i) const { return {spatial_dist.data() + i * k, k}; }
  std::span<const std::size_t> temporal_row(std::size_t i) const {
    return {temporal_idx.data() + i * k, k};
  }
};

namespace detail {

struct Candidate {
  double dist;
  std::size_t idx;
  bool operator<(const Candidate& o) const {
    return dist < o.dist || (dist == o.dist && idx < o.idx);
  }
};

inline void check_knn_args(const EventStream& stream, std::size_t k) {
  if (stream.size() < 2) throw Error("need at least two events");
  if (k < 1) throw Error("k must be at least 1");
}

// k smallest of `cands` by (dist, idx), written into the row with self padding.
inline void fill_row(std::vector<Candidate>& cands, std::size_t self, std::size_t k,
                     std::size_t* idx_out, double* dist_out) {
  const std::size_t take = std::min(k, cands.size());
  std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end());
  for (std::size_t j = 0; j < k; ++j) {
    idx_out[j] = j < take ? cands[j].idx : self;
    if (dist_out) dist_out[j] = j < take ? cands[j].dist : 0.0;
  }
}

}  // namespace detail

// K nearest other events on normalized (x, y, t).
inline std::pair<std::vector<std::size_t>, std::vector<double>> knn_spatial(
    const EventStream& stream, std::size_t k) {
  detail::check_knn_args(stream, k);
  const std::size_t n = stream.size();
  std::vector<std::size_t> idx(n * k);
  std::vector<double> dist(n * k);
  std::vector<detail::Candidate> cands;
  cands.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cands.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) cands.push_back({distance3(stream[i], stream[j]), j});
    }
    detail::fill_row(cands, i, k, idx.data() + i * k, dist.data() + i * k);
  }
  return {std::move(idx), std::move(dist)};
}

// K nearest events among those with t_j >= t_i, j != i.
inline std::vector<std::size_t> knn_temporal_causal(const EventStream& stream, std::size_t k) {
  detail::check_knn_args(stream, k);
  const std::size_t n = stream.size();
  std::vector<std::size_t> idx(n * k);
  std::vector<detail::Candidate> cands;
  cands.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cands.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && stream[j].t >= stream[i].t) cands.push_back({distance3(stream[i], stream[j]), j});
    }
    detail::fill_row(cands, i, k, idx.data() + i * k, nullptr);
  }
  return idx;
}

// With causal = false the temporal table reuses the unrestricted spatial
// neighbours (the "w/o causal" ablation).
inline NeighborIndex build_neighbor_index(const EventStream& stream, std::size_t k,
                                          bool causal = true) {
  NeighborIndex index;
  index.n = stream.size();
  index.k = k;
  std::tie(index.spatial_idx, index.spatial_dist) = knn_spatial(stream, k);
  index.temporal_idx = causal ? knn_temporal_causal(stream, k) : index.spatial_idx;
  return index;
}

}  // namespace maadv

#endif  // MAADV_NEIGHBOR_INDEX_HPP
