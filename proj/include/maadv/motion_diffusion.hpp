#ifndef MAADV_MOTION_DIFFUSION_HPP
#define MAADV_MOTION_DIFFUSION_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "event_core.hpp"
#include "neighbor_index.hpp"

namespace maadv {

/// Additive per-event offsets on normalized (x, y, t). Polarity is never
/// perturbed.
struct Perturbation {
  std::vector<Vec3> delta;
  double init_sigma = 0.0;

  std::size_t size() const { return delta.size(); }

  static Perturbation zeros(std::size_t n) { return {std::vector<Vec3>(n, Vec3{0.0, 0.0, 0.0}), 0.0}; }

  static Perturbation gaussian(std::size_t n, double sigma, std::mt19937_64& rng) {
    Perturbation p = zeros(n);
    p.init_sigma = sigma;
    if (sigma > 0.0) {
      std::normal_distribution<double> gauss(0.0, sigma);
      for (auto& row : p.delta) {
        for (auto& v : row) v = gauss(rng);
      }
    }
    return p;
  }

  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

struct VelocityField {
  std::vector<double> v;
};

inline constexpr double kVelocityTimeEpsilon = 1e-9;
inline constexpr double kFlatVelocityTolerance = 1e-9;

/// Speed between consecutive events, min-max normalized to [0, 1].
///
/// Event 0 has no predecessor and copies event 1's raw speed. A raw speed
/// that is constant up to rounding (relative spread below 1e-9) normalizes to
/// all zeros.
inline VelocityField event_velocity(const EventStream& stream) {
  const std::size_t n = stream.size();
  VelocityField field{std::vector<double>(n, 0.0)};
  if (n < 2) return field;
  auto& v = field.v;
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = stream[i].x - stream[i - 1].x;
    const double dy = stream[i].y - stream[i - 1].y;
    const double dt = stream[i].t - stream[i - 1].t;
    v[i] = std::sqrt(dx * dx + dy * dy) / (dt + kVelocityTimeEpsilon);
  }
  v[0] = v[1];
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double vmin = *lo;
  const double range = *hi - vmin;
  const bool flat = !(range > kFlatVelocityTolerance * std::abs(*hi));
  for (auto& x : v) x = flat ? 0.0 : (x - vmin) / range;
  return field;
}

enum class VelocitySide { Neighbor, Query };

// Each event also enters its own averages as a zero-distance member: spatial
// weight exp(0) = 1, temporal weight from its own velocity (w_t_self).
struct DiffusionWeights {
  std::size_t k = 0;
  std::vector<double> w_s;
  std::vector<double> w_t;
  std::vector<double> w_t_self;
  double sigma_s = 0.0;
  double sigma_t = 0.0;
};

inline DiffusionWeights diffusion_weights(const NeighborIndex& index, const VelocityField& vel,
                                          double sigma_s, double sigma_t,
                                          VelocitySide side = VelocitySide::Neighbor) {
  if (!(sigma_s > 0.0) || !(sigma_t > 0.0)) throw Error("diffusion sigmas must be positive");
  if (vel.v.size() != index.n) throw Error("velocity field length does not match index");
  DiffusionWeights w;
  w.k = index.k;
  w.sigma_s = sigma_s;
  w.sigma_t = sigma_t;
  w.w_s.resize(index.n * index.k);
  w.w_t.resize(index.n * index.k);
  w.w_t_self.resize(index.n);
  for (std::size_t i = 0; i < index.n; ++i) {
    w.w_t_self[i] = std::exp(-vel.v[i] / sigma_t);
    for (std::size_t j = 0; j < index.k; ++j) {
      const std::size_t cell = i * index.k + j;
      w.w_s[cell] = std::exp(-index.spatial_dist[cell] / sigma_s);
      const std::size_t source = side == VelocitySide::Neighbor ? index.temporal_idx[cell] : i;
      w.w_t[cell] = std::exp(-vel.v[source] / sigma_t);
    }
  }
  return w;
}

enum class DiffusionMode { Both, SpatialOnly, TemporalOnly };

namespace detail {

inline Vec3 weighted_mean(const std::vector<Vec3>& delta, std::size_t self, double self_w,
                          const std::size_t* idx, const double* w, std::size_t k) {
  Vec3 acc;
  for (int d = 0; d < 3; ++d) acc[d] = self_w * delta[self][d];
  double total = self_w;
  for (std::size_t j = 0; j < k; ++j) {
    const auto& src = delta[idx[j]];
    for (int d = 0; d < 3; ++d) acc[d] += w[j] * src[d];
    total += w[j];
  }
  for (auto& a : acc) a /= total;
  return acc;
}

}  // namespace detail

/// Replaces each event's offset with the average of two weighted means: one
/// over the event and its spatial neighbours, one over the event and its
/// causal temporal neighbours.
inline Perturbation diffuse(const Perturbation& pert, const NeighborIndex& index,
                            const DiffusionWeights& weights, DiffusionMode mode = DiffusionMode::Both) {
  if (pert.size() != index.n) throw Error("perturbation length does not match neighbour index");
  if (weights.k != index.k || weights.w_s.size() != index.n * index.k) {
    throw Error("diffusion weights do not match neighbour index");
  }
  Perturbation out;
  out.init_sigma = pert.init_sigma;
  out.delta.resize(pert.size());
  const std::size_t k = index.k;
  for (std::size_t i = 0; i < index.n; ++i) {
    const Vec3 s = detail::weighted_mean(pert.delta, i, 1.0, index.spatial_idx.data() + i * k,
                                         weights.w_s.data() + i * k, k);
    const Vec3 t = detail::weighted_mean(pert.delta, i, weights.w_t_self[i],
                                         index.temporal_idx.data() + i * k, weights.w_t.data() + i * k, k);
    for (int d = 0; d < 3; ++d) {
      switch (mode) {
        case DiffusionMode::Both: out.delta[i][d] = 0.5 * (s[d] + t[d]); break;
        case DiffusionMode::SpatialOnly: out.delta[i][d] = s[d]; break;
        case DiffusionMode::TemporalOnly: out.delta[i][d] = t[d]; break;
      }
    }
  }
  return out;
}

}  // namespace maadv

#endif  // MAADV_MOTION_DIFFUSION_HPP
