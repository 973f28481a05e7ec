#ifndef MAADV_METRICS_DEFENSE_HPP
#define MAADV_METRICS_DEFENSE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "attack_result.hpp"
#include "event_core.hpp"
#include "neighbor_index.hpp"
#include "victim_net.hpp"

namespace maadv {

struct NearestClean {
  std::vector<double> dist;
  std::vector<std::size_t> idx;  // lowest index on ties
};

/// For every adversarial event, the closest clean event on (x, y, t).
inline NearestClean nearest_clean(const EventStream& adv, const EventStream& clean) {
  if (adv.empty() || clean.empty()) throw Error("empty stream");
  NearestClean out;
  out.dist.resize(adv.size());
  out.idx.resize(adv.size());
  for (std::size_t a = 0; a < adv.size(); ++a) {
    const Vec3 pa = xyz(adv[a]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t who = 0;
    for (std::size_t c = 0; c < clean.size(); ++c) {
      const double d = distance3(pa, xyz(clean[c]));
      if (d < best) {
        best = d;
        who = c;
      }
    }
    out.dist[a] = best;
    out.idx[a] = who;
  }
  return out;
}

// Directed adv -> clean. Shared by the attack loss and the reported metric.
inline double chamfer_distance(const EventStream& adv, const EventStream& clean) {
  const auto nn = nearest_clean(adv, clean);
  const double sum = std::accumulate(nn.dist.begin(), nn.dist.end(), 0.0);
  const double mean = sum / static_cast<double>(nn.dist.size());
  // A mean never exceeds the max; rounding in the sum must not make it.
  return std::min(mean, *std::max_element(nn.dist.begin(), nn.dist.end()));
}

inline double chamfer_metric(const EventStream& adv, const EventStream& clean) {
  return chamfer_distance(adv, clean);
}

inline double hausdorff_metric(const EventStream& adv, const EventStream& clean) {
  const auto nn = nearest_clean(adv, clean);
  return *std::max_element(nn.dist.begin(), nn.dist.end());
}

/// Global Euclidean norm of the index-aligned displacement on (x, y, t).
inline double l2_metric(const EventStream& adv, const EventStream& clean) {
  if (adv.size() != clean.size()) throw Error("l2 metric needs index-aligned streams of equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double dx = adv[i].x - clean[i].x;
    const double dy = adv[i].y - clean[i].y;
    const double dt = adv[i].t - clean[i].t;
    sum += dx * dx + dy * dy + dt * dt;
  }
  return std::sqrt(sum);
}

inline DistanceMetrics distance_metrics(const EventStream& adv, const EventStream& clean) {
  return {chamfer_metric(adv, clean), hausdorff_metric(adv, clean), l2_metric(adv, clean)};
}

struct MetricReport {
  double sr = 0.0;
  double chamfer = 0.0;
  double hausdorff = 0.0;
  double l2 = 0.0;
  std::size_t n_samples = 0;
};

inline double success_rate(std::span<const AttackResult> results) {
  if (results.empty()) throw Error("no attack results");
  const auto hits = std::count_if(results.begin(), results.end(),
                                  [](const AttackResult& r) { return r.success; });
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

/// SR over all results; distance means over the successful ones (NaN when
/// none succeeded).
inline MetricReport summarize(std::span<const AttackResult> results) {
  MetricReport rep;
  rep.sr = success_rate(results);
  rep.n_samples = results.size();
  std::size_t ok = 0;
  for (const auto& r : results) {
    if (!r.success) continue;
    rep.chamfer += r.metrics.chamfer;
    rep.hausdorff += r.metrics.hausdorff;
    rep.l2 += r.metrics.l2;
    ++ok;
  }
  if (ok == 0) {
    rep.chamfer = rep.hausdorff = rep.l2 = std::numeric_limits<double>::quiet_NaN();
  } else {
    rep.chamfer /= static_cast<double>(ok);
    rep.hausdorff /= static_cast<double>(ok);
    rep.l2 /= static_cast<double>(ok);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Defenses

enum class DefenseKind { Sor, Srs };

struct DefenseConfig {
  DefenseKind kind = DefenseKind::Sor;
  std::size_t sor_k = 5;
  double sor_alpha = 1.1;
  double srs_ratio = 0.5;
  std::uint64_t seed = 0;
};

inline std::string to_string(DefenseKind kind) { return kind == DefenseKind::Sor ? "sor" : "srs"; }

/// Statistical outlier removal: drops events whose mean distance to their
/// sor_k nearest neighbours exceeds mu + alpha * sigma of that statistic.
inline EventStream sor_defense(const EventStream& stream, std::size_t sor_k, double sor_alpha) {
  if (sor_k < 1) throw Error("sor_k must be at least 1");
  if (!(sor_alpha > 0.0)) throw Error("sor_alpha must be positive");
  if (stream.size() <= sor_k) throw Error("SOR needs more events than sor_k");
  const auto [idx, dist] = knn_spatial(stream, sor_k);
  const std::size_t n = stream.size();
  std::vector<double> mean_d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < sor_k; ++j) mean_d[i] += dist[i * sor_k + j];
    mean_d[i] /= static_cast<double>(sor_k);
  }
  const double mu = std::accumulate(mean_d.begin(), mean_d.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_d) var += (d - mu) * (d - mu);
  const double sigma = std::sqrt(var / static_cast<double>(n));
  const double threshold = mu + sor_alpha * sigma;

  EventStream out = stream;
  out.events.clear();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(mean_d[i] > threshold)) out.events.push_back(stream[i]);
  }
  if (out.empty()) {
    const auto keep = std::min_element(mean_d.begin(), mean_d.end()) - mean_d.begin();
    out.events.push_back(stream[static_cast<std::size_t>(keep)]);
  }
  return out;
}

/// Simple random subsampling: keeps ceil(ratio * N) events, re-sorted by t.
inline EventStream srs_defense(const EventStream& stream, double srs_ratio, std::uint64_t seed) {
  if (!(srs_ratio > 0.0 && srs_ratio <= 1.0)) throw Error("srs_ratio must be in (0,1]");
  if (stream.empty()) throw Error("empty stream");
  const auto keep = static_cast<std::size_t>(std::ceil(srs_ratio * static_cast<double>(stream.size())));
  return resample_fixed(stream, std::max<std::size_t>(keep, 1), seed);
}

inline EventStream apply_defense(const EventStream& stream, const DefenseConfig& cfg,
                                 std::uint64_t seed) {
  return cfg.kind == DefenseKind::Sor ? sor_defense(stream, cfg.sor_k, cfg.sor_alpha)
                                      : srs_defense(stream, cfg.srs_ratio, seed);
}

// Derives the per-sample stream seed used by defenses and attacks.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ static_cast<std::uint64_t>(index);
}

/// Purifies each adversarial stream, brings it back to the victim's event
/// count and re-checks misclassification.
inline MetricReport defended_eval(const VictimParams& victim, std::span<const AttackResult> results,
                                  const DefenseConfig& defense, std::size_t n_events) {
  if (results.empty()) throw Error("no attack results");
  std::vector<AttackResult> defended(results.begin(), results.end());
  for (std::size_t i = 0; i < defended.size(); ++i) {
    auto& r = defended[i];
    if (!r.success || !r.best_adv) {
      r.success = false;
      continue;
    }
    const std::uint64_t s = sample_seed(defense.seed, i);
    EventStream purified = apply_defense(*r.best_adv, defense, s);
    if (purified.size() != n_events) purified = resample_fixed(purified, n_events, s + 1);
    r.success = predict(victim, purified) != static_cast<std::size_t>(r.label);
  }
  return summarize(defended);
}

}  // namespace maadv

#endif  // MAADV_METRICS_DEFENSE_HPP
