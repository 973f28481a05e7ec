#ifndef MAADV_ATTACK_ENGINE_HPP
#define MAADV_ATTACK_ENGINE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attack_result.hpp"
#include "event_core.hpp"
#include "metrics_defense.hpp"
#include "motion_diffusion.hpp"
#include "neighbor_index.hpp"
#include "victim_net.hpp"

namespace maadv {

// Module switches for the ablation rows. Only the MA-ADV driver reads them.
struct AblationSwitches {
  bool diffusion = true;
  bool spatial = true;
  bool temporal = true;
  bool causal = true;
  bool adaptive_lr = true;
  VelocitySide velocity_side = VelocitySide::Neighbor;

  /// Short label such as "full" or "no-diffusion+no-causal".
  std::string tag() const {
    std::string t;
    auto add = [&](bool on, const char* name) {
      if (on) return;
      if (!t.empty()) t += '+';
      t += name;
    };
    add(diffusion, "no-diffusion");
    add(spatial, "no-spatial");
    add(temporal, "no-temporal");
    add(causal, "no-causal");
    add(adaptive_lr, "no-adaptive-lr");
    if (velocity_side == VelocitySide::Query) {
      if (!t.empty()) t += '+';
      t += "query-velocity";
    }
    return t.empty() ? "full" : t;
  }

  friend bool operator==(const AblationSwitches&, const AblationSwitches&) = default;
};

struct AttackConfig {
  std::size_t iterations = 100;
  std::size_t binary_steps = 20;
  double eta0 = 1e-2;
  double lambda_lo = 10.0;
  double lambda_hi = 80.0;
  std::size_t k = 10;
  double sigma_s = 0.01;
  double sigma_t = 0.1;
  double a = 0.8;
  double b = 1.2;
  std::size_t n_interval = 5;
  double kappa = 0.0;
  double init_sigma = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gamma = 1e-8;
  double epsilon = 0.05;  // FGSM step / IFGSM budget
  std::size_t ifgsm_steps = 10;
  AblationSwitches switches;
  bool record_candidates = false;

  void validate() const {
    if (iterations < 1) throw Error("iterations must be at least 1");
    if (binary_steps < 1) throw Error("binary_steps must be at least 1");
    if (!(eta0 > 0.0)) throw Error("eta0 must be positive");
    if (!(lambda_lo >= 0.0 && lambda_lo < lambda_hi)) throw Error("need 0 <= lambda_lo < lambda_hi");
    if (k < 1) throw Error("k must be at least 1");
    if (!(sigma_s > 0.0 && sigma_t > 0.0)) throw Error("diffusion sigmas must be positive");
    if (!(a > 0.0 && a < 1.0 && b > 1.0)) throw Error("need 0 < a < 1 < b");
    if (n_interval < 1) throw Error("n_interval must be at least 1");
    if (!(kappa >= 0.0)) throw Error("kappa must be non-negative");
    if (!(init_sigma >= 0.0)) throw Error("init_sigma must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw Error("betas must be in [0,1)");
    if (!(gamma > 0.0)) throw Error("gamma must be positive");
    if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
    if (ifgsm_steps < 1) throw Error("ifgsm_steps must be at least 1");
  }
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Losses

inline double chamfer_loss(const EventStream& adv, const EventStream& clean) {
  return chamfer_distance(adv, clean);
}

inline double total_loss(double cls, double dist, double lambda) { return cls + lambda * dist; }

/// Subgradient of the directed Chamfer loss w.r.t. adversarial (x, y, t);
/// each nearest-neighbour assignment is held fixed and zero distances
/// contribute nothing.
inline std::vector<Vec3> chamfer_loss_gradient(const EventStream& adv, const EventStream& clean,
                                               const NearestClean& nn) {
  std::vector<Vec3> g(adv.size(), Vec3{0.0, 0.0, 0.0});
  const double inv_n = 1.0 / static_cast<double>(adv.size());
  for (std::size_t a = 0; a < adv.size(); ++a) {
    const double d = nn.dist[a];
    if (!(d > 0.0)) continue;
    const Vec3 pa = xyz(adv[a]);
    const Vec3 pc = xyz(clean[nn.idx[a]]);
    for (int k = 0; k < 3; ++k) g[a][k] = (pa[k] - pc[k]) / d * inv_n;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer pieces

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gamma = 1e-8;
  std::size_t step = 0;

  static AdamState fresh(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double gamma = 1e-8) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), beta1, beta2, gamma, 0};
  }

  /// Advances the moments and returns the update -eta * m_hat / (sqrt(v_hat) + gamma).
  std::vector<double> advance(std::span<const double> grad, double eta) {
    if (grad.size() != m.size()) throw Error("gradient size does not match Adam state");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    std::vector<double> update(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      update[i] = -eta * (m[i] / c1) / (std::sqrt(v[i] / c2) + gamma);
    }
    return update;
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline std::pair<AdamState, std::vector<double>> adam_step(AdamState state, std::span<const double> grad,
                                                           double eta) {
  auto update = state.advance(grad, eta);
  return {std::move(state), std::move(update)};
}

struct SampleLrState {
  double eta = 1e-2;
  double a = 0.8;
  double b = 1.2;
  std::size_t n_interval = 5;

  friend bool operator==(const SampleLrState&, const SampleLrState&) = default;
};

/// Every n_interval iterations: shrink eta by `a` after a success, grow by `b`
/// after a failure.
inline SampleLrState lr_adjust(SampleLrState lr, bool success, std::size_t iteration) {
  if (iteration < 1) throw Error("iteration index starts at 1");
  if (iteration % lr.n_interval == 0) lr.eta *= success ? lr.a : lr.b;
  return lr;
}

struct BinarySearchState {
  double lambda = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t step_j = 0;
  std::size_t total_steps = 0;

  static BinarySearchState start(double lo, double hi, std::size_t total_steps) {
    if (!(lo < hi)) throw Error("lambda bracket must satisfy lo < hi");
    return {0.5 * (lo + hi), lo, hi, 0, total_steps};
  }

  // Success raises the distance weight (lo <- lambda); failure lowers it.
  void update(bool success) {
    if (success) {
      lo = lambda;
    } else {
      hi = lambda;
    }
    lambda = 0.5 * (lo + hi);
    ++step_j;
  }

  bool done() const { return step_j >= total_steps; }
};

// ---------------------------------------------------------------------------
// Attack loop

/// Per-sample structures computed once on the clean stream.
struct DiffusionContext {
  NeighborIndex index;
  VelocityField velocity;
  DiffusionWeights weights;
  DiffusionMode mode = DiffusionMode::Both;
};

inline DiffusionContext build_diffusion_context(const EventStream& clean, const AttackConfig& cfg) {
  const auto& sw = cfg.switches;
  if (!sw.spatial && !sw.temporal) throw Error("diffusion needs the spatial or the temporal branch");
  DiffusionContext ctx;
  ctx.index = build_neighbor_index(clean, cfg.k, sw.causal);
  ctx.velocity = event_velocity(clean);
  ctx.weights = diffusion_weights(ctx.index, ctx.velocity, cfg.sigma_s, cfg.sigma_t, sw.velocity_side);
  ctx.mode = !sw.spatial ? DiffusionMode::TemporalOnly
             : !sw.temporal ? DiffusionMode::SpatialOnly
                            : DiffusionMode::Both;
  return ctx;
}

/// clean + delta on (x, y, t), clipped to the unit cube; polarity untouched.
inline EventStream apply_perturbation(const EventStream& clean, const Perturbation& pert) {
  if (pert.size() != clean.size()) throw Error("perturbation length does not match stream");
  EventStream out = clean;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& e = out[i];
    e.x = std::clamp(e.x + pert.delta[i][0], 0.0, 1.0);
    e.y = std::clamp(e.y + pert.delta[i][1], 0.0, 1.0);
    e.t = std::clamp(e.t + pert.delta[i][2], 0.0, 1.0);
  }
  return out;
}

struct InnerResult {
  std::optional<EventStream> best_adv;
  bool success = false;
  double chamfer = 0.0;
  std::size_t iterations = 0;
  std::vector<CandidateRecord> candidates;
};

namespace detail {

inline bool misclassified(std::span<const double> logits, int label) {
  return argmax(logits) != static_cast<std::size_t>(label);
}

}  // namespace detail

/// Optimizes one perturbation at a fixed distance weight and keeps the
/// successful iterate with the smallest Chamfer loss.
inline InnerResult attack_inner(const VictimParams& victim, const LabeledSample& sample, double lambda,
                                const AttackConfig& cfg, const DiffusionContext* ctx,
                                std::uint64_t seed, std::size_t binary_step = 0) {
  const EventStream& clean = sample.stream;
  if (!clean.norm.normalized) throw Error("attack expects a normalized stream");
  const std::size_t n = clean.size();
  const auto& sw = cfg.switches;
  if (sw.diffusion && ctx == nullptr) throw Error("diffusion enabled without a diffusion context");
  const auto label = static_cast<std::size_t>(sample.label);

  std::mt19937_64 rng(seed);
  Perturbation pert = Perturbation::gaussian(n, cfg.init_sigma, rng);
  AdamState adam = AdamState::fresh(3 * n, cfg.beta1, cfg.beta2, cfg.gamma);
  SampleLrState lr{cfg.eta0, cfg.a, cfg.b, cfg.n_interval};

  InnerResult out;
  out.chamfer = std::numeric_limits<double>::infinity();
  auto consider = [&](const EventStream& adv, double chamfer, std::size_t iterate) {
    if (cfg.record_candidates) out.candidates.push_back({binary_step, iterate, chamfer});
    if (!out.success || chamfer < out.chamfer) {
      out.success = true;
      out.chamfer = chamfer;
      out.best_adv = adv;
    }
  };

  std::vector<double> grad(3 * n);
  bool last_evaluated = false;
  for (std::size_t i = 1; i <= cfg.iterations; ++i) {
    const EventStream adv = apply_perturbation(clean, pert);
    const auto lg = backward_input(victim, adv, LossKind::Margin, label, cfg.kappa);
    const auto nn = nearest_clean(adv, clean);
    const double dist = chamfer_distance(adv, clean);
    const double loss = total_loss(lg.loss, dist, lambda);
    if (!std::isfinite(loss)) {
      throw Error("non-finite attack loss at iteration " + std::to_string(i) + " (lambda " +
                  std::to_string(lambda) + ")");
    }
    if (detail::misclassified(lg.logits, sample.label)) consider(adv, dist, i - 1);

    const auto dgrad = chamfer_loss_gradient(adv, clean, nn);
    for (std::size_t e = 0; e < n; ++e) {
      const auto& c = clean[e];
      const double raw[3] = {c.x + pert.delta[e][0], c.y + pert.delta[e][1], c.t + pert.delta[e][2]};
      for (int d = 0; d < 3; ++d) {
        const bool inside = raw[d] >= 0.0 && raw[d] <= 1.0;
        grad[3 * e + d] = inside ? lg.grad[e][d] + lambda * dgrad[e][d] : 0.0;
      }
    }
    const auto update = adam.advance(grad, lr.eta);
    for (std::size_t e = 0; e < n; ++e) {
      for (int d = 0; d < 3; ++d) pert.delta[e][d] += update[3 * e + d];
    }
    if (sw.diffusion) pert = diffuse(pert, ctx->index, ctx->weights, ctx->mode);

    last_evaluated = false;
    if (sw.adaptive_lr && i % cfg.n_interval == 0) {
      const EventStream next = apply_perturbation(clean, pert);
      const bool s = predict(victim, next) != label;
      if (s) consider(next, chamfer_distance(next, clean), i);
      lr = lr_adjust(lr, s, i);
      last_evaluated = true;
    }
    out.iterations = i;
  }
  if (!last_evaluated) {
    const EventStream last = apply_perturbation(clean, pert);
    if (predict(victim, last) != label) consider(last, chamfer_distance(last, clean), cfg.iterations);
  }
  if (!out.success) out.chamfer = 0.0;
  return out;
}

namespace detail {

inline AttackResult finish(const VictimParams& victim, const LabeledSample& sample, AttackResult r) {
  r.label = sample.label;
  if (r.best_adv) {
    // Re-verify rather than trust the bookkeeping.
    r.success = predict(victim, *r.best_adv) != static_cast<std::size_t>(sample.label);
    if (r.success) {
      r.metrics = distance_metrics(*r.best_adv, sample.stream);
    } else {
      r.best_adv.reset();
    }
  } else {
    r.success = false;
  }
  return r;
}

}  // namespace detail

/// MA-ADV: bisection on lambda around attack_inner; returns the successful
/// candidate with the smallest Chamfer distance over all lambda steps.
inline AttackResult ma_adv_attack(const VictimParams& victim, const LabeledSample& sample,
                                  const AttackConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::optional<DiffusionContext> ctx;
  if (cfg.switches.diffusion) ctx = build_diffusion_context(sample.stream, cfg);

  AttackResult result;
  double best = std::numeric_limits<double>::infinity();
  auto search = BinarySearchState::start(cfg.lambda_lo, cfg.lambda_hi, cfg.binary_steps);
  while (!search.done()) {
    const std::size_t j = search.step_j;
    auto inner = attack_inner(victim, sample, search.lambda, cfg, ctx ? &*ctx : nullptr,
                              mix_seed(seed, j), j);
    result.iterations_used += inner.iterations;
    result.candidates.insert(result.candidates.end(), inner.candidates.begin(), inner.candidates.end());
    const double lambda = search.lambda;
    if (inner.success && inner.chamfer < best) {
      best = inner.chamfer;
      result.best_adv = std::move(inner.best_adv);
    }
    search.update(inner.success);
    result.lambda_trace.push_back({lambda, search.lo, search.hi, inner.success, inner.chamfer});
  }
  return detail::finish(victim, sample, std::move(result));
}

/// C&W-style baseline: the same driver with diffusion and sample-wise
/// learning-rate scaling disabled.
inline AttackResult cw_attack(const VictimParams& victim, const LabeledSample& sample, AttackConfig cfg,
                              std::uint64_t seed) {
  cfg.switches.diffusion = false;
  cfg.switches.adaptive_lr = false;
  return ma_adv_attack(victim, sample, cfg, seed);
}

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline EventStream sign_step(const EventStream& current, const InputGradient& g, double step) {
  EventStream out = current;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& e = out[i];
    e.x = std::clamp(e.x + step * sign(g[i][0]), 0.0, 1.0);
    e.y = std::clamp(e.y + step * sign(g[i][1]), 0.0, 1.0);
    e.t = std::clamp(e.t + step * sign(g[i][2]), 0.0, 1.0);
  }
  return out;
}

}  // namespace detail

/// Iterative sign-gradient ascent on cross-entropy in steps of
/// epsilon / steps; returns the earliest misclassified iterate.
inline AttackResult ifgsm_attack(const VictimParams& victim, const LabeledSample& sample, double epsilon,
                                 std::size_t steps, std::uint64_t /*seed*/) {
  if (!(epsilon >= 0.0)) throw Error("epsilon must be non-negative");
  if (steps < 1) throw Error("steps must be at least 1");
  const auto label = static_cast<std::size_t>(sample.label);
  const double step = epsilon / static_cast<double>(steps);
  AttackResult result;
  EventStream current = sample.stream;
  for (std::size_t s = 1; s <= steps; ++s) {
    const auto lg = backward_input(victim, current, LossKind::CrossEntropy, label);
    current = detail::sign_step(current, lg.grad, step);
    result.iterations_used = s;
    if (predict(victim, current) != label) {
      result.best_adv = current;
      break;
    }
  }
  return detail::finish(victim, sample, std::move(result));
}

inline AttackResult fgsm_attack(const VictimParams& victim, const LabeledSample& sample, double epsilon,
                                std::uint64_t seed) {
  return ifgsm_attack(victim, sample, epsilon, 1, seed);
}

enum class AttackMethod { Fgsm, Ifgsm, Cw, MaAdv };

inline std::string to_string(AttackMethod m) {
  switch (m) {
    case AttackMethod::Fgsm: return "fgsm";
    case AttackMethod::Ifgsm: return "ifgsm";
    case AttackMethod::Cw: return "cw";
    case AttackMethod::MaAdv: return "ma-adv";
  }
  throw Error("unknown attack method");
}

inline AttackMethod attack_method_from_string(const std::string& name) {
  for (auto m : {AttackMethod::Fgsm, AttackMethod::Ifgsm, AttackMethod::Cw, AttackMethod::MaAdv}) {
    if (to_string(m) == name) return m;
  }
  throw Error("unknown attack method: " + name);
}

inline AttackResult run_attack(AttackMethod method, const VictimParams& victim, const LabeledSample& sample,
                               const AttackConfig& cfg, std::uint64_t seed) {
  switch (method) {
    case AttackMethod::Fgsm: return fgsm_attack(victim, sample, cfg.epsilon, seed);
    case AttackMethod::Ifgsm: return ifgsm_attack(victim, sample, cfg.epsilon, cfg.ifgsm_steps, seed);
    case AttackMethod::Cw: return cw_attack(victim, sample, cfg, seed);
    case AttackMethod::MaAdv: return ma_adv_attack(victim, sample, cfg, seed);
  }
  throw Error("unknown attack method");
}

}  // namespace maadv

#endif  // MAADV_ATTACK_ENGINE_HPP
