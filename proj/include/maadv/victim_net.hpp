#ifndef MAADV_VICTIM_NET_HPP
#define MAADV_VICTIM_NET_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "event_core.hpp"
#include "json.hpp"

namespace maadv {

// PointNet-lite: shared per-event MLP (4 -> h1 -> h2, tanh), channel-wise max
// pool, head MLP (h2 -> h3 tanh -> classes, linear).
struct VictimShape {
  std::size_t in = 4;
  std::size_t h1 = 32;
  std::size_t h2 = 64;
  std::size_t h3 = 32;
  std::size_t classes = 4;

  std::size_t param_count() const {
    return h1 * in + h1 + h2 * h1 + h2 + h3 * h2 + h3 + classes * h3 + classes;
  }

  friend bool operator==(const VictimShape&, const VictimShape&) = default;
};

class VictimParams {
 public:
  VictimParams() = default;
  explicit VictimParams(VictimShape shape) : shape_(shape), data_(shape.param_count(), 0.0) {}

  const VictimShape& shape() const { return shape_; }
  std::size_t num_classes() const { return shape_.classes; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  // Row-major [out][in] weight blocks followed by their biases.
  std::span<const double> w1() const { return block(0, shape_.h1 * shape_.in); }
  std::span<const double> b1() const { return block(off_b1(), shape_.h1); }
  std::span<const double> w2() const { return block(off_w2(), shape_.h2 * shape_.h1); }
  std::span<const double> b2() const { return block(off_b2(), shape_.h2); }
  std::span<const double> w3() const { return block(off_w3(), shape_.h3 * shape_.h2); }
  std::span<const double> b3() const { return block(off_b3(), shape_.h3); }
  std::span<const double> w4() const { return block(off_w4(), shape_.classes * shape_.h3); }
  std::span<const double> b4() const { return block(off_b4(), shape_.classes); }

  std::size_t off_b1() const { return shape_.h1 * shape_.in; }
  std::size_t off_w2() const { return off_b1() + shape_.h1; }
  std::size_t off_b2() const { return off_w2() + shape_.h2 * shape_.h1; }
  std::size_t off_w3() const { return off_b2() + shape_.h2; }
  std::size_t off_b3() const { return off_w3() + shape_.h3 * shape_.h2; }
  std::size_t off_w4() const { return off_b3() + shape_.h3; }
  std::size_t off_b4() const { return off_w4() + shape_.classes * shape_.h3; }

  static VictimParams xavier(VictimShape shape, std::uint64_t seed) {
    VictimParams p(shape);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (std::size_t i = 0; i < fan_out * fan_in; ++i) p.data_[offset + i] = dist(rng);
    };
    fill(0, shape.h1, shape.in);
    fill(p.off_w2(), shape.h2, shape.h1);
    fill(p.off_w3(), shape.h3, shape.h2);
    fill(p.off_w4(), shape.classes, shape.h3);
    return p;
  }

  friend bool operator==(const VictimParams&, const VictimParams&) = default;

 private:
  std::span<const double> block(std::size_t offset, std::size_t len) const {
    return {data_.data() + offset, len};
  }

  VictimShape shape_;
  std::vector<double> data_;
};

using Logits = std::vector<double>;
using InputGradient = std::vector<std::array<double, 4>>;

enum class LossKind { CrossEntropy, Margin };

inline std::size_t argmax(std::span<const double> z) {
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

/// max(z[y] - max_{j != y} z[j] + kappa, 0)
inline double margin_logit_loss(std::span<const double> logits, std::size_t label, double kappa) {
  if (logits.size() < 2) throw Error("margin loss needs at least two classes");
  if (label >= logits.size()) throw Error("label out of range");
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != label) other = std::max(other, logits[j]);
  }
  return std::max(logits[label] - other + kappa, 0.0);
}

inline double cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw Error("label out of range");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - zmax);
  return std::log(sum) + zmax - logits[label];
}

namespace detail {

struct ForwardCache {
  std::size_t n = 0;
  std::vector<double> h1;  // n x h1
  std::vector<double> h2;  // n x h2
  std::vector<double> pooled;
  std::vector<std::size_t> arg;
  std::vector<double> h3;
  Logits logits;
};

inline void check_finite(const VictimParams& params, const EventStream& stream) {
  for (double v : params.data()) {
    if (std::isnan(v)) throw Error("NaN in victim parameters");
  }
  for (const auto& e : stream.events) {
    if (std::isnan(e.x) || std::isnan(e.y) || std::isnan(e.t) || std::isnan(e.p)) {
      throw Error("NaN in input events");
    }
  }
}

inline void forward_cached(const VictimParams& params, const EventStream& stream, ForwardCache& c) {
  check_finite(params, stream);
  if (stream.empty()) throw Error("empty stream");
  const auto& s = params.shape();
  const std::size_t n = stream.size();
  c.n = n;
  c.h1.assign(n * s.h1, 0.0);
  c.h2.assign(n * s.h2, 0.0);

  const auto w1 = params.w1();
  const auto b1 = params.b1();
  const auto w2 = params.w2();
  const auto b2 = params.b2();
  // Transposed layer-2 weights so the inner loop runs over contiguous outputs.
  std::vector<double> w2t(s.h1 * s.h2);
  for (std::size_t o = 0; o < s.h2; ++o) {
    for (std::size_t i = 0; i < s.h1; ++i) w2t[i * s.h2 + o] = w2[o * s.h1 + i];
  }

  std::vector<double> acc(s.h2);
  for (std::size_t e = 0; e < n; ++e) {
    const auto& ev = stream[e];
    const double in[4] = {ev.x, ev.y, ev.t, ev.p};
    double* a1 = c.h1.data() + e * s.h1;
    for (std::size_t o = 0; o < s.h1; ++o) {
      double z = b1[o];
      for (std::size_t i = 0; i < s.in; ++i) z += w1[o * s.in + i] * in[i];
      a1[o] = std::tanh(z);
    }
    std::copy(b2.begin(), b2.end(), acc.begin());
    for (std::size_t i = 0; i < s.h1; ++i) {
      const double hi = a1[i];
      const double* wrow = w2t.data() + i * s.h2;
      for (std::size_t o = 0; o < s.h2; ++o) acc[o] += wrow[o] * hi;
    }
    double* a2 = c.h2.data() + e * s.h2;
    for (std::size_t o = 0; o < s.h2; ++o) a2[o] = std::tanh(acc[o]);
  }

  c.pooled.assign(s.h2, 0.0);
  c.arg.assign(s.h2, 0);
  for (std::size_t ch = 0; ch < s.h2; ++ch) {
    double best = c.h2[ch];
    std::size_t who = 0;
    for (std::size_t e = 1; e < n; ++e) {
      const double v = c.h2[e * s.h2 + ch];
      if (v > best) {
        best = v;
        who = e;
      }
    }
    c.pooled[ch] = best;
    c.arg[ch] = who;
  }

  const auto w3 = params.w3();
  const auto b3 = params.b3();
  c.h3.assign(s.h3, 0.0);
  for (std::size_t o = 0; o < s.h3; ++o) {
    double z = b3[o];
    for (std::size_t i = 0; i < s.h2; ++i) z += w3[o * s.h2 + i] * c.pooled[i];
    c.h3[o] = std::tanh(z);
  }
  const auto w4 = params.w4();
  const auto b4 = params.b4();
  c.logits.assign(s.classes, 0.0);
  for (std::size_t o = 0; o < s.classes; ++o) {
    double z = b4[o];
    for (std::size_t i = 0; i < s.h3; ++i) z += w4[o * s.h3 + i] * c.h3[i];
    c.logits[o] = z;
  }
}

// Reverse pass from dL/dlogits. Either output may be null.
inline void backward_cached(const VictimParams& params, const EventStream& stream,
                            const ForwardCache& c, std::span<const double> dlogits,
                            InputGradient* dinput, std::span<double> dparams) {
  const auto& s = params.shape();
  const bool want_params = !dparams.empty();
  const std::size_t off_b1 = params.off_b1(), off_w2 = params.off_w2(), off_b2 = params.off_b2();
  const std::size_t off_w3 = params.off_w3(), off_b3 = params.off_b3();
  const std::size_t off_w4 = params.off_w4(), off_b4 = params.off_b4();

  const auto w4 = params.w4();
  std::vector<double> dh3(s.h3, 0.0);
  for (std::size_t o = 0; o < s.classes; ++o) {
    const double g = dlogits[o];
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < s.h3; ++i) {
      dh3[i] += w4[o * s.h3 + i] * g;
      if (want_params) dparams[off_w4 + o * s.h3 + i] += g * c.h3[i];
    }
    if (want_params) dparams[off_b4 + o] += g;
  }

  const auto w3 = params.w3();
  std::vector<double> dpool(s.h2, 0.0);
  for (std::size_t o = 0; o < s.h3; ++o) {
    const double g = dh3[o] * (1.0 - c.h3[o] * c.h3[o]);
    if (g == 0.0) continue;
    for (std::size_t i = 0; i < s.h2; ++i) {
      dpool[i] += w3[o * s.h2 + i] * g;
      if (want_params) dparams[off_w3 + o * s.h2 + i] += g * c.pooled[i];
    }
    if (want_params) dparams[off_b3 + o] += g;
  }

  // Max pool routes each channel's gradient to its argmax event only.
  std::vector<std::size_t> touched;
  std::vector<double> dpre2(c.n * s.h2, 0.0);
  std::vector<char> is_touched(c.n, 0);
  for (std::size_t ch = 0; ch < s.h2; ++ch) {
    if (dpool[ch] == 0.0) continue;
    const std::size_t e = c.arg[ch];
    const double a = c.h2[e * s.h2 + ch];
    dpre2[e * s.h2 + ch] += dpool[ch] * (1.0 - a * a);
    if (!is_touched[e]) {
      is_touched[e] = 1;
      touched.push_back(e);
    }
  }
  std::sort(touched.begin(), touched.end());

  if (dinput) dinput->assign(c.n, {0.0, 0.0, 0.0, 0.0});
  const auto w1 = params.w1();
  const auto w2 = params.w2();
  std::vector<double> dpre1(s.h1);
  for (std::size_t e : touched) {
    const double* g2 = dpre2.data() + e * s.h2;
    const double* a1 = c.h1.data() + e * s.h1;
    std::fill(dpre1.begin(), dpre1.end(), 0.0);
    for (std::size_t o = 0; o < s.h2; ++o) {
      const double g = g2[o];
      if (g == 0.0) continue;
      for (std::size_t i = 0; i < s.h1; ++i) {
        dpre1[i] += w2[o * s.h1 + i] * g;
        if (want_params) dparams[off_w2 + o * s.h1 + i] += g * a1[i];
      }
      if (want_params) dparams[off_b2 + o] += g;
    }
    const auto& ev = stream[e];
    const double in[4] = {ev.x, ev.y, ev.t, ev.p};
    std::array<double, 4> dx{0.0, 0.0, 0.0, 0.0};
    for (std::size_t o = 0; o < s.h1; ++o) {
      const double g = dpre1[o] * (1.0 - a1[o] * a1[o]);
      for (std::size_t i = 0; i < s.in; ++i) {
        dx[i] += w1[o * s.in + i] * g;
        if (want_params) dparams[o * s.in + i] += g * in[i];
      }
      if (want_params) dparams[off_b1 + o] += g;
    }
    if (dinput) (*dinput)[e] = dx;
  }
}

inline std::vector<double> loss_logit_gradient(std::span<const double> logits, LossKind kind,
                                               std::size_t label, double kappa, double& loss) {
  std::vector<double> g(logits.size(), 0.0);
  if (kind == LossKind::CrossEntropy) {
    loss = cross_entropy_loss(logits, label);
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    for (std::size_t j = 0; j < logits.size(); ++j) g[j] = std::exp(logits[j] - zmax) / sum;
    g[label] -= 1.0;
  } else {
    loss = margin_logit_loss(logits, label, kappa);
    if (loss > 0.0) {
      std::size_t best = label == 0 ? 1 : 0;
      for (std::size_t j = 0; j < logits.size(); ++j) {
        if (j != label && logits[j] > logits[best]) best = j;
      }
      g[label] = 1.0;
      g[best] = -1.0;
    }
  }
  return g;
}

}  // namespace detail

inline Logits forward(const VictimParams& params, const EventStream& stream) {
  detail::ForwardCache cache;
  detail::forward_cached(params, stream, cache);
  return cache.logits;
}

inline std::size_t predict(const VictimParams& params, const EventStream& stream) {
  return argmax(forward(params, stream));
}

struct LossGradient {
  double loss = 0.0;
  InputGradient grad;
  Logits logits;
};

/// Scalar loss and its exact gradient w.r.t. every input coordinate
/// (x, y, t, p) of every event.
inline LossGradient backward_input(const VictimParams& params, const EventStream& stream,
                                   LossKind kind, std::size_t label, double kappa = 0.0) {
  if (label >= params.num_classes()) throw Error("label out of range");
  detail::ForwardCache cache;
  detail::forward_cached(params, stream, cache);
  LossGradient out;
  const auto dlogits = detail::loss_logit_gradient(cache.logits, kind, label, kappa, out.loss);
  detail::backward_cached(params, stream, cache, dlogits, &out.grad, {});
  out.logits = std::move(cache.logits);
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t epochs = 80;
  double lr = 3e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  bool cosine_decay = true;
  VictimShape shape{};
};

struct TrainedVictim {
  VictimParams params;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  TrainOptions options;
};

inline double accuracy(const VictimParams& params, std::span<const LabeledSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    if (predict(params, s.stream) == static_cast<std::size_t>(s.label)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

/// Mini-batch Adam on cross-entropy. Samples must already be normalized.
inline TrainedVictim train(std::span<const LabeledSample> train_set,
                           std::span<const LabeledSample> val_set, TrainOptions opts) {
  if (train_set.empty()) throw Error("empty training set");
  int max_label = 0;
  for (const auto& s : train_set) {
    if (s.label < 0) throw Error("negative label");
    max_label = std::max(max_label, s.label);
  }
  if (opts.shape.classes < 2) throw Error("need at least two classes");
  if (static_cast<std::size_t>(max_label) >= opts.shape.classes) throw Error("label exceeds class count");
  if (opts.batch_size == 0) opts.batch_size = 1;

  std::mt19937_64 rng(opts.seed);
  VictimParams params = VictimParams::xavier(opts.shape, rng());
  const std::size_t np = params.data().size();
  std::vector<double> m(np, 0.0), v(np, 0.0), grad(np, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::ForwardCache cache;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr =
        opts.cosine_decay
            ? 0.5 * opts.lr *
                  (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(opts.epochs)))
            : opts.lr;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& sample = train_set[order[b]];
        detail::forward_cached(params, sample.stream, cache);
        double loss = 0.0;
        const auto dlogits = detail::loss_logit_gradient(
            cache.logits, LossKind::CrossEntropy, static_cast<std::size_t>(sample.label), 0.0, loss);
        detail::backward_cached(params, sample.stream, cache, dlogits, nullptr, grad);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      auto data = params.data();
      for (std::size_t i = 0; i < np; ++i) {
        const double g = grad[i] * scale;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }
  TrainedVictim out{std::move(params), 0.0, 0.0, opts};
  out.train_accuracy = accuracy(out.params, train_set);
  out.val_accuracy = accuracy(out.params, val_set);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: flat little-endian f64 blob plus a JSON sidecar.

inline nlohmann::json shape_to_json(const VictimShape& s) {
  return {{"in", s.in}, {"h1", s.h1}, {"h2", s.h2}, {"h3", s.h3}, {"classes", s.classes}};
}

inline VictimShape shape_from_json(const nlohmann::json& j) {
  VictimShape s;
  s.in = j.at("in").get<std::size_t>();
  s.h1 = j.at("h1").get<std::size_t>();
  s.h2 = j.at("h2").get<std::size_t>();
  s.h3 = j.at("h3").get<std::size_t>();
  s.classes = j.at("classes").get<std::size_t>();
  if (s.in != 4) throw Error("victim input width must be 4");
  return s;
}

inline void save_victim(const TrainedVictim& victim, const std::string& bin_path,
                        const std::string& json_path) {
  {
    std::ofstream os(bin_path, std::ios::binary);
    if (!os) throw Error("cannot open for writing: " + bin_path);
    for (double d : victim.params.data()) detail::put_f64_le(os, d);
    if (!os) throw Error("write failed: " + bin_path);
  }
  const auto& o = victim.options;
  nlohmann::json j = {
      {"shape", shape_to_json(victim.params.shape())},
      {"param_count", victim.params.data().size()},
      {"num_classes", victim.params.num_classes()},
      {"train_accuracy", victim.train_accuracy},
      {"val_accuracy", victim.val_accuracy},
      {"training", {{"epochs", o.epochs}, {"lr", o.lr}, {"batch_size", o.batch_size}, {"seed", o.seed}, {"cosine_decay", o.cosine_decay}}},
  };
  std::ofstream js(json_path);
  if (!js) throw Error("cannot open for writing: " + json_path);
  js << j.dump(2) << '\n';
}

inline TrainedVictim load_victim(const std::string& bin_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw Error("cannot open: " + json_path);
  nlohmann::json j;
  try {
    js >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad victim sidecar: ") + e.what());
  }
  TrainedVictim out;
  out.params = VictimParams(shape_from_json(j.at("shape")));
  out.train_accuracy = j.value("train_accuracy", 0.0);
  out.val_accuracy = j.value("val_accuracy", 0.0);
  if (j.contains("training")) {
    const auto& t = j["training"];
    out.options.epochs = t.value("epochs", out.options.epochs);
    out.options.lr = t.value("lr", out.options.lr);
    out.options.batch_size = t.value("batch_size", out.options.batch_size);
    out.options.seed = t.value("seed", out.options.seed);
    out.options.cosine_decay = t.value("cosine_decay", out.options.cosine_decay);
  }
  out.options.shape = out.params.shape();
  std::ifstream is(bin_path, std::ios::binary);
  if (!is) throw Error("cannot open: " + bin_path);
  for (double& d : out.params.data()) d = detail::get_f64_le(is);
  if (is.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes in " + bin_path);
  return out;
}

}  // namespace maadv

#endif  // MAADV_VICTIM_NET_HPP
