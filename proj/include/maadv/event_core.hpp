#ifndef MAADV_EVENT_CORE_HPP
#define MAADV_EVENT_CORE_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace maadv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Event {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  double p = 1.0;

  friend bool operator==(const Event&, const Event&) = default;
};

using Vec3 = std::array<double, 3>;

inline Vec3 xyz(const Event& e) { return {e.x, e.y, e.t}; }

inline double distance3(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dt = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dt * dt);
}

inline double distance3(const Event& a, const Event& b) { return distance3(xyz(a), xyz(b)); }

struct SensorDims {
  double width = 128.0;
  double height = 128.0;

  friend bool operator==(const SensorDims&, const SensorDims&) = default;
};

// Affine map raw -> unit cube: x/width, y/height, (t - t_offset)/t_scale.
struct NormState {
  bool normalized = false;
  double x_scale = 1.0;
  double y_scale = 1.0;
  double t_offset = 0.0;
  double t_scale = 1.0;

  friend bool operator==(const NormState&, const NormState&) = default;
};

struct EventStream {
  std::vector<Event> events;
  SensorDims dims;
  NormState norm;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  const Event& operator[](std::size_t i) const { return events[i]; }
  Event& operator[](std::size_t i) { return events[i]; }

  bool sorted_by_t() const {
    return std::is_sorted(events.begin(), events.end(),
                          [](const Event& a, const Event& b) { return a.t < b.t; });
  }

  void sort_by_t() {
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
  }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

struct LabeledSample {
  EventStream stream;
  int label = 0;
};

inline EventStream normalize(const EventStream& stream) {
  if (stream.norm.normalized) throw Error("stream is already normalized");
  if (stream.empty()) throw Error("empty stream");
  if (!(stream.dims.width > 0.0) || !(stream.dims.height > 0.0)) throw Error("invalid sensor dims");
  const auto [lo, hi] = std::minmax_element(
      stream.events.begin(), stream.events.end(),
      [](const Event& a, const Event& b) { return a.t < b.t; });
  const double t_min = lo->t;
  const double t_max = hi->t;
  if (!(t_max > t_min)) throw Error("zero temporal extent");

  EventStream out = stream;
  out.norm = {true, stream.dims.width, stream.dims.height, t_min, t_max - t_min};
  for (auto& e : out.events) {
    e.x /= out.norm.x_scale;
    e.y /= out.norm.y_scale;
    e.t = (e.t - out.norm.t_offset) / out.norm.t_scale;
  }
  out.sort_by_t();
  return out;
}

inline EventStream denormalize(const EventStream& stream) {
  if (!stream.norm.normalized) throw Error("stream has no normalization state");
  EventStream out = stream;
  for (auto& e : out.events) {
    e.x *= stream.norm.x_scale;
    e.y *= stream.norm.y_scale;
    e.t = e.t * stream.norm.t_scale + stream.norm.t_offset;
  }
  out.norm = NormState{};
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenarios

enum class ScenarioKind : int {
  TranslatingBar = 0,
  RotatingDot = 1,
  ExpandingRing = 2,
  StaticFlicker = 3,
};

inline constexpr int kNumScenarioKinds = 4;

inline std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::TranslatingBar: return "translating-bar";
    case ScenarioKind::RotatingDot: return "rotating-dot";
    case ScenarioKind::ExpandingRing: return "expanding-ring";
    case ScenarioKind::StaticFlicker: return "static-flicker";
  }
  throw Error("unknown scenario kind");
}

inline ScenarioKind scenario_from_string(std::string_view name) {
  for (int k = 0; k < kNumScenarioKinds; ++k) {
    if (to_string(static_cast<ScenarioKind>(k)) == name) return static_cast<ScenarioKind>(k);
  }
  throw Error("unknown scenario kind: " + std::string(name));
}

// Raw units: pixels and microseconds. Unused fields are ignored by the kind
// that does not need them.
struct SyntheticScenario {
  ScenarioKind kind = ScenarioKind::TranslatingBar;
  SensorDims dims{128.0, 128.0};
  double duration_us = 100000.0;
  double center_x = 64.0;
  double center_y = 64.0;
  double speed = 0.6;         // px per ms (bar)
  double angle = 0.0;         // rad; bar motion direction / dot start phase
  double length = 40.0;       // px; bar length / flicker patch extent
  double radius = 30.0;       // px; dot orbit radius / ring start radius
  double angular_speed = 0.04;  // rad per ms (dot)
  double radius_rate = 0.3;   // px per ms (ring)
  double jitter = 0.8;        // px
  double noise_rate = 0.05;
};

inline std::size_t noise_event_count(double noise_rate, std::size_t n_events) {
  return static_cast<std::size_t>(std::llround(noise_rate * static_cast<double>(n_events)));
}

inline LabeledSample generate_synthetic(const SyntheticScenario& sc, std::size_t n_events,
                                        std::uint64_t seed) {
  if (n_events < 16) throw Error("need at least 16 events");
  if (!(sc.noise_rate >= 0.0 && sc.noise_rate < 1.0)) throw Error("noise_rate must be in [0,1)");
  const int kind_index = static_cast<int>(sc.kind);
  if (kind_index < 0 || kind_index >= kNumScenarioKinds) throw Error("unknown scenario kind");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto polarity = [&] { return unit(rng) < 0.5 ? -1.0 : 1.0; };

  const std::size_t n_noise = noise_event_count(sc.noise_rate, n_events);
  const std::size_t n_signal = n_events - n_noise;
  const double duration_ms = sc.duration_us / 1000.0;

  std::vector<double> times(n_signal);
  for (auto& t : times) t = unit(rng) * sc.duration_us;
  std::sort(times.begin(), times.end());

  // Flicker patch: a fixed set of pixel sites that fire repeatedly.
  std::vector<std::array<double, 2>> sites;
  if (sc.kind == ScenarioKind::StaticFlicker) {
    for (int i = 0; i < 12; ++i) {
      sites.push_back({sc.center_x + (unit(rng) - 0.5) * sc.length,
                       sc.center_y + (unit(rng) - 0.5) * sc.length});
    }
  }

  EventStream stream;
  stream.dims = sc.dims;
  stream.events.reserve(n_events);
  const double dir_x = std::cos(sc.angle);
  const double dir_y = std::sin(sc.angle);
  for (double t_us : times) {
    const double t_ms = t_us / 1000.0;
    Event e;
    e.t = t_us;
    switch (sc.kind) {
      case ScenarioKind::TranslatingBar: {
        // Bar perpendicular to the motion direction, centred on a moving point.
        const double travel = sc.speed * (t_ms - 0.5 * duration_ms);
        const double along = (unit(rng) - 0.5) * sc.length;
        e.x = sc.center_x + travel * dir_x - along * dir_y + sc.jitter * gauss(rng);
        e.y = sc.center_y + travel * dir_y + along * dir_x + sc.jitter * gauss(rng);
        e.p = unit(rng) < 0.8 ? 1.0 : -1.0;
        break;
      }
      case ScenarioKind::RotatingDot: {
        // Jitter is radial only so the angular position stays exact.
        const double phase = sc.angle + sc.angular_speed * t_ms;
        const double r = sc.radius + sc.jitter * gauss(rng);
        e.x = sc.center_x + r * std::cos(phase);
        e.y = sc.center_y + r * std::sin(phase);
        e.p = polarity();
        break;
      }
      case ScenarioKind::ExpandingRing: {
        const double theta = unit(rng) * 2.0 * std::numbers::pi;
        const double r = sc.radius + sc.radius_rate * t_ms + sc.jitter * gauss(rng);
        e.x = sc.center_x + r * std::cos(theta);
        e.y = sc.center_y + r * std::sin(theta);
        e.p = 1.0;
        break;
      }
      case ScenarioKind::StaticFlicker: {
        const auto& site = sites[static_cast<std::size_t>(unit(rng) * sites.size()) % sites.size()];
        e.x = site[0] + 0.3 * sc.jitter * gauss(rng);
        e.y = site[1] + 0.3 * sc.jitter * gauss(rng);
        e.p = polarity();
        break;
      }
    }
    e.x = std::clamp(e.x, 0.0, sc.dims.width - 1.0);
    e.y = std::clamp(e.y, 0.0, sc.dims.height - 1.0);
    stream.events.push_back(e);
  }
  for (std::size_t i = 0; i < n_noise; ++i) {
    Event e;
    e.x = unit(rng) * (sc.dims.width - 1.0);
    e.y = unit(rng) * (sc.dims.height - 1.0);
    e.t = unit(rng) * sc.duration_us;
    e.p = polarity();
    stream.events.push_back(e);
  }
  stream.sort_by_t();
  return {std::move(stream), kind_index};
}

// Draws per-sample motion parameters for a class, then generates the stream.
inline LabeledSample generate_random_sample(ScenarioKind kind, std::size_t n_events,
                                            double noise_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticScenario sc;
  sc.kind = kind;
  sc.noise_rate = noise_rate;
  sc.center_x = 60.0 + 8.0 * unit(rng);
  sc.center_y = 60.0 + 8.0 * unit(rng);
  sc.angle = kind == ScenarioKind::TranslatingBar ? (unit(rng) - 0.5) * std::numbers::pi / 6.0
                                                : 2.0 * std::numbers::pi * unit(rng);
  sc.speed = 0.5 + 0.2 * unit(rng);
  sc.length = 30.0 + 10.0 * unit(rng);
  sc.angular_speed = (unit(rng) < 0.5 ? -1.0 : 1.0) * (0.035 + 0.01 * unit(rng));
  sc.radius = kind == ScenarioKind::ExpandingRing ? 4.0 + 4.0 * unit(rng) : 24.0 + 8.0 * unit(rng);
  sc.radius_rate = 0.25 + 0.1 * unit(rng);
  return generate_synthetic(sc, n_events, rng());
}

inline EventStream resample_fixed(const EventStream& stream, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("resample size must be positive");
  if (stream.empty()) throw Error("empty stream");
  std::mt19937_64 rng(seed);
  EventStream out;
  out.dims = stream.dims;
  out.norm = stream.norm;
  out.events.reserve(n);
  const std::size_t count = stream.size();
  if (count >= n) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, count - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    for (auto i : idx) out.events.push_back(stream.events[i]);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    for (std::size_t i = 0; i < n; ++i) out.events.push_back(stream.events[pick(rng)]);
  }
  out.sort_by_t();
  return out;
}

// ---------------------------------------------------------------------------
// File I/O

enum class EventFormat { Csv, Evt1 };

inline EventFormat format_from_path(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return EventFormat::Csv;
  return EventFormat::Evt1;
}

using WarningSink = std::function<void(const std::string&)>;

inline void default_warning(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  os.write(buf, 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
  unsigned char buf[8];
  if (!is.read(reinterpret_cast<char*>(buf), 8)) throw Error("truncated evt1 file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void put_f64_le(std::ostream& os, double d) { put_u64_le(os, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64_le(std::istream& is) { return std::bit_cast<double>(get_u64_le(is)); }

inline double remap_polarity(double p, std::size_t line, const WarningSink& warn) {
  if (p == 1.0 || p == -1.0) return p;
  if (p == 0.0) {
    warn("line " + std::to_string(line) + ": polarity 0 remapped to -1");
    return -1.0;
  }
  throw Error("line " + std::to_string(line) + ": polarity outside {-1,0,1}");
}

inline void ensure_sorted(EventStream& stream, const WarningSink& warn) {
  if (!stream.sorted_by_t()) {
    warn("timestamps not monotone; events re-sorted by t");
    stream.sort_by_t();
  }
}

}  // namespace detail

inline void write_events(std::ostream& os, const EventStream& stream, EventFormat format) {
  if (format == EventFormat::Evt1) {
    os.write("EVT1", 4);
    detail::put_u64_le(os, stream.size());
    for (const auto& e : stream.events) {
      detail::put_f64_le(os, e.x);
      detail::put_f64_le(os, e.y);
      detail::put_f64_le(os, e.t);
      detail::put_f64_le(os, e.p);
    }
  } else {
    os << "x,y,t,p\n" << std::setprecision(17);
    for (const auto& e : stream.events) {
      os << e.x << ',' << e.y << ',' << e.t << ',' << e.p << '\n';
    }
  }
}

inline EventStream read_events(std::istream& is, EventFormat format,
                               const WarningSink& warn = default_warning) {
  EventStream stream;
  if (format == EventFormat::Evt1) {
    char magic[4];
    if (!is.read(magic, 4) || std::string_view(magic, 4) != "EVT1") throw Error("bad evt1 magic");
    const std::uint64_t count = detail::get_u64_le(is);
    if (count > (std::uint64_t{1} << 32)) throw Error("implausible evt1 event count");
    stream.events.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      auto& e = stream.events[i];
      e.x = detail::get_f64_le(is);
      e.y = detail::get_f64_le(is);
      e.t = detail::get_f64_le(is);
      e.p = detail::remap_polarity(detail::get_f64_le(is), i, warn);
    }
  } else {
    std::string line;
    if (!std::getline(is, line)) throw Error("missing csv header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "x,y,t,p") throw Error("malformed csv header: expected x,y,t,p");
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::array<double, 4> v{};
      std::size_t pos = 0;
      for (int f = 0; f < 4; ++f) {
        const auto comma = line.find(',', pos);
        const bool last = f == 3;
        if (last != (comma == std::string::npos)) {
          throw Error("line " + std::to_string(line_no) + ": expected 4 fields");
        }
        const std::string field = line.substr(pos, last ? std::string::npos : comma - pos);
        try {
          std::size_t used = 0;
          v[f] = std::stod(field, &used);
          if (used != field.size()) throw std::invalid_argument(field);
        } catch (const std::exception&) {
          throw Error("line " + std::to_string(line_no) + ": bad number '" + field + "'");
        }
        pos = comma + 1;
      }
      stream.events.push_back({v[0], v[1], v[2], detail::remap_polarity(v[3], line_no, warn)});
    }
  }
  detail::ensure_sorted(stream, warn);
  return stream;
}

inline void save_events(const EventStream& stream, const std::string& path, EventFormat format) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  write_events(os, stream, format);
  if (!os) throw Error("write failed: " + path);
}

inline EventStream load_events(const std::string& path, EventFormat format,
                               const WarningSink& warn = default_warning) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  return read_events(is, format, warn);
}

}  // namespace maadv

#endif  // MAADV_EVENT_CORE_HPP
