#ifndef MAADV_RUN_CONFIG_HPP
#define MAADV_RUN_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attack_engine.hpp"
#include "json.hpp"
#include "metrics_defense.hpp"

namespace maadv {

struct ConfigError : Error {
  using Error::Error;
};

struct DatasetSpec {
  std::size_t classes = 4;
  std::size_t samples_per_class = 100;
  double val_fraction = 0.2;
  std::size_t test_per_class = 50;
  std::size_t n_events = 256;
  double noise_rate = 0.01;
};

struct VictimSpec {
  std::size_t epochs = 80;
  double lr = 3e-3;
  std::size_t batch_size = 8;
  std::size_t h1 = 32;
  std::size_t h2 = 64;
  std::size_t h3 = 32;
};

struct CampaignSpec {
  std::vector<AttackMethod> methods{AttackMethod::Fgsm, AttackMethod::Ifgsm, AttackMethod::Cw,
                                    AttackMethod::MaAdv};
  std::size_t n_samples = 100;
  AttackConfig attack;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "run";
  std::size_t jobs = 1;
  DatasetSpec dataset;
  VictimSpec victim;
  CampaignSpec campaign;
  std::vector<DefenseConfig> defenses{DefenseConfig{DefenseKind::Sor, 5, 1.1, 0.5, 0},
                                      DefenseConfig{DefenseKind::Srs, 5, 1.1, 0.5, 0}};
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!keys.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& a = c.campaign.attack;
  const auto& sw = a.switches;
  json methods = json::array();
  for (auto m : c.campaign.methods) methods.push_back(to_string(m));
  json defenses = json::array();
  for (const auto& d : c.defenses) {
    defenses.push_back({{"kind", to_string(d.kind)}, {"sor_k", d.sor_k}, {"sor_alpha", d.sor_alpha},
                        {"srs_ratio", d.srs_ratio}});
  }
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"jobs", c.jobs},
      {"dataset",
       {{"classes", c.dataset.classes},
        {"samples_per_class", c.dataset.samples_per_class},
        {"val_fraction", c.dataset.val_fraction},
        {"test_per_class", c.dataset.test_per_class},
        {"n_events", c.dataset.n_events},
        {"noise_rate", c.dataset.noise_rate}}},
      {"victim",
       {{"epochs", c.victim.epochs},
        {"lr", c.victim.lr},
        {"batch_size", c.victim.batch_size},
        {"h1", c.victim.h1},
        {"h2", c.victim.h2},
        {"h3", c.victim.h3}}},
      {"attack",
       {{"methods", methods},
        {"n_samples", c.campaign.n_samples},
        {"iterations", a.iterations},
        {"binary_steps", a.binary_steps},
        {"eta0", a.eta0},
        {"lambda_lo", a.lambda_lo},
        {"lambda_hi", a.lambda_hi},
        {"k", a.k},
        {"sigma_s", a.sigma_s},
        {"sigma_t", a.sigma_t},
        {"a", a.a},
        {"b", a.b},
        {"n_interval", a.n_interval},
        {"kappa", a.kappa},
        {"init_sigma", a.init_sigma},
        {"beta1", a.beta1},
        {"beta2", a.beta2},
        {"gamma", a.gamma},
        {"epsilon", a.epsilon},
        {"ifgsm_steps", a.ifgsm_steps},
        {"switches",
         {{"diffusion", sw.diffusion},
          {"spatial", sw.spatial},
          {"temporal", sw.temporal},
          {"causal", sw.causal},
          {"adaptive_lr", sw.adaptive_lr},
          {"velocity_side", sw.velocity_side == VelocitySide::Neighbor ? "neighbor" : "query"}}}}},
      {"defenses", defenses},
  };
}

/// Parses a config document over the defaults. Unknown keys are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_key;
  RunConfig c;
  detail::reject_unknown(j, "config",
                         {"seed", "output_dir", "jobs", "dataset", "victim", "attack", "defenses"});
  read_key(j, "seed", c.seed, "config");
  read_key(j, "output_dir", c.output_dir, "config");
  read_key(j, "jobs", c.jobs, "config");

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    detail::reject_unknown(d, "dataset",
                           {"classes", "samples_per_class", "val_fraction", "test_per_class", "n_events",
                            "noise_rate"});
    read_key(d, "classes", c.dataset.classes, "dataset");
    read_key(d, "samples_per_class", c.dataset.samples_per_class, "dataset");
    read_key(d, "val_fraction", c.dataset.val_fraction, "dataset");
    read_key(d, "test_per_class", c.dataset.test_per_class, "dataset");
    read_key(d, "n_events", c.dataset.n_events, "dataset");
    read_key(d, "noise_rate", c.dataset.noise_rate, "dataset");
  }
  if (j.contains("victim")) {
    const auto& v = j["victim"];
    detail::reject_unknown(v, "victim", {"epochs", "lr", "batch_size", "h1", "h2", "h3"});
    read_key(v, "epochs", c.victim.epochs, "victim");
    read_key(v, "lr", c.victim.lr, "victim");
    read_key(v, "batch_size", c.victim.batch_size, "victim");
    read_key(v, "h1", c.victim.h1, "victim");
    read_key(v, "h2", c.victim.h2, "victim");
    read_key(v, "h3", c.victim.h3, "victim");
  }
  if (j.contains("attack")) {
    const auto& a = j["attack"];
    detail::reject_unknown(a, "attack",
                           {"methods", "n_samples", "iterations", "binary_steps", "eta0", "lambda_lo",
                            "lambda_hi", "k", "sigma_s", "sigma_t", "a", "b", "n_interval", "kappa",
                            "init_sigma", "beta1", "beta2", "gamma", "epsilon", "ifgsm_steps", "switches"});
    auto& cfg = c.campaign.attack;
    if (a.contains("methods")) {
      std::vector<std::string> names;
      read_key(a, "methods", names, "attack");
      c.campaign.methods.clear();
      try {
        for (const auto& n : names) c.campaign.methods.push_back(attack_method_from_string(n));
      } catch (const Error& e) {
        throw ConfigError(std::string("attack.methods: ") + e.what());
      }
    }
    read_key(a, "n_samples", c.campaign.n_samples, "attack");
    read_key(a, "iterations", cfg.iterations, "attack");
    read_key(a, "binary_steps", cfg.binary_steps, "attack");
    read_key(a, "eta0", cfg.eta0, "attack");
    read_key(a, "lambda_lo", cfg.lambda_lo, "attack");
    read_key(a, "lambda_hi", cfg.lambda_hi, "attack");
    read_key(a, "k", cfg.k, "attack");
    read_key(a, "sigma_s", cfg.sigma_s, "attack");
    read_key(a, "sigma_t", cfg.sigma_t, "attack");
    read_key(a, "a", cfg.a, "attack");
    read_key(a, "b", cfg.b, "attack");
    read_key(a, "n_interval", cfg.n_interval, "attack");
    read_key(a, "kappa", cfg.kappa, "attack");
    read_key(a, "init_sigma", cfg.init_sigma, "attack");
    read_key(a, "beta1", cfg.beta1, "attack");
    read_key(a, "beta2", cfg.beta2, "attack");
    read_key(a, "gamma", cfg.gamma, "attack");
    read_key(a, "epsilon", cfg.epsilon, "attack");
    read_key(a, "ifgsm_steps", cfg.ifgsm_steps, "attack");
    if (a.contains("switches")) {
      const auto& s = a["switches"];
      detail::reject_unknown(s, "attack.switches",
                             {"diffusion", "spatial", "temporal", "causal", "adaptive_lr", "velocity_side"});
      auto& sw = cfg.switches;
      read_key(s, "diffusion", sw.diffusion, "attack.switches");
      read_key(s, "spatial", sw.spatial, "attack.switches");
      read_key(s, "temporal", sw.temporal, "attack.switches");
      read_key(s, "causal", sw.causal, "attack.switches");
      read_key(s, "adaptive_lr", sw.adaptive_lr, "attack.switches");
      std::string side = "neighbor";
      read_key(s, "velocity_side", side, "attack.switches");
      if (side != "neighbor" && side != "query") {
        throw ConfigError("attack.switches.velocity_side: expected neighbor or query");
      }
      sw.velocity_side = side == "neighbor" ? VelocitySide::Neighbor : VelocitySide::Query;
    }
  }
  if (j.contains("defenses")) {
    if (!j["defenses"].is_array()) throw ConfigError("defenses: expected an array");
    c.defenses.clear();
    for (const auto& d : j["defenses"]) {
      detail::reject_unknown(d, "defenses[]", {"kind", "sor_k", "sor_alpha", "srs_ratio"});
      DefenseConfig dc;
      std::string kind;
      read_key(d, "kind", kind, "defenses[]");
      if (kind == "sor") {
        dc.kind = DefenseKind::Sor;
      } else if (kind == "srs") {
        dc.kind = DefenseKind::Srs;
      } else {
        throw ConfigError("defenses[].kind: expected sor or srs");
      }
      read_key(d, "sor_k", dc.sor_k, "defenses[]");
      read_key(d, "sor_alpha", dc.sor_alpha, "defenses[]");
      read_key(d, "srs_ratio", dc.srs_ratio, "defenses[]");
      c.defenses.push_back(dc);
    }
  }
  return c;
}

inline void validate(const RunConfig& c) {
  if (c.dataset.classes < 2 || c.dataset.classes > static_cast<std::size_t>(kNumScenarioKinds)) {
    throw ConfigError("dataset.classes must be in [2, " + std::to_string(kNumScenarioKinds) + "]");
  }
  if (c.dataset.n_events < 16) throw ConfigError("dataset.n_events must be at least 16");
  if (!(c.dataset.val_fraction >= 0.0 && c.dataset.val_fraction < 1.0)) {
    throw ConfigError("dataset.val_fraction must be in [0,1)");
  }
  if (!(c.dataset.noise_rate >= 0.0 && c.dataset.noise_rate < 1.0)) {
    throw ConfigError("dataset.noise_rate must be in [0,1)");
  }
  if (c.victim.epochs < 1 || !(c.victim.lr > 0.0) || c.victim.batch_size < 1) {
    throw ConfigError("victim: epochs, lr and batch_size must be positive");
  }
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  try {
    c.campaign.attack.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("attack: ") + e.what());
  }
  for (const auto& d : c.defenses) {
    if (d.sor_k < 1 || !(d.sor_alpha > 0.0) || !(d.srs_ratio > 0.0 && d.srs_ratio <= 1.0)) {
      throw ConfigError("defenses: need sor_k >= 1, sor_alpha > 0, srs_ratio in (0,1]");
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return config_from_json(j);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

/// Content hash of the resolved config (canonical JSON, sorted keys).
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

}  // namespace maadv

#endif  // MAADV_RUN_CONFIG_HPP
