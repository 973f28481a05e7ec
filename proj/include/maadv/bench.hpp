#ifndef MAADV_BENCH_HPP
#define MAADV_BENCH_HPP

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "attack_engine.hpp"
#include "event_core.hpp"
#include "json.hpp"
#include "metrics_defense.hpp"
#include "run_config.hpp"
#include "victim_net.hpp"

namespace maadv::bench {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kAttackCsvHeader = "method,ablation,sr,chamfer,l2,hausdorff,n_samples,seed";
inline constexpr const char* kDefenseCsvHeader = "attack,ablation,defense,sr,n_samples";

// ---------------------------------------------------------------------------
// Small file helpers

inline void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw Error("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error("bad JSON in " + path.string() + ": " + e.what());
  }
}

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string zero_pad(std::size_t v, int width = 5) {
  std::string s = std::to_string(v);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

// Writes the resolved config next to a stage's outputs and returns its hash.
inline std::string store_resolved_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");
  return config_hash(cfg);
}

// ---------------------------------------------------------------------------
// Dataset layout: <out>/data/manifest.json plus <out>/data/<split>/<split>_NNNNN.evt1

struct DatasetEntry {
  std::string file;  // relative to the data dir
  int label = 0;
  std::string split;
};

struct Dataset {
  fs::path dir;
  SensorDims dims;
  std::size_t n_events = 0;
  std::size_t classes = 0;
  std::vector<DatasetEntry> entries;

  std::vector<LabeledSample> load_split(const std::string& split) const {
    std::vector<LabeledSample> out;
    for (const auto& e : entries) {
      if (e.split != split) continue;
      EventStream raw = load_events((dir / e.file).string(), EventFormat::Evt1);
      raw.dims = dims;
      out.push_back({normalize(raw), e.label});
    }
    return out;
  }
};

inline fs::path data_dir(const fs::path& out) { return out / "data"; }
inline fs::path victim_dir(const fs::path& out) { return out / "victim"; }
inline fs::path attack_dir(const fs::path& out) { return out / "attack"; }
inline fs::path defend_dir(const fs::path& out) { return out / "defend"; }

inline Dataset load_dataset(const fs::path& out) {
  const fs::path dir = data_dir(out);
  if (!fs::exists(dir / "manifest.json")) throw Error("dataset missing: " + (dir / "manifest.json").string());
  const json m = read_json(dir / "manifest.json");
  Dataset ds;
  ds.dir = dir;
  ds.dims = {m.at("sensor").at("width").get<double>(), m.at("sensor").at("height").get<double>()};
  ds.n_events = m.at("n_events").get<std::size_t>();
  ds.classes = m.at("classes").get<std::size_t>();
  for (const auto& s : m.at("samples")) {
    ds.entries.push_back({s.at("file").get<std::string>(), s.at("label").get<int>(),
                          s.at("split").get<std::string>()});
  }
  return ds;
}

/// Per-class sample generation. Sample i of a split cycles through the
/// classes so every prefix of a split is class-balanced.
inline void cmd_gen_data(const RunConfig& cfg) {
  validate(cfg);
  const fs::path out = cfg.output_dir;
  const fs::path dir = data_dir(out);
  fs::create_directories(dir);
  const auto& d = cfg.dataset;
  const std::size_t n_val = static_cast<std::size_t>(
      std::llround(d.val_fraction * static_cast<double>(d.samples_per_class)));
  const std::size_t n_train = d.samples_per_class - n_val;

  json samples = json::array();
  json histogram = json::object();
  std::size_t global = 0;
  auto emit = [&](const std::string& split, std::size_t per_class) {
    fs::create_directories(dir / split);
    for (std::size_t i = 0; i < per_class * d.classes; ++i, ++global) {
      const auto kind = static_cast<ScenarioKind>(i % d.classes);
      auto sample = generate_random_sample(kind, d.n_events, d.noise_rate, mix_seed(cfg.seed, global));
      const std::string rel = split + "/" + split + "_" + zero_pad(i) + ".evt1";
      save_events(sample.stream, (dir / rel).string(), EventFormat::Evt1);
      samples.push_back({{"file", rel}, {"label", sample.label}, {"split", split},
                         {"scenario", std::string(to_string(kind))}});
      const std::string key = std::to_string(sample.label);
      histogram[key] = histogram.value(key, 0) + 1;
    }
  };
  emit("train", n_train);
  emit("val", n_val);
  emit("test", d.test_per_class);

  const std::string hash = store_resolved_config(cfg, dir);
  const SensorDims dims;
  json manifest = {{"sensor", {{"width", dims.width}, {"height", dims.height}}},
                   {"n_events", d.n_events},
                   {"classes", d.classes},
                   {"class_histogram", histogram},
                   {"config_hash", hash},
                   {"samples", samples}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "gen-data: " << samples.size() << " samples -> " << dir.string() << '\n';
}

inline void cmd_train_victim(const RunConfig& cfg) {
  validate(cfg);
  const fs::path out = cfg.output_dir;
  const Dataset ds = load_dataset(out);
  const auto train_set = ds.load_split("train");
  const auto val_set = ds.load_split("val");
  if (train_set.empty()) throw Error("dataset has no training samples");

  TrainOptions opts;
  opts.epochs = cfg.victim.epochs;
  opts.lr = cfg.victim.lr;
  opts.batch_size = cfg.victim.batch_size;
  opts.seed = mix_seed(cfg.seed, 0x7669637469ULL);
  opts.shape = {4, cfg.victim.h1, cfg.victim.h2, cfg.victim.h3, ds.classes};
  const auto victim = train(train_set, val_set, opts);

  const fs::path dir = victim_dir(out);
  fs::create_directories(dir);
  save_victim(victim, (dir / "params.bin").string(), (dir / "params.json").string());
  const std::string hash = store_resolved_config(cfg, dir);
  json metrics = {{"train_accuracy", victim.train_accuracy},
                  {"val_accuracy", victim.val_accuracy},
                  {"n_train", train_set.size()},
                  {"n_val", val_set.size()},
                  {"config_hash", hash}};
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  std::cout << "train-victim: train_accuracy=" << fmt_num(victim.train_accuracy)
            << " val_accuracy=" << fmt_num(victim.val_accuracy) << '\n';
}

inline TrainedVictim load_trained_victim(const fs::path& out) {
  const fs::path dir = victim_dir(out);
  if (!fs::exists(dir / "params.bin")) throw Error("victim missing: " + (dir / "params.bin").string());
  return load_victim((dir / "params.bin").string(), (dir / "params.json").string());
}

/// The first `n` test samples the victim classifies correctly, in split order.
/// Returns their indices into the test split.
inline std::vector<std::size_t> select_campaign(const VictimParams& victim,
                                                const std::vector<LabeledSample>& test, std::size_t n) {
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < test.size() && picked.size() < n; ++i) {
    if (predict(victim, test[i].stream) == static_cast<std::size_t>(test[i].label)) picked.push_back(i);
  }
  return picked;
}

/// Runs one method over every sample; workers pull indices from a shared
/// counter and results land in sample order.
inline std::vector<AttackResult> run_campaign(AttackMethod method, const VictimParams& victim,
                                              const std::vector<LabeledSample>& samples,
                                              const AttackConfig& cfg, std::uint64_t seed,
                                              std::size_t jobs) {
  std::vector<AttackResult> results(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        results[i] = run_attack(method, victim, samples[i], cfg, sample_seed(seed, i));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, samples.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

inline json result_to_json(const AttackResult& r, std::size_t sample_index, std::size_t test_index,
                           const std::string& adv_file) {
  json trace = json::array();
  for (const auto& s : r.lambda_trace) {
    trace.push_back({{"lambda", s.lambda}, {"lo", s.lo}, {"hi", s.hi}, {"success", s.success},
                     {"chamfer", s.chamfer}});
  }
  return {{"sample_index", sample_index},
          {"test_index", test_index},
          {"label", r.label},
          {"success", r.success},
          {"chamfer", r.metrics.chamfer},
          {"hausdorff", r.metrics.hausdorff},
          {"l2", r.metrics.l2},
          {"iterations_used", r.iterations_used},
          {"lambda_trace", trace},
          {"adv_file", adv_file}};
}

inline std::string method_ablation(AttackMethod m, const AttackConfig& cfg) {
  return m == AttackMethod::MaAdv ? cfg.switches.tag() : "baseline";
}

inline std::string csv_row(const std::string& method, const std::string& ablation, const MetricReport& r,
                           std::uint64_t seed) {
  return method + "," + ablation + "," + fmt_num(r.sr) + "," + fmt_num(r.chamfer) + "," + fmt_num(r.l2) +
         "," + fmt_num(r.hausdorff) + "," + std::to_string(r.n_samples) + "," + std::to_string(seed);
}

/// Writes <out>/attack/<tag>/results.csv, run.json and per-sample records
/// (JSON + normalized evt1 adversarial stream) under samples/<method>/.
inline fs::path cmd_attack(const RunConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path out = cfg.output_dir;
  const Dataset ds = load_dataset(out);
  const auto victim = load_trained_victim(out);
  const auto test = ds.load_split("test");
  const auto picked = select_campaign(victim.params, test, cfg.campaign.n_samples);
  if (picked.empty()) throw Error("no correctly classified test samples to attack");
  if (picked.size() < cfg.campaign.n_samples) {
    std::cerr << "warning: only " << picked.size() << " correctly classified test samples available\n";
  }
  std::vector<LabeledSample> campaign;
  for (auto i : picked) campaign.push_back(test[i]);

  const auto& acfg = cfg.campaign.attack;
  const std::string tag = acfg.switches.tag();
  const fs::path dir = attack_dir(out) / tag;
  fs::create_directories(dir);
  const std::string hash = store_resolved_config(cfg, dir);

  std::string csv = std::string(kAttackCsvHeader) + "\n";
  json rows = json::array();
  for (auto method : cfg.campaign.methods) {
    const auto results = run_campaign(method, victim.params, campaign, acfg, cfg.seed, cfg.jobs);
    const auto report = summarize(results);
    const std::string name = to_string(method);
    const std::string ablation = method_ablation(method, acfg);
    csv += csv_row(name, ablation, report, cfg.seed) + "\n";
    rows.push_back({{"method", name}, {"ablation", ablation}, {"sr", report.sr}, {"chamfer", report.chamfer},
                    {"l2", report.l2}, {"hausdorff", report.hausdorff}, {"n_samples", report.n_samples}});

    const fs::path sdir = dir / "samples" / name;
    fs::create_directories(sdir);
    for (std::size_t i = 0; i < results.size(); ++i) {
      std::string adv_file;
      if (results[i].best_adv) {
        adv_file = "sample_" + zero_pad(i) + "_adv.evt1";
        save_events(*results[i].best_adv, (sdir / adv_file).string(), EventFormat::Evt1);
      }
      write_text(sdir / ("sample_" + zero_pad(i) + ".json"),
                 result_to_json(results[i], i, picked[i], adv_file).dump(2) + "\n");
    }
    std::cout << "attack: " << name << " [" << ablation << "] sr=" << fmt_num(report.sr)
              << " chamfer=" << fmt_num(report.chamfer) << '\n';
  }
  write_text(dir / "results.csv", csv);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json run = {{"ablation", tag}, {"config_hash", hash}, {"wall_clock_s", wall}, {"rows", rows}};
  write_text(dir / "run.json", run.dump(2) + "\n");
  return dir / "results.csv";
}

// Rebuilds the attack results of one method directory, with adversarial
// streams restored to the clean sample's normalization state.
inline std::vector<AttackResult> load_method_results(const fs::path& sdir,
                                                     const std::vector<LabeledSample>& test) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(sdir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<AttackResult> results;
  for (const auto& f : files) {
    const json j = read_json(f);
    AttackResult r;
    r.label = j.at("label").get<int>();
    r.success = j.at("success").get<bool>();
    r.metrics = {j.at("chamfer").get<double>(), j.at("hausdorff").get<double>(), j.at("l2").get<double>()};
    const auto adv_file = j.at("adv_file").get<std::string>();
    if (!adv_file.empty()) {
      const auto test_index = j.at("test_index").get<std::size_t>();
      if (test_index >= test.size()) throw Error("test index out of range in " + f.string());
      // Perturbed timestamps may be out of order; every consumer here is
      // order-insensitive, so the re-sort on load is expected and silent.
      EventStream adv = load_events((sdir / adv_file).string(), EventFormat::Evt1, [](const std::string&) {});
      adv.dims = test[test_index].stream.dims;
      adv.norm = test[test_index].stream.norm;
      r.best_adv = std::move(adv);
    }
    results.push_back(std::move(r));
  }
  return results;
}

/// Re-evaluates stored adversarial streams under every configured defense.
/// Writes <out>/defend/defense.csv including a "none" row per attack.
inline fs::path cmd_defend(const RunConfig& cfg) {
  validate(cfg);
  const fs::path out = cfg.output_dir;
  const Dataset ds = load_dataset(out);
  const auto victim = load_trained_victim(out);
  const auto test = ds.load_split("test");
  const fs::path adir = attack_dir(out);
  if (!fs::exists(adir)) throw Error("attack results missing: " + adir.string());

  std::vector<fs::path> tags;
  for (const auto& entry : fs::directory_iterator(adir)) {
    if (entry.is_directory()) tags.push_back(entry.path());
  }
  std::sort(tags.begin(), tags.end());
  std::string csv = std::string(kDefenseCsvHeader) + "\n";
  for (const auto& tag_dir : tags) {
    const fs::path samples = tag_dir / "samples";
    if (!fs::exists(samples)) continue;
    std::vector<fs::path> methods;
    for (const auto& entry : fs::directory_iterator(samples)) {
      if (entry.is_directory()) methods.push_back(entry.path());
    }
    std::sort(methods.begin(), methods.end());
    for (const auto& mdir : methods) {
      const std::string method = mdir.filename().string();
      const std::string ablation =
          method == "ma-adv" ? tag_dir.filename().string() : std::string("baseline");
      auto results = load_method_results(mdir, test);
      if (results.empty()) continue;
      // Undefended SR, re-checked by a forward pass on the stored streams.
      for (auto& r : results) {
        r.success = r.best_adv && predict(victim.params, *r.best_adv) != static_cast<std::size_t>(r.label);
      }
      csv += method + "," + ablation + ",none," + fmt_num(success_rate(results)) + "," +
             std::to_string(results.size()) + "\n";
      for (const auto& d : cfg.defenses) {
        DefenseConfig dc = d;
        dc.seed = mix_seed(cfg.seed, 0x646566ULL);
        const auto rep = defended_eval(victim.params, results, dc, ds.n_events);
        csv += method + "," + ablation + "," + to_string(d.kind) + "," + fmt_num(rep.sr) + "," +
               std::to_string(results.size()) + "\n";
      }
    }
  }
  const fs::path dir = defend_dir(out);
  const std::string hash = store_resolved_config(cfg, dir);
  write_text(dir / "defense.csv", csv);
  write_text(dir / "run.json", json{{"config_hash", hash}}.dump(2) + "\n");
  std::cout << csv;
  return dir / "defense.csv";
}

/// Merges attack tables from several run directories (prefixing a run
/// column) and exports clean/adversarial event dumps in raw units for plotting.
inline fs::path cmd_report(const std::vector<fs::path>& runs, const fs::path& out,
                           std::size_t max_plot_samples = 4) {
  if (runs.empty()) throw Error("report needs at least one run directory");
  std::string merged = std::string("run,") + kAttackCsvHeader + "\n";
  for (const auto& run : runs) {
    const fs::path adir = attack_dir(run);
    if (!fs::exists(adir)) throw Error("no attack results under " + run.string());
    const std::string run_name = run.filename().empty() ? run.parent_path().filename().string()
                                                        : run.filename().string();
    std::vector<fs::path> tags;
    for (const auto& entry : fs::directory_iterator(adir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "results.csv")) tags.push_back(entry.path());
    }
    std::sort(tags.begin(), tags.end());
    const Dataset ds = load_dataset(run);
    const auto test = ds.load_split("test");
    for (const auto& tag_dir : tags) {
      std::istringstream csv(read_text(tag_dir / "results.csv"));
      std::string line;
      std::getline(csv, line);
      if (line != kAttackCsvHeader) throw Error("unexpected results.csv header in " + tag_dir.string());
      while (std::getline(csv, line)) {
        if (!line.empty()) merged += run_name + "," + line + "\n";
      }
      const fs::path samples = tag_dir / "samples";
      if (!fs::exists(samples)) continue;
      for (const auto& mentry : fs::directory_iterator(samples)) {
        if (!mentry.is_directory()) continue;
        const auto results = load_method_results(mentry.path(), test);
        const fs::path pdir = out / "plot" / run_name / tag_dir.filename() / mentry.path().filename();
        std::size_t exported = 0;
        for (std::size_t i = 0; i < results.size() && exported < max_plot_samples; ++i) {
          if (!results[i].best_adv) continue;
          fs::create_directories(pdir);
          const json j = read_json(mentry.path() / ("sample_" + zero_pad(i) + ".json"));
          const auto& clean = test.at(j.at("test_index").get<std::size_t>()).stream;
          save_events(denormalize(clean), (pdir / ("sample_" + zero_pad(i) + "_clean.csv")).string(),
                      EventFormat::Csv);
          save_events(denormalize(*results[i].best_adv),
                      (pdir / ("sample_" + zero_pad(i) + "_adv.csv")).string(), EventFormat::Csv);
          ++exported;
        }
      }
    }
  }
  write_text(out / "merged.csv", merged);
  return out / "merged.csv";
}

}  // namespace maadv::bench

#endif  // MAADV_BENCH_HPP
