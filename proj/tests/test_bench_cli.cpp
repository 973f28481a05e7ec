#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maadv/bench.hpp"

using namespace maadv;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config(const fs::path& out) {
  RunConfig c;
  c.output_dir = out.string();
  c.seed = 5;
  c.dataset.classes = 2;
  c.dataset.samples_per_class = 10;
  c.dataset.test_per_class = 4;
  c.dataset.n_events = 48;
  c.victim.epochs = 30;
  c.campaign.n_samples = 3;
  c.campaign.attack.iterations = 30;
  c.campaign.attack.binary_steps = 2;
  return c;
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MAADV_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class BenchPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "maadv_bench_test";
    fs::remove_all(root_);
    for (const char* name : {"a", "b"}) {
      RunConfig c = tiny_config(root_ / name);
      bench::cmd_gen_data(c);
      bench::cmd_train_victim(c);
      bench::cmd_attack(c);
      bench::cmd_defend(c);
    }
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }
  static fs::path root_;
};

fs::path BenchPipeline::root_;

}  // namespace

TEST(RunConfigJson, RoundTripAndStrictKeys) {
  RunConfig c = tiny_config("x");
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  auto j = to_json(c);
  j["attack"]["iteratons"] = 5;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = to_json(c);
  j["attack"]["k"] = "ten";
  EXPECT_THROW(config_from_json(j), ConfigError);
  RunConfig bad = c;
  bad.jobs = 0;
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST_F(BenchPipeline, DatasetLayout) {
  const auto manifest = bench::read_json(root_ / "a" / "data" / "manifest.json");
  EXPECT_EQ(manifest["samples"].size(), 2u * (10 + 4));
  EXPECT_EQ(manifest["class_histogram"]["0"].get<int>(), 14);
  EXPECT_EQ(manifest["class_histogram"]["1"].get<int>(), 14);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root_ / "a" / "data")) {
    if (e.path().extension() == ".evt1") ++files;
  }
  EXPECT_EQ(files, 28u);
}

TEST_F(BenchPipeline, DeterministicAcrossRuns) {
  for (const char* rel : {"data/train/train_00003.evt1", "victim/params.bin"}) {
    EXPECT_EQ(bench::read_text(root_ / "a" / rel), bench::read_text(root_ / "b" / rel)) << rel;
  }
  // Output paths differ, so compare the CSVs and not the config hashes.
  EXPECT_EQ(bench::read_text(root_ / "a" / "attack" / "full" / "results.csv"),
            bench::read_text(root_ / "b" / "attack" / "full" / "results.csv"));
}

TEST_F(BenchPipeline, VictimMetricsSchema) {
  const auto m = bench::read_json(root_ / "a" / "victim" / "metrics.json");
  EXPECT_TRUE(m.contains("train_accuracy"));
  EXPECT_TRUE(m.contains("val_accuracy"));
}

TEST_F(BenchPipeline, AttackCsvSchemaAndHash) {
  const fs::path dir = root_ / "a" / "attack" / "full";
  std::istringstream csv(bench::read_text(dir / "results.csv"));
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "method,ablation,sr,chamfer,l2,hausdorff,n_samples,seed");
  EXPECT_EQ(count_lines(bench::read_text(dir / "results.csv")), 5u);
  const auto run = bench::read_json(dir / "run.json");
  const auto stored = config_from_json(bench::read_json(dir / "config.resolved.json"));
  EXPECT_EQ(run["config_hash"].get<std::string>(), config_hash(stored));
  const auto sample = bench::read_json(dir / "samples" / "ma-adv" / "sample_00000.json");
  EXPECT_EQ(sample["lambda_trace"].size(), 2u);
}

TEST_F(BenchPipeline, DefenseCsvConsistent) {
  const auto text = bench::read_text(root_ / "a" / "defend" / "defense.csv");
  std::istringstream defense(text);
  std::string line;
  std::getline(defense, line);
  EXPECT_EQ(line, "attack,ablation,defense,sr,n_samples");
  std::map<std::string, std::string> none_sr;
  while (std::getline(defense, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 5u);
    const double sr = std::stod(f[3]);
    EXPECT_GE(sr, 0.0);
    EXPECT_LE(sr, 1.0);
    if (f[2] == "none") none_sr[f[0]] = f[3];
  }
  std::istringstream attack(bench::read_text(root_ / "a" / "attack" / "full" / "results.csv"));
  std::getline(attack, line);
  while (std::getline(attack, line)) {
    const auto method = line.substr(0, line.find(','));
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    EXPECT_DOUBLE_EQ(std::stod(none_sr.at(method)), std::stod(f[2])) << method;
  }
}

TEST_F(BenchPipeline, ReportMergesRuns) {
  const fs::path out = root_ / "report";
  const auto merged = bench::cmd_report({root_ / "a", root_ / "b"}, out);
  const auto text = bench::read_text(merged);
  EXPECT_EQ(text.substr(0, text.find('\n')), "run,method,ablation,sr,chamfer,l2,hausdorff,n_samples,seed");
  EXPECT_EQ(count_lines(text), 1u + 4u + 4u);
  bool found = false;
  for (const auto& e : fs::recursive_directory_iterator(out / "plot")) {
    if (e.path().filename().string().ends_with("_adv.csv")) {
      const auto s = load_events(e.path().string(), EventFormat::Csv);
      EXPECT_EQ(s.size(), 48u);
      found = true;
    }
  }
  EXPECT_TRUE(found);
  EXPECT_THROW(bench::cmd_report({}, out), Error);
}

TEST_F(BenchPipeline, CliExitCodes) {
  const fs::path cfg = root_ / "cli.json";
  RunConfig c = tiny_config(root_ / "a");
  {
    std::ofstream os(cfg);
    os << to_json(c).dump(2);
  }
  EXPECT_EQ(run_cli("--config " + cfg.string() + " defend"), 0);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("--jobs 0 attack"), 1);
  {
    std::ofstream os(root_ / "bad.json");
    os << R"({"attack": {"sigma": 1}})";
  }
  EXPECT_EQ(run_cli("--config " + (root_ / "bad.json").string() + " attack"), 1);
  EXPECT_EQ(run_cli("--out " + (root_ / "missing").string() + " attack"), 2);
}
