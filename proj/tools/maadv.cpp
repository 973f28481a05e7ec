#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maadv/bench.hpp"

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
};

struct AblationFlags {
  bool no_diffusion = false;
  bool no_spatial = false;
  bool no_temporal = false;
  bool no_causal = false;
  bool no_adaptive_lr = false;
};

maadv::RunConfig resolve(const GlobalFlags& g) {
  maadv::RunConfig cfg = g.config.empty() ? maadv::RunConfig{} : maadv::load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  if (g.jobs) cfg.jobs = *g.jobs;
  return cfg;
}

void apply_ablation(maadv::RunConfig& cfg, const AblationFlags& a) {
  auto& sw = cfg.campaign.attack.switches;
  if (a.no_diffusion) sw.diffusion = false;
  if (a.no_spatial) sw.spatial = false;
  if (a.no_temporal) sw.temporal = false;
  if (a.no_causal) sw.causal = false;
  if (a.no_adaptive_lr) sw.adaptive_lr = false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-aware adversarial attacks on event streams"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "JSON run config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the master seed");
  app.add_option("--out", g.out, "Override the output directory");
  app.add_option("--jobs", g.jobs, "Worker threads for attack campaigns")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic labelled dataset");
  auto* train = app.add_subcommand("train-victim", "Train the victim classifier");
  auto* attack = app.add_subcommand("attack", "Run the attack campaign");
  AblationFlags ablation;
  attack->add_flag("--no-diffusion", ablation.no_diffusion, "Disable perturbation diffusion");
  attack->add_flag("--no-spatial", ablation.no_spatial, "Drop the spatial diffusion term");
  attack->add_flag("--no-temporal", ablation.no_temporal, "Drop the temporal diffusion term");
  attack->add_flag("--no-causal", ablation.no_causal, "Use non-causal temporal neighbours");
  attack->add_flag("--no-adaptive-lr", ablation.no_adaptive_lr, "Keep a fixed per-sample step size");
  auto* defend = app.add_subcommand("defend", "Evaluate stored adversarial streams under defenses");
  auto* report = app.add_subcommand("report", "Merge run tables and export plot data");
  std::vector<std::string> runs;
  report->add_option("runs", runs, "Run directories to merge")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  maadv::RunConfig cfg;
  try {
    cfg = resolve(g);
    apply_ablation(cfg, ablation);
    maadv::validate(cfg);
  } catch (const maadv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }

  try {
    namespace bench = maadv::bench;
    if (*gen) {
      bench::cmd_gen_data(cfg);
    } else if (*train) {
      bench::cmd_train_victim(cfg);
    } else if (*attack) {
      std::cout << bench::cmd_attack(cfg).string() << '\n';
    } else if (*defend) {
      bench::cmd_defend(cfg);
    } else if (*report) {
      std::vector<std::filesystem::path> dirs(runs.begin(), runs.end());
      std::cout << bench::cmd_report(dirs, cfg.output_dir).string() << '\n';
    }
  } catch (const maadv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
