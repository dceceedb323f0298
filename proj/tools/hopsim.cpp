// hopsim: run frequency-hopping scenarios and summarize their results.
//
//   hopsim run --config configs/table1.cfg --out out/nash --seeds 20 --policy nash
//   hopsim report out/nash out/noregret out/uniform
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hopsim/cli.hpp"
#include "hopsim/config.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kValidation = 2;
constexpr int kRuntime = 3;

// "5" means seeds 1..5; "3,7,11" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  if (text.find(',') == std::string::npos) {
    const auto n = std::stoull(text);
    if (n == 0) throw CLI::ValidationError("--seeds", "seed count must be positive");
    for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw CLI::ValidationError("--seeds", "empty entry in seed list");
    out.push_back(std::stoull(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-hopping FMCW radar interference simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seeds_text = "1", policy;
  auto* run = app.add_subcommand("run", "Run a scenario for one or more seeds");
  run->add_option("--config", config_path, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seeds", seeds_text, "Seed count n (seeds 1..n) or comma-separated list");
  run->add_option("--policy", policy, "Override every radar's policy")
      ->check(CLI::IsMember({"uniform", "nash", "noregret", "fixed"}));

  std::vector<std::string> dirs;
  auto* report = app.add_subcommand("report", "Per-policy medians across run directories");
  report->add_option("dirs", dirs, "Run directories holding manifest.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run) {
      std::vector<std::uint64_t> seeds;
      try {
        seeds = parse_seeds(seeds_text);
      } catch (const std::exception&) {
        std::cerr << "error: --seeds expects a count or a comma-separated list\n";
        return kUsage;
      }
      auto cfg = hopsim::config::parse_config(hopsim::cli::read_file(config_path));
      if (!policy.empty())
        for (auto& r : cfg.radars) r.policy = *hopsim::sim::parse_policy(policy);
      const auto man = hopsim::cli::cmd_run(cfg, config_path, out_dir, seeds);
      std::cout << "wrote " << man.files.size() << " files for " << man.seeds.size() << " seed(s) to " << man.out_dir
                << "\n";
      return kOk;
    }
    if (*report) {
      if (dirs.empty()) {
        std::cerr << "error: report needs at least one run directory\n" << report->help();
        return kUsage;
      }
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      std::cout << hopsim::cli::cmd_report(paths);
      return kOk;
    }
  } catch (const hopsim::ParseError& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return kValidation;
  } catch (const hopsim::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
