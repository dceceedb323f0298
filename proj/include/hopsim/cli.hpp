#pragma once

// Run orchestration and result emission: per-seed CSVs, a manifest with
// checksums, and a cross-seed report.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "hopsim/config.hpp"
#include "hopsim/errors.hpp"
#include "hopsim/sim.hpp"

namespace hopsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kStrategiesHeader = "episode,radar,subband,probability";
inline constexpr const char* kInterferenceHeader = "episode,radar,rate,mean_sinr_db";
inline constexpr const char* kRegretHeader = "episode,radar,cumulative_regret_db";
inline constexpr const char* kProfileHeader = "range_m,magnitude_db";
inline constexpr const char* kJointHeader = "joint_action,mass";

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw std::runtime_error("cannot write " + p.string());
}

struct ArtifactEntry {
  std::string path;  // relative to the output directory
  std::string content;
  std::string sha256;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  double final_interference_rate = 0.0;  // mean over radars and the last 10 episodes
  double final_mean_sinr_db = 0.0;       // mean over radars, last episode
  double max_cce_gap = 0.0;
  std::optional<double> mainlobe_width_m;
  std::optional<double> off_peak_db;
};

struct RunManifest {
  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::string policy;
  std::vector<ArtifactEntry> files;
  std::vector<SeedSummary> summaries;
};

/// Policy label of a scenario: the shared policy, or a '+'-joined list.
inline std::string policy_label(const sim::ScenarioConfig& cfg) {
  std::string out;
  bool same = true;
  for (const auto& r : cfg.radars) same = same && r.policy == cfg.radars.front().policy;
  if (same && !cfg.radars.empty()) return sim::to_string(cfg.radars.front().policy);
  for (const auto& r : cfg.radars) out += (out.empty() ? "" : "+") + sim::to_string(r.policy);
  return out;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct SeedOutput {
  std::vector<std::pair<std::string, std::string>> files;  // name -> bytes
  SeedSummary summary;
};

inline SeedOutput render_seed(const sim::ScenarioConfig& cfg, const sim::RunMetrics& m, const std::string& policy) {
  SeedOutput out;
  std::ostringstream st, in, rg, jd;
  st << kStrategiesHeader << "\n";
  in << kInterferenceHeader << "\n";
  rg << kRegretHeader << "\n";
  for (int e = 0; e < m.episodes(); ++e) {
    for (int i = 0; i < m.radars; ++i) {
      for (int a = 0; a < m.subbands; ++a)
        st << e + 1 << "," << i + 1 << "," << a + 1 << "," << fmt("%.10f", m.strategies[e][i][a]) << "\n";
      in << e + 1 << "," << i + 1 << "," << fmt("%.6f", m.interference_rate[e][i]) << ","
         << fmt("%.4f", m.mean_sinr_db[e][i]) << "\n";
      rg << e + 1 << "," << i + 1 << "," << fmt("%.6f", m.cumulative_regret_db[e][i]) << "\n";
    }
  }
  jd << kJointHeader << "\n";
  const auto& masses = m.empirical_joint.masses();
  for (std::size_t j = 0; j < masses.size(); ++j) {
    const auto f = m.genie_table.decode(j);
    std::string label;
    for (std::size_t i = 0; i < f.size(); ++i) label += (i ? "-" : "") + std::to_string(f[i] + 1);
    jd << label << "," << fmt("%.8f", masses[j]) << "\n";
  }
  out.files = {{"strategies.csv", st.str()}, {"interference.csv", in.str()}, {"regret.csv", rg.str()},
               {"joint_dist.csv", jd.str()}};

  auto& s = out.summary;
  s.seed = cfg.seed;
  for (int i = 0; i < m.radars; ++i) {
    s.final_interference_rate += m.final_interference_rate(i) / m.radars;
    s.final_mean_sinr_db += m.final_mean_sinr_db(i) / m.radars;
  }
  s.max_cce_gap = *std::max_element(m.cce_gap.begin(), m.cce_gap.end());

  if (m.profile) {
    std::ostringstream pr;
    pr << kProfileHeader << "\n";
    for (std::size_t i = 0; i < m.profile->ranges.size(); ++i)
      pr << fmt("%.4f", m.profile->ranges[i]) << "," << fmt("%.4f", m.profile->magnitude_db[i]) << "\n";
    out.files.emplace_back("profile_" + policy + ".csv", pr.str());
    s.mainlobe_width_m = signal::mainlobe_width_3db(*m.profile);
    s.off_peak_db = signal::off_peak_level_db(*m.profile);
  }
  return out;
}

inline json summary_json(const SeedSummary& s) {
  json j{{"seed", s.seed},
         {"final_interference_rate", s.final_interference_rate},
         {"final_mean_sinr_db", s.final_mean_sinr_db},
         {"max_cce_gap", s.max_cce_gap}};
  j["mainlobe_width_m"] = s.mainlobe_width_m ? json(*s.mainlobe_width_m) : json(nullptr);
  j["off_peak_db"] = s.off_peak_db ? json(*s.off_peak_db) : json(nullptr);
  return j;
}

inline SeedSummary summary_from_json(const json& j) {
  SeedSummary s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.final_interference_rate = j.at("final_interference_rate").get<double>();
  s.final_mean_sinr_db = j.at("final_mean_sinr_db").get<double>();
  s.max_cce_gap = j.at("max_cce_gap").get<double>();
  if (!j.at("mainlobe_width_m").is_null()) s.mainlobe_width_m = j.at("mainlobe_width_m").get<double>();
  if (!j.at("off_peak_db").is_null()) s.off_peak_db = j.at("off_peak_db").get<double>();
  return s;
}

}  // namespace detail

/// Worker count: HOPSIM_THREADS if set and positive, else hardware concurrency.
inline unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HOPSIM_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/// Run every seed, write `seed_<n>/` CSVs and `manifest.json` under `out_dir`.
inline RunManifest cmd_run(const sim::ScenarioConfig& base, const std::string& config_path, const fs::path& out_dir,
                           const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw InvalidInput("at least one seed is required");
  base.validate();
  fs::create_directories(out_dir);
  const auto policy = policy_label(base);

  std::vector<detail::SeedOutput> outputs(seeds.size());
  std::vector<std::optional<signal::ChirpFrame>> frames(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr error;
  auto work = [&] {
    for (std::size_t s; (s = next++) < seeds.size();) {
      try {
        auto cfg = base;
        cfg.seed = seeds[s];
        auto m = sim::run_scenario(cfg);
        outputs[s] = detail::render_seed(cfg, m, policy);
        frames[s] = std::move(m.last_frame);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned workers = worker_count(seeds.size());
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  RunManifest man;
  man.config_path = config_path;
  man.out_dir = out_dir.string();
  man.seeds = seeds;
  man.policy = policy;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seeds[s]));
    fs::create_directories(dir);
    for (const auto& [name, bytes] : outputs[s].files) {
      write_file(dir / name, bytes);
      const auto rel = (fs::path("seed_" + std::to_string(seeds[s])) / name).generic_string();
      const auto dot = name.find('.');
      man.files.push_back({rel, "text/csv; " + name.substr(0, dot), sha256_hex(bytes)});
    }
    if (frames[s]) {
      const auto& c = base.radars[static_cast<std::size_t>(base.profile.radar)].chirp;
      const auto path = dir / "frame.hopf";
      signal::write_frame_dump(path, *frames[s], c);
      for (const auto& extra : {std::string("frame.hopf"), std::string("frame.hopf.hops.csv")}) {
        const auto rel = (fs::path("seed_" + std::to_string(seeds[s])) / extra).generic_string();
        man.files.push_back({rel, extra == "frame.hopf" ? "application/x-hopf" : "text/csv; hops",
                             sha256_hex(read_file(dir / extra))});
      }
    }
    man.summaries.push_back(outputs[s].summary);
  }

  json j;
  j["config_path"] = man.config_path;
  j["out_dir"] = man.out_dir;
  j["seeds"] = man.seeds;
  j["policy"] = man.policy;
  j["config"] = config::render_config(base);
  j["files"] = json::array();
  for (const auto& f : man.files) j["files"].push_back({{"path", f.path}, {"content", f.content}, {"sha256", f.sha256}});
  j["summaries"] = json::array();
  for (const auto& s : man.summaries) j["summaries"].push_back(detail::summary_json(s));
  write_file(out_dir / "manifest.json", j.dump(2) + "\n");
  return man;
}

/// Load a manifest and check every listed file against its checksum.
inline RunManifest load_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw std::runtime_error("missing manifest: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt manifest " + path.string() + ": " + e.what());
  }
  RunManifest man;
  try {
    man.config_path = j.at("config_path").get<std::string>();
    man.out_dir = j.at("out_dir").get<std::string>();
    man.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    man.policy = j.at("policy").get<std::string>();
    for (const auto& f : j.at("files"))
      man.files.push_back({f.at("path").get<std::string>(), f.at("content").get<std::string>(),
                           f.at("sha256").get<std::string>()});
    for (const auto& s : j.at("summaries")) man.summaries.push_back(detail::summary_from_json(s));
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt manifest " + path.string() + ": " + e.what());
  }
  for (const auto& f : man.files) {
    const auto p = dir / f.path;
    if (!fs::exists(p)) throw std::runtime_error("manifest lists missing file " + p.string());
    if (sha256_hex(read_file(p)) != f.sha256) throw std::runtime_error("checksum mismatch for " + p.string());
  }
  return man;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Per-policy medians across every seed of every listed run directory.
inline std::string cmd_report(const std::vector<fs::path>& dirs) {
  if (dirs.empty()) throw InvalidInput("report needs at least one run directory");
  std::map<std::string, std::vector<SeedSummary>> by_policy;
  for (const auto& d : dirs) {
    auto man = load_manifest(d);
    auto& bucket = by_policy[man.policy];
    bucket.insert(bucket.end(), man.summaries.begin(), man.summaries.end());
  }
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %6s %14s %14s %12s %14s %12s\n", "policy", "seeds", "interf_rate",
                "mean_sinr_db", "cce_gap", "mainlobe_m", "off_peak_db");
  os << line;
  for (const auto& [policy, runs] : by_policy) {
    std::vector<double> rate, sinr, gap, width, floor;
    for (const auto& s : runs) {
      rate.push_back(s.final_interference_rate);
      sinr.push_back(s.final_mean_sinr_db);
      gap.push_back(s.max_cce_gap);
      if (s.mainlobe_width_m) width.push_back(*s.mainlobe_width_m);
      if (s.off_peak_db) floor.push_back(*s.off_peak_db);
    }
    std::snprintf(line, sizeof line, "%-18s %6zu %14.4f %14.3f %12.4f %14.4f %12.2f\n", policy.c_str(), runs.size(),
                  median(rate), median(sinr), median(gap), median(width), median(floor));
    os << line;
  }
  return os.str();
}

}  // namespace hopsim::cli
