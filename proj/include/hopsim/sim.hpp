#pragma once

// Scenario orchestration: binds hopping agents to the signal channel on a common
// frame clock and records strategies, interference, regret and range profiles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hopsim/errors.hpp"
#include "hopsim/game.hpp"
#include "hopsim/hopping.hpp"
#include "hopsim/signal.hpp"

namespace hopsim::sim {

enum class Policy { uniform, nash, noregret, fixed };

inline std::string to_string(Policy p) {
  switch (p) {
    case Policy::uniform: return "uniform";
    case Policy::nash: return "nash";
    case Policy::noregret: return "noregret";
    case Policy::fixed: return "fixed";
  }
  return "?";
}

inline std::optional<Policy> parse_policy(const std::string& s) {
  for (auto p : {Policy::uniform, Policy::nash, Policy::noregret, Policy::fixed})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

struct RadarConfig {
  std::string name;
  signal::ChirpParams chirp;
  Policy policy = Policy::uniform;
  hopping::NoRegretParams noregret;
  hopping::NashParams nash;
  int fixed_subband = 1;  // 1-based, used by Policy::fixed
  std::vector<signal::Target> targets;

  friend bool operator==(const RadarConfig&, const RadarConfig&) = default;
};

/// Interference from `source` into `victim` (0-based radar indices) when subbands collide.
struct LinkConfig {
  int victim = 0;
  int source = 1;
  double inr_db = 30.0;

  friend bool operator==(const LinkConfig&, const LinkConfig&) = default;
};

struct ProfileConfig {
  bool enabled = true;
  int radar = 0;
  int points_per_bin = 0;  // 0 selects 2A
  int bin_lo = 0;
  int bin_hi = -1;  // -1 selects N_s - 1

  friend bool operator==(const ProfileConfig&, const ProfileConfig&) = default;
};

struct ScenarioConfig {
  std::vector<RadarConfig> radars;
  std::vector<LinkConfig> links;
  int frames = 50;
  int episodes_per_frame = 1;
  std::uint64_t seed = 1;
  bool genie = false;
  signal::Averaging averaging = signal::Averaging::linear;
  double detection_factor = 16.0;
  double noise_power = 1.0;
  ProfileConfig profile;
  bool keep_frame = false;  // retain the profiled radar's last frame

  int total_episodes() const { return frames * episodes_per_frame; }
  int subbands() const { return radars.empty() ? 0 : radars.front().chirp.A; }

  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (radars.empty()) out.push_back("radars: at least one radar is required");
    if (frames < 1) out.push_back("run.frames must be >= 1");
    if (episodes_per_frame < 1) out.push_back("run.episodes_per_frame must be >= 1");
    if (!(noise_power > 0.0)) out.push_back("run.noise_power must be positive");
    if (!(detection_factor > 1.0)) out.push_back("run.detection_factor must exceed 1");

    for (std::size_t i = 0; i < radars.size(); ++i) {
      const auto& r = radars[i];
      const std::string tag = "radar[" + std::to_string(i + 1) + "]";
      for (const auto& p : r.chirp.problems()) out.push_back(tag + ": " + p);
      if (episodes_per_frame >= 1 && r.chirp.K % episodes_per_frame != 0)
        out.push_back(tag + ".K = " + std::to_string(r.chirp.K) + " is not divisible by " +
                      std::to_string(episodes_per_frame) + " episodes");
      const auto& f = radars.front().chirp;
      if (r.chirp.f_c != f.f_c || r.chirp.B_a != f.B_a || r.chirp.A != f.A)
        out.push_back(tag + ": f_c, B_a and A must match radar[1] (shared action set)");
      if (std::abs(r.chirp.frame_duration() - f.frame_duration()) > 1e-9 * f.frame_duration())
        out.push_back(tag + ": frame duration K*T_pri must match radar[1]");
      if (r.policy == Policy::fixed && (r.fixed_subband < 1 || r.fixed_subband > r.chirp.A))
        out.push_back(tag + ".fixed_subband outside 1..A");
      if (r.policy == Policy::noregret) {
        if (r.chirp.A < 2) out.push_back(tag + ": noregret needs A >= 2");
        if (!(r.noregret.c_eta > 0.0) || !(r.noregret.c_gamma > 0.0)) out.push_back(tag + ": c_eta and c_gamma must be positive");
        if (r.noregret.kappa < 0.0 || r.noregret.kappa * r.chirp.A >= 1.0) out.push_back(tag + ".kappa must lie in [0, 1/A)");
        if (!(r.noregret.clip_low < r.noregret.clip_high)) out.push_back(tag + ": clip_low must be below clip_high");
      }
      if (r.policy == Policy::nash && r.nash.explore_episodes < 0) out.push_back(tag + ".explore_episodes must be >= 0");
      for (std::size_t t = 0; t < r.targets.size(); ++t) {
        const auto& tg = r.targets[t];
        const std::string tt = tag + ".target[" + std::to_string(t + 1) + "]";
        if (!(tg.r > 0.0)) out.push_back(tt + ".range must be positive");
        if (!std::isfinite(tg.snr_db)) out.push_back(tt + ".snr_db must be finite");
        if (!std::isfinite(tg.rdot)) out.push_back(tt + ".velocity must be finite");
        if (tg.r > 0.0 && r.chirp.problems().empty()) {
          const double c = signal::kSpeedOfLight;
          const double end = tg.r + (r.chirp.K - 1) * tg.rdot * r.chirp.T_pri;
          if (2.0 * std::max(tg.r, end) / c >= r.chirp.T_a || 2.0 * std::min(tg.r, end) / c <= 0.0)
            out.push_back(tt + ": round-trip delay leaves (0, T_a) within the frame");
          if (signal::coarse_range_frequency(r.chirp, tg.r) >= r.chirp.f_s)
            out.push_back(tt + ": beat frequency exceeds f_s");
        }
      }
    }
    for (std::size_t l = 0; l < links.size(); ++l) {
      const auto& k = links[l];
      const std::string tag = "link[" + std::to_string(l + 1) + "]";
      const int n = static_cast<int>(radars.size());
      if (k.victim < 0 || k.victim >= n || k.source < 0 || k.source >= n) out.push_back(tag + ": radar index out of range");
      else if (k.victim == k.source) out.push_back(tag + ": victim and source must differ");
      if (!std::isfinite(k.inr_db)) out.push_back(tag + ".inr_db must be finite");
    }
    if (profile.enabled && (profile.radar < 0 || profile.radar >= static_cast<int>(radars.size())))
      out.push_back("run.profile_radar out of range");
    return out;
  }

  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ValidationError(std::move(p));
  }

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// ---------------------------------------------------------------------------
// Collision model

struct Overlap {
  int source = 0;
  int chirp = 0;
  double fraction = 0.0;  // share of the victim's active time

  friend bool operator==(const Overlap&, const Overlap&) = default;
};

/// [radar][chirp] -> overlapping chirps of other radars on the same subband.
using CollisionTable = std::vector<std::vector<std::vector<Overlap>>>;

/// Chirp k of radar i occupies [k T_pri, k T_pri + T_a) from a common zero start.
inline CollisionTable collision_table(const std::vector<signal::ChirpParams>& params,
                                      const std::vector<std::vector<int>>& actions) {
  if (params.size() != actions.size()) throw InvalidInput("one action list per radar is required");
  const auto n = params.size();
  CollisionTable out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].resize(actions[i].size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pi = params[i];
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& pj = params[j];
      const int len_j = static_cast<int>(actions[j].size());
      for (int k = 0; k < static_cast<int>(actions[i].size()); ++k) {
        const double s = k * pi.T_pri;
        const double e = s + pi.T_a;
        const int m_lo = std::max(0, static_cast<int>(std::floor((s - pj.T_a) / pj.T_pri)));
        const int m_hi = std::min(len_j - 1, static_cast<int>(std::floor(e / pj.T_pri)));
        for (int m = m_lo; m <= m_hi; ++m) {
          if (actions[j][m] != actions[i][k]) continue;
          const double ms = m * pj.T_pri;
          const double len = std::min(e, ms + pj.T_a) - std::max(s, ms);
          const double frac = len / pi.T_a;
          if (frac > 1e-12) out[i][k].push_back({static_cast<int>(j), m, std::min(frac, 1.0)});
        }
      }
    }
  }
  return out;
}

namespace detail {

inline std::optional<double> link_inr(const ScenarioConfig& cfg, int victim, int source) {
  std::optional<double> inr;
  for (const auto& l : cfg.links)
    if (l.victim == victim && l.source == source) inr = inr.value_or(0.0) + signal::from_db(l.inr_db);
  return inr;
}

inline double signal_power(const RadarConfig& r) {
  double s = 0.0;
  for (const auto& t : r.targets) s += signal::from_db(t.snr_db);
  return s;
}

// Mean summed overlap fraction a victim chirp sees from `source` when both sit on
// one subband for a whole frame.
inline double mean_overlap(const ScenarioConfig& cfg, int victim, int source) {
  std::vector<signal::ChirpParams> params{cfg.radars[victim].chirp, cfg.radars[source].chirp};
  std::vector<std::vector<int>> actions{std::vector<int>(params[0].K, 0), std::vector<int>(params[1].K, 0)};
  const auto table = collision_table(params, actions);
  double total = 0.0;
  for (const auto& chirp : table[0])
    for (const auto& o : chirp) total += o.fraction;
  return total / params[0].K;
}

}  // namespace detail

/// Evaluation-side utilities: 10 log10 of the theoretical SINR when an opponent
/// with a link into player i shares its subband, else 10 log10 of the SNR.
inline game::UtilityTable genie_utility_table(const ScenarioConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(cfg.radars.size());
  const int a = cfg.subbands();
  std::vector<std::vector<double>> interference(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j)
        if (auto inr = detail::link_inr(cfg, i, j)) interference[i][j] = *inr * detail::mean_overlap(cfg, i, j);

  return game::UtilityTable::from_function(n, a, [&](int i, const game::JointAction& f) {
    double ip = 0.0;
    for (int j = 0; j < n; ++j)
      if (j != i && f[j] == f[i]) ip += interference[i][j] * cfg.noise_power;
    const double s = detail::signal_power(cfg.radars[i]) * cfg.noise_power;
    return signal::to_db(std::max(signal::theoretical_sinr(s, ip, cfg.noise_power), 1e-6));
  });
}

// ---------------------------------------------------------------------------
// Metrics

struct RunMetrics {
  int radars = 0;
  int subbands = 0;
  // [episode][radar]
  std::vector<std::vector<game::MixedStrategy>> strategies;  // in force during the episode
  std::vector<std::vector<double>> interference_rate;
  std::vector<std::vector<double>> mean_sinr_db;
  std::vector<std::vector<double>> cumulative_regret_db;
  std::vector<std::vector<std::vector<int>>> actions;  // [episode][radar][chirp], subband offsets
  std::vector<game::MixedStrategy> final_strategies;   // after the last update

  // Joint actions on the union clock: one sample at every chirp start of any
  // radar, each radar contributing its most recently started chirp.
  std::vector<game::JointAction> joint_samples;
  std::vector<int> samples_per_episode;
  game::UtilityTable genie_table;
  game::JointDistribution empirical_joint;
  game::JointDistribution last_episode_joint;
  std::vector<double> cce_gap;
  std::vector<double> external_regret;

  std::optional<signal::FineRangeProfile> profile;
  std::optional<signal::ChirpFrame> last_frame;

  int episodes() const { return static_cast<int>(strategies.size()); }

  /// Mean interference rate of `radar` over the final `window` episodes.
  double final_interference_rate(int radar, int window = 10) const {
    return tail_mean(interference_rate, radar, window);
  }
  double final_mean_sinr_db(int radar, int window = 1) const { return tail_mean(mean_sinr_db, radar, window); }

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;

 private:
  static double tail_mean(const std::vector<std::vector<double>>& series, int radar, int window) {
    const int n = static_cast<int>(series.size());
    const int from = std::max(0, n - window);
    double s = 0.0;
    for (int e = from; e < n; ++e) s += series[e].at(radar);
    return n > from ? s / (n - from) : 0.0;
  }
};

namespace detail {

struct Agent {
  Policy policy = Policy::uniform;
  game::MixedStrategy fixed;
  hopping::NoRegretState noregret;
  hopping::NashHopperState nash;

  const game::MixedStrategy& current() const {
    switch (policy) {
      case Policy::noregret: return noregret.current;
      case Policy::nash: return nash.current();
      default: return fixed;
    }
  }
};

inline std::mt19937_64 stream(std::uint64_t seed, int radar, int purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(radar), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

// For each union-clock instant within one episode, the local chirp index of
// every radar.
inline std::vector<std::vector<int>> union_clock(const ScenarioConfig& cfg) {
  const int n = static_cast<int>(cfg.radars.size());
  std::vector<double> starts;
  for (const auto& r : cfg.radars) {
    const int cpe = r.chirp.K / cfg.episodes_per_frame;
    for (int k = 0; k < cpe; ++k) starts.push_back(k * r.chirp.T_pri);
  }
  std::sort(starts.begin(), starts.end());
  const double tol = 1e-12;
  std::vector<double> uniq;
  for (double s : starts)
    if (uniq.empty() || s - uniq.back() > tol) uniq.push_back(s);
  std::vector<std::vector<int>> out;
  out.reserve(uniq.size());
  for (double t : uniq) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) {
      const auto& c = cfg.radars[i].chirp;
      const int cpe = c.K / cfg.episodes_per_frame;
      idx[i] = std::min(cpe - 1, static_cast<int>(std::floor((t + tol) / c.T_pri)));
    }
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace detail

/// Simulate the scenario frame by frame. Deterministic given `cfg.seed`.
inline RunMetrics run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(cfg.radars.size());
  const int a = cfg.subbands();
  const int episodes_total = cfg.total_episodes();

  RunMetrics m;
  m.radars = n;
  m.subbands = a;
  m.genie_table = genie_utility_table(cfg);

  std::vector<signal::ChirpParams> params;
  for (const auto& r : cfg.radars) params.push_back(r.chirp);

  std::vector<std::mt19937_64> policy_rng, channel_rng;
  std::vector<detail::Agent> agents(n);
  for (int i = 0; i < n; ++i) {
    policy_rng.push_back(detail::stream(cfg.seed, i, 0));
    channel_rng.push_back(detail::stream(cfg.seed, i, 1));
    const auto& r = cfg.radars[i];
    auto& ag = agents[i];
    ag.policy = r.policy;
    ag.fixed = r.policy == Policy::fixed
                   ? game::MixedStrategy::pure(static_cast<std::size_t>(a), static_cast<std::size_t>(r.fixed_subband - 1))
                   : hopping::uniform_policy(a);
    if (r.policy == Policy::noregret) ag.noregret = hopping::NoRegretState(a, r.noregret);
    if (r.policy == Policy::nash) {
      const int cpe = r.chirp.K / cfg.episodes_per_frame;
      ag.nash = hopping::NashHopperState(i, n, a, r.nash.explore_episodes * cpe, r.nash);
      if (r.nash.explore_episodes == 0) ag.nash = hopping::nash_commit(std::move(ag.nash), 0);
    }
  }

  const auto clock = detail::union_clock(cfg);
  std::vector<std::vector<double>> comparator(n, std::vector<double>(a, 0.0));
  std::vector<double> realized(n, 0.0);

  std::vector<std::optional<double>> inr(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) inr[i * n + j] = detail::link_inr(cfg, i, j);

  const int prof = cfg.profile.radar;
  const bool want_frame = (cfg.profile.enabled || cfg.keep_frame) && prof >= 0 && prof < n;
  signal::ChirpFrame frame;

  for (int fr = 0; fr < cfg.frames; ++fr) {
    std::vector<std::vector<double>> target_phase(n);
    for (int i = 0; i < n; ++i)
      for (std::size_t t = 0; t < cfg.radars[i].targets.size(); ++t)
        target_phase[i].push_back(signal::uniform_phase(channel_rng[i]));

    const bool last_frame = fr == cfg.frames - 1;
    if (want_frame && last_frame) {
      const auto& c = params[prof];
      frame.samples.resize(c.samples_per_chirp(), c.K);
      frame.hops.assign(static_cast<std::size_t>(c.K), 0.0);
    }

    for (int ep = 0; ep < cfg.episodes_per_frame; ++ep) {
      std::vector<game::MixedStrategy> in_force;
      std::vector<std::vector<int>> act(n);
      for (int i = 0; i < n; ++i) {
        in_force.push_back(agents[i].current());
        const int cpe = params[i].K / cfg.episodes_per_frame;
        act[i].resize(cpe);
        for (int k = 0; k < cpe; ++k) act[i][k] = hopping::sample_subband(in_force[i], policy_rng[i]).offset();
      }
      const auto collisions = collision_table(params, act);

      std::vector<hopping::EpisodeStats> stats;
      std::vector<double> rate(n), sinr(n);
      for (int i = 0; i < n; ++i) {
        const auto& c = params[i];
        const auto& radar = cfg.radars[i];
        const int cpe = static_cast<int>(act[i].size());
        const int ns = c.samples_per_chirp();
        std::vector<signal::ChirpMeasurement> meas;
        meas.reserve(cpe);
        for (int k = 0; k < cpe; ++k) {
          const int kg = ep * cpe + k;
          const double db = act[i][k] * c.B_a;
          std::vector<signal::Samples> echoes, interf;
          for (std::size_t t = 0; t < radar.targets.size(); ++t)
            echoes.push_back(signal::dechirped_echo(c, radar.targets[t], kg, db, target_phase[i][t], cfg.noise_power));
          bool collided = false;
          for (const auto& o : collisions[i][k]) {
            const auto& link = inr[i * n + o.source];
            if (!link) continue;
            collided = true;
            interf.push_back(signal::dechirped_interference(c, params[o.source], signal::to_db(*link), true,
                                                            signal::uniform_phase(channel_rng[i]), o.fraction,
                                                            cfg.noise_power));
          }
          auto rx = signal::compose_received(echoes, interf, cfg.noise_power, channel_rng[i], static_cast<std::size_t>(ns));

          std::optional<signal::GenieTruth> truth;
          if (cfg.genie) {
            signal::Samples sum_e(ns), sum_i(ns);
            for (const auto& e : echoes)
              for (int s = 0; s < ns; ++s) sum_e[s] += e[s];
            for (const auto& v : interf)
              for (int s = 0; s < ns; ++s) sum_i[s] += v[s];
            truth = signal::GenieTruth{collided, signal::mean_power(sum_e), signal::mean_power(sum_i)};
          }
          meas.push_back(signal::measure_chirp(rx, act[i][k], kg, cfg.noise_power, cfg.detection_factor, truth));

          if (want_frame && last_frame && i == prof) {
            for (int s = 0; s < ns; ++s) frame.samples(s, kg) = rx[s];
            frame.hops[kg] = db;
          }
        }
        stats.push_back(signal::estimate_episode_sinr(meas, a, cfg.averaging));
        int hits = 0;
        for (const auto& mm : meas) hits += mm.interfered ? 1 : 0;
        rate[i] = static_cast<double>(hits) / cpe;
        double acc = 0.0;
        for (double v : signal::chirp_sinrs(meas)) acc += signal::to_db(std::max(v, 1e-6));
        sinr[i] = acc / cpe;
      }

      // Union-clock joint samples and regret against the genie table.
      const std::size_t first_sample = m.joint_samples.size();
      for (const auto& idx : clock) {
        game::JointAction f(n);
        for (int i = 0; i < n; ++i) f[i] = act[i][idx[i]];
        for (int i = 0; i < n; ++i) {
          realized[i] += m.genie_table(i, f);
          for (int d = 0; d < a; ++d) comparator[i][d] += m.genie_table.deviation(i, f, d);
        }
        m.joint_samples.push_back(std::move(f));
      }
      std::vector<double> regret(n);
      for (int i = 0; i < n; ++i) regret[i] = *std::max_element(comparator[i].begin(), comparator[i].end()) - realized[i];

      const int tau = fr * cfg.episodes_per_frame + ep;
      m.strategies.push_back(in_force);
      m.interference_rate.push_back(rate);
      m.mean_sinr_db.push_back(sinr);
      m.cumulative_regret_db.push_back(regret);
      m.actions.push_back(act);
      m.samples_per_episode.push_back(static_cast<int>(m.joint_samples.size() - first_sample));
      if (tau == episodes_total - 1)
        m.last_episode_joint = game::empirical_joint(
            std::vector<game::JointAction>(m.joint_samples.begin() + static_cast<std::ptrdiff_t>(first_sample),
                                           m.joint_samples.end()),
            n, a);

      std::vector<std::optional<hopping::EpisodeStats>> shared(stats.begin(), stats.end());
      for (int i = 0; i < n; ++i) {
        auto& ag = agents[i];
        if (ag.policy == Policy::noregret) {
          ag.noregret = hopping::noregret_update(std::move(ag.noregret), stats[i]);
        } else if (ag.policy == Policy::nash && ag.nash.phase == hopping::NashPhase::explore) {
          ag.nash = hopping::nash_explore_update(std::move(ag.nash), shared);
          if (ag.nash.episodes_explored >= cfg.radars[i].nash.explore_episodes) {
            const int cpe = params[i].K / cfg.episodes_per_frame;
            ag.nash = hopping::nash_commit(std::move(ag.nash), (tau + 1) * cpe);
          }
        }
      }
    }
  }

  for (const auto& ag : agents) m.final_strategies.push_back(ag.current());
  m.empirical_joint = game::empirical_joint(m.joint_samples, n, a);
  for (int i = 0; i < n; ++i) {
    m.cce_gap.push_back(game::cce_deviation_gap(m.empirical_joint, m.genie_table, i));
    m.external_regret.push_back(game::external_regret(game::ledger_from_history(m.joint_samples, m.genie_table, i), m.genie_table));
  }

  if (want_frame) {
    if (cfg.profile.enabled) {
      const auto& c = params[prof];
      const auto& tg = cfg.radars[prof].targets;
      const double v = tg.empty() ? 0.0 : tg.front().rdot;
      const int hi = cfg.profile.bin_hi < 0 ? c.samples_per_chirp() - 1 : cfg.profile.bin_hi;
      m.profile = signal::compute_range_profile(frame, c, v, cfg.profile.bin_lo, hi, cfg.profile.points_per_bin);
    }
    if (cfg.keep_frame) m.last_frame = std::move(frame);
  }
  return m;
}

}  // namespace hopsim::sim
