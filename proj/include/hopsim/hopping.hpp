#pragma once

// Per-radar scheduling agents: No-Regret Hopping (exponential weights with
// importance-weighted losses), Nash Hopping (explore-then-commit) and the uniform
// baseline. Each agent is updated once per episode.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hopsim/errors.hpp"
#include "hopsim/game.hpp"

namespace hopsim::hopping {

using game::MixedStrategy;
using game::StrategyProfile;
using game::SubbandIndex;
using game::UtilityTable;

/// Episode boundaries k_tau = tau * K / T within one frame.
class EpisodeSchedule {
 public:
  EpisodeSchedule(int chirps_per_frame, int episodes) : chirps_(chirps_per_frame), episodes_(episodes) {
    if (chirps_per_frame < 1) throw InvalidInput("chirps per frame must be >= 1");
    if (episodes < 1) throw InvalidInput("episode count must be >= 1");
    if (chirps_per_frame % episodes != 0)
      throw InvalidInput("K = " + std::to_string(chirps_per_frame) + " is not divisible by " +
                         std::to_string(episodes) + " episodes");
  }

  int chirps_per_frame() const noexcept { return chirps_; }
  int episodes() const noexcept { return episodes_; }
  int chirps_per_episode() const noexcept { return chirps_ / episodes_; }

  /// k_tau for tau in 0..T.
  int boundary(int tau) const {
    if (tau < 0 || tau > episodes_) throw InvalidInput("episode index out of range");
    return tau * chirps_per_episode();
  }

  /// Episode (0-based) containing chirp k.
  int episode_of(int k) const {
    if (k < 0 || k >= chirps_) throw InvalidInput("chirp index out of range");
    return k / chirps_per_episode();
  }

 private:
  int chirps_;
  int episodes_;
};

/// Windowed estimates for one radar over one episode. Estimates are absent for
/// subbands that produced no qualifying chirp.
struct EpisodeStats {
  EpisodeStats() = default;
  explicit EpisodeStats(int subbands)
      : sinr_db(subbands), snr_db(subbands), interfered_sinr_db(subbands), count(subbands, 0), clean_count(subbands, 0) {}

  int subbands() const noexcept { return static_cast<int>(count.size()); }

  std::vector<std::optional<double>> sinr_db;             // all chirps at f
  std::vector<std::optional<double>> snr_db;              // interference-free chirps at f
  std::vector<std::optional<double>> interfered_sinr_db;  // chirps at f with interference
  std::vector<int> count;
  std::vector<int> clean_count;
};

struct StepSizes {
  double eta;
  double gamma;
};

/// eta = c_eta * sqrt(ln A / (tau A)), gamma = min(1, c_gamma * sqrt(ln A / (tau A))).
inline StepSizes schedule_params(int tau, int subbands, double c_eta = 1.0, double c_gamma = 1.0) {
  if (tau < 1) throw InvalidInput("episode index tau must be >= 1");
  if (subbands < 2) throw InvalidInput("step sizes need at least two subbands");
  if (!(c_eta > 0.0) || !(c_gamma > 0.0)) throw InvalidInput("step-size scales must be positive");
  const double base = std::sqrt(std::log(static_cast<double>(subbands)) / (static_cast<double>(tau) * subbands));
  return {c_eta * base, std::min(1.0, c_gamma * base)};
}

/// Zero every entry <= kappa and renormalize.
inline MixedStrategy hard_threshold(const MixedStrategy& p, double kappa) {
  const auto n = p.size();
  if (!(kappa >= 0.0) || kappa >= 1.0 / static_cast<double>(n))
    throw InvalidInput("threshold kappa must lie in [0, 1/A)");
  if (kappa == 0.0) return p;
  std::vector<double> q(p.probs().begin(), p.probs().end());
  double total = 0.0;
  for (double& v : q) {
    if (v <= kappa) v = 0.0;
    total += v;
  }
  if (total <= 0.0) throw InvalidInput("every entry fell below the threshold");
  for (double& v : q) v /= total;
  return MixedStrategy(std::move(q));
}

/// Inverse-CDF draw from p using 53 random bits (platform-independent).
inline SubbandIndex sample_subband(const MixedStrategy& p, std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] <= 0.0) continue;
    last_positive = static_cast<int>(a);
    acc += p[a];
    if (u < acc) return SubbandIndex::from_offset(static_cast<int>(a), static_cast<int>(p.size()));
  }
  return SubbandIndex::from_offset(last_positive, static_cast<int>(p.size()));
}

inline MixedStrategy uniform_policy(int subbands) {
  if (subbands < 1) throw InvalidInput("uniform policy needs at least one subband");
  return MixedStrategy::uniform(static_cast<std::size_t>(subbands));
}

// ---------------------------------------------------------------------------
// No-Regret Hopping

struct NoRegretParams {
  double c_eta = 1.0;
  double c_gamma = 1.0;
  double kappa = 0.0;
  double clip_low = -60.0;  // bounds on one importance-weighted loss increment
  double clip_high = 60.0;

  friend bool operator==(const NoRegretParams&, const NoRegretParams&) = default;
};

struct NoRegretState {
  NoRegretState() = default;
  NoRegretState(int subbands, NoRegretParams params)
      : loss(static_cast<std::size_t>(subbands), 0.0), params(params), current(uniform_policy(subbands)) {
    if (subbands < 2) throw InvalidInput("no-regret hopping needs at least two subbands");
    if (!(params.c_eta > 0.0) || !(params.c_gamma > 0.0)) throw InvalidInput("step-size scales must be positive");
    if (params.kappa < 0.0 || params.kappa >= 1.0 / subbands) throw InvalidInput("kappa must lie in [0, 1/A)");
    if (!(params.clip_low < params.clip_high)) throw InvalidInput("clip range is empty");
  }

  std::vector<double> loss;  // L-hat
  int tau = 1;
  NoRegretParams params;
  MixedStrategy current;
};

/// One no-regret update with explicit step sizes.
inline NoRegretState noregret_update(NoRegretState state, const EpisodeStats& stats, double eta, double gamma) {
  const auto n = state.loss.size();
  if (static_cast<std::size_t>(stats.subbands()) != n) throw InvalidInput("episode stats cover the wrong subband count");
  if (!(eta >= 0.0) || !(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("invalid step sizes");

  for (std::size_t f = 0; f < n; ++f) {
    if (stats.count[f] <= 0 || !stats.sinr_db[f]) continue;
    const double p = state.current[f];
    if (p <= 0.0)
      throw ConsistencyError("subband " + std::to_string(f + 1) + " was played with zero probability");
    const double inc = std::clamp(-*stats.sinr_db[f] / p, state.params.clip_low, state.params.clip_high);
    state.loss[f] += inc;
  }

  std::vector<double> z(n);
  for (std::size_t f = 0; f < n; ++f) z[f] = -eta * state.loss[f];
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    total += v;
  }
  for (double& v : z) v = (1.0 - gamma) * (v / total) + gamma / static_cast<double>(n);

  // Guard the simplex check against accumulated rounding.
  const double s = std::accumulate(z.begin(), z.end(), 0.0);
  for (double& v : z) v /= s;

  state.current = hard_threshold(MixedStrategy(std::move(z)), state.params.kappa);
  state.tau += 1;
  return state;
}

inline NoRegretState noregret_update(NoRegretState state, const EpisodeStats& stats) {
  const auto steps = schedule_params(state.tau, static_cast<int>(state.loss.size()), state.params.c_eta,
                                     state.params.c_gamma);
  return noregret_update(std::move(state), stats, steps.eta, steps.gamma);
}

// ---------------------------------------------------------------------------
// Nash Hopping

struct NashParams {
  int explore_episodes = 10;
  double floor_db = -10.0;  // prior for cells never observed
  game::NashSolverMode solver = game::NashSolverMode::automatic;

  friend bool operator==(const NashParams&, const NashParams&) = default;
};

enum class NashPhase { explore, commit };

struct NashHopperState {
  NashHopperState() = default;

  /// `explore_chirps` is k_e; commit is allowed once that many chirps have elapsed.
  NashHopperState(int player, int players, int subbands, int explore_chirps, NashParams params)
      : player(player), explore_chirps(explore_chirps), params(params) {
    if (player < 0 || player >= players) throw InvalidInput("player index out of range");
    if (explore_chirps < 0) throw InvalidInput("k_e must be non-negative");
    estimated = UtilityTable(players, subbands);
    for (int i = 0; i < players; ++i)
      for (std::size_t j = 0; j < estimated.joint_count(); ++j) estimated.at(i, j) = params.floor_db;
    for (int i = 0; i < players; ++i) exploratory.push_back(uniform_policy(subbands));
  }

  const MixedStrategy& current() const {
    return phase == NashPhase::commit ? *committed : exploratory.at(static_cast<std::size_t>(player));
  }

  int player = 0;
  int explore_chirps = 0;
  NashParams params;
  NashPhase phase = NashPhase::explore;
  int episodes_explored = 0;
  UtilityTable estimated;
  StrategyProfile exploratory;
  std::optional<MixedStrategy> committed;
};

/// Fold every radar's episode estimates into the estimated table, then recompute
/// the exploratory profile as the welfare-maximizing NE of that table.
///
/// Collision cells take the interfered-chirp SINR, free cells the SNR.
inline NashHopperState nash_explore_update(NashHopperState state,
                                           const std::vector<std::optional<EpisodeStats>>& all_stats) {
  if (state.phase != NashPhase::explore) throw SequencingError("explore update after commit");
  auto& table = state.estimated;
  const int players = table.players();
  const int subbands = table.actions();
  if (static_cast<int>(all_stats.size()) != players)
    throw CommunicationError("expected stats from " + std::to_string(players) + " radars, got " +
                             std::to_string(all_stats.size()));
  for (int i = 0; i < players; ++i) {
    if (!all_stats[i]) throw CommunicationError("radar " + std::to_string(i + 1) + " sent no episode stats");
    if (all_stats[i]->subbands() != subbands) throw InvalidInput("episode stats cover the wrong subband count");
  }

  game::JointAction f;
  for (std::size_t j = 0; j < table.joint_count(); ++j) {
    table.decode(j, f);
    for (int i = 0; i < players; ++i) {
      bool shared = false;
      for (int o = 0; o < players; ++o) shared = shared || (o != i && f[o] == f[i]);
      const auto& st = *all_stats[i];
      const auto& est = shared ? st.interfered_sinr_db[f[i]] : st.snr_db[f[i]];
      if (est) table.at(i, j) = *est;
    }
  }

  state.exploratory = game::solve_nash_welfare_max(table, state.params.solver);
  state.episodes_explored += 1;
  return state;
}

/// Freeze this radar's slice of the welfare-maximizing NE of the estimated table.
inline NashHopperState nash_commit(NashHopperState state, int k) {
  if (state.phase != NashPhase::explore) throw SequencingError("already committed");
  if (k < state.explore_chirps)
    throw SequencingError("commit at chirp " + std::to_string(k) + " before k_e = " +
                          std::to_string(state.explore_chirps));
  const auto profile = game::solve_nash_welfare_max(state.estimated, state.params.solver);
  state.committed = profile.at(static_cast<std::size_t>(state.player));
  state.phase = NashPhase::commit;
  return state;
}

}  // namespace hopsim::hopping
