#pragma once

// Game-theoretic core: strategies, utility tables, Nash and coarse correlated
// equilibrium checks, and regret accounting for the subband anti-coordination game.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hopsim/errors.hpp"

namespace hopsim::game {

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kDefaultEquilibriumTolerance = 1e-6;  // dB
inline constexpr std::size_t kMaxJointActions = 10'000'000;

/// One subband of the shared action set, numbered 1..A.
class SubbandIndex {
 public:
  SubbandIndex(int number, int count) : number_(number), count_(count) {
    if (count < 1) throw InvalidInput("subband count must be >= 1");
    if (number < 1 || number > count)
      throw InvalidInput("subband number " + std::to_string(number) + " outside 1.." + std::to_string(count));
  }

  static SubbandIndex from_offset(int offset, int count) { return {offset + 1, count}; }

  int number() const noexcept { return number_; }
  int offset() const noexcept { return number_ - 1; }
  int count() const noexcept { return count_; }

  /// Starting frequency f_a = f_c + (a-1) B_a.
  double start_frequency(double carrier_hz, double subband_bandwidth_hz) const noexcept {
    return carrier_hz + offset() * subband_bandwidth_hz;
  }

  friend bool operator==(const SubbandIndex&, const SubbandIndex&) = default;

 private:
  int number_;
  int count_;
};

/// Probability vector over the A subbands.
class MixedStrategy {
 public:
  MixedStrategy() = default;

  explicit MixedStrategy(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw InvalidInput("mixed strategy needs at least one entry");
    double total = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kSimplexTolerance)
        throw InvalidInput("mixed strategy entry outside [0,1]");
      total += p;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance)
      throw InvalidInput("mixed strategy entries sum to " + std::to_string(total));
  }

  static MixedStrategy uniform(std::size_t count) {
    if (count == 0) throw InvalidInput("uniform strategy needs at least one subband");
    return MixedStrategy(std::vector<double>(count, 1.0 / static_cast<double>(count)));
  }

  static MixedStrategy pure(std::size_t count, std::size_t offset) {
    if (offset >= count) throw InvalidInput("pure strategy offset out of range");
    std::vector<double> p(count, 0.0);
    p[offset] = 1.0;
    return MixedStrategy(std::move(p));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_.at(i); }
  std::span<const double> probs() const noexcept { return probs_; }

  std::vector<int> support(double eps = 0.0) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < probs_.size(); ++i)
      if (probs_[i] > eps) out.push_back(static_cast<int>(i));
    return out;
  }

  bool is_pure() const { return support().size() == 1; }

  friend bool operator==(const MixedStrategy&, const MixedStrategy&) = default;

 private:
  std::vector<double> probs_;
};

/// One mixed strategy per player.
using StrategyProfile = std::vector<MixedStrategy>;

/// Zero-based subband offsets, one per player.
using JointAction = std::vector<int>;

namespace detail {

inline std::size_t checked_power(int base, int exponent) {
  std::size_t n = 1;
  for (int i = 0; i < exponent; ++i) {
    n *= static_cast<std::size_t>(base);
    if (n > kMaxJointActions)
      throw CapacityError("joint action space A^I exceeds " + std::to_string(kMaxJointActions));
  }
  return n;
}

}  // namespace detail

/// Utility of each player (dB) for every joint action.
///
/// Joint actions are indexed with player 0 as the most significant digit, so the
/// index order is the lexicographic order of the action tuples.
class UtilityTable {
 public:
  UtilityTable() = default;

  UtilityTable(int players, int actions) : players_(players), actions_(actions) {
    if (players < 1) throw InvalidInput("utility table needs at least one player");
    if (actions < 1) throw InvalidInput("utility table needs at least one action");
    joint_count_ = detail::checked_power(actions, players);
    values_.assign(static_cast<std::size_t>(players) * joint_count_, 0.0);
  }

  template <typename Fn>
  static UtilityTable from_function(int players, int actions, Fn&& fn) {
    UtilityTable t(players, actions);
    JointAction f(players, 0);
    for (std::size_t j = 0; j < t.joint_count_; ++j) {
      t.decode(j, f);
      for (int i = 0; i < players; ++i) t.at(i, j) = fn(i, std::as_const(f));
    }
    return t;
  }

  int players() const noexcept { return players_; }
  int actions() const noexcept { return actions_; }
  std::size_t joint_count() const noexcept { return joint_count_; }

  std::size_t index(std::span<const int> joint) const {
    if (static_cast<int>(joint.size()) != players_) throw InvalidInput("joint action has wrong number of players");
    std::size_t idx = 0;
    for (int a : joint) {
      if (a < 0 || a >= actions_) throw InvalidInput("joint action entry out of range");
      idx = idx * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
    }
    return idx;
  }

  void decode(std::size_t idx, JointAction& out) const {
    out.resize(players_);
    for (int i = players_ - 1; i >= 0; --i) {
      out[i] = static_cast<int>(idx % static_cast<std::size_t>(actions_));
      idx /= static_cast<std::size_t>(actions_);
    }
  }

  JointAction decode(std::size_t idx) const {
    JointAction out;
    decode(idx, out);
    return out;
  }

  double& at(int player, std::size_t joint_index) { return values_[offset(player, joint_index)]; }
  double at(int player, std::size_t joint_index) const { return values_[offset(player, joint_index)]; }

  double operator()(int player, std::span<const int> joint) const { return at(player, index(joint)); }
  void set(int player, std::span<const int> joint, double value) { at(player, index(joint)) = value; }

  /// Utility for `player` when it plays `own` and everyone else keeps `joint`.
  double deviation(int player, std::span<const int> joint, int own) const {
    std::size_t idx = index(joint);
    std::size_t stride = 1;
    for (int i = players_ - 1; i > player; --i) stride *= static_cast<std::size_t>(actions_);
    const std::size_t current = static_cast<std::size_t>(joint[player]);
    idx = idx - current * stride + static_cast<std::size_t>(own) * stride;
    return at(player, idx);
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  /// Copy with `c` added to every entry of `player`.
  UtilityTable shifted(int player, double c) const {
    UtilityTable t = *this;
    for (std::size_t j = 0; j < joint_count_; ++j) t.at(player, j) += c;
    return t;
  }

  friend bool operator==(const UtilityTable&, const UtilityTable&) = default;

 private:
  std::size_t offset(int player, std::size_t joint_index) const {
    if (player < 0 || player >= players_) throw InvalidInput("player index out of range");
    if (joint_index >= joint_count_) throw InvalidInput("joint index out of range");
    return static_cast<std::size_t>(player) * joint_count_ + joint_index;
  }

  int players_ = 0;
  int actions_ = 0;
  std::size_t joint_count_ = 0;
  std::vector<double> values_;
};

/// Probability mass over joint actions, dense in table index order.
class JointDistribution {
 public:
  JointDistribution() = default;

  JointDistribution(int players, int actions, std::vector<double> mass)
      : players_(players), actions_(actions), mass_(std::move(mass)) {
    if (mass_.size() != detail::checked_power(actions, players))
      throw InvalidInput("joint distribution has wrong number of cells");
    double total = 0.0;
    for (double m : mass_) {
      if (!std::isfinite(m) || m < 0.0) throw InvalidInput("joint distribution mass must be non-negative");
      total += m;
    }
    if (std::abs(total - 1.0) > kSimplexTolerance)
      throw InvalidInput("joint distribution sums to " + std::to_string(total));
  }

  static JointDistribution point_mass(int players, int actions, std::span<const int> joint) {
    UtilityTable shape(players, actions);
    std::vector<double> m(shape.joint_count(), 0.0);
    m[shape.index(joint)] = 1.0;
    return {players, actions, std::move(m)};
  }

  int players() const noexcept { return players_; }
  int actions() const noexcept { return actions_; }
  std::span<const double> masses() const noexcept { return mass_; }
  double mass(std::size_t joint_index) const { return mass_.at(joint_index); }

  friend bool operator==(const JointDistribution&, const JointDistribution&) = default;

 private:
  int players_ = 0;
  int actions_ = 0;
  std::vector<double> mass_;
};

/// Per-chirp record for one player: the joint action that was in force and the
/// utility the player realized.
class RegretLedger {
 public:
  RegretLedger() = default;
  explicit RegretLedger(int player) : player_(player) {}

  void record(JointAction joint, double realized_db) {
    profiles_.push_back(std::move(joint));
    realized_.push_back(realized_db);
  }

  int player() const noexcept { return player_; }
  std::size_t size() const noexcept { return profiles_.size(); }
  const std::vector<JointAction>& profiles() const noexcept { return profiles_; }
  const std::vector<double>& realized() const noexcept { return realized_; }

 private:
  int player_ = 0;
  std::vector<JointAction> profiles_;
  std::vector<double> realized_;
};

namespace detail {

inline void check_profile(const UtilityTable& table, const StrategyProfile& profile) {
  if (static_cast<int>(profile.size()) != table.players())
    throw InvalidInput("profile has " + std::to_string(profile.size()) + " players, table has " +
                       std::to_string(table.players()));
  for (const auto& s : profile)
    if (static_cast<int>(s.size()) != table.actions()) throw InvalidInput("strategy length differs from action count");
}

inline void check_player(const UtilityTable& table, int player) {
  if (player < 0 || player >= table.players()) throw InvalidInput("player index out of range");
}

// Sum over joint actions of prod_j p_j(f_j) * U_player(f), with player's own
// strategy optionally replaced by a pure action.
inline double expectation(const UtilityTable& table, const StrategyProfile& profile, int player,
                          std::optional<int> own_override) {
  const int n = table.players();
  JointAction f(n, 0);
  double total = 0.0;
  for (std::size_t j = 0; j < table.joint_count(); ++j) {
    table.decode(j, f);
    double w = 1.0;
    for (int i = 0; i < n && w != 0.0; ++i) {
      if (i == player && own_override) {
        w *= (f[i] == *own_override) ? 1.0 : 0.0;
      } else {
        w *= profile[i][f[i]];
      }
    }
    if (w != 0.0) total += w * table.at(player, j);
  }
  return total;
}

}  // namespace detail

/// Expected utility of `player` under the product distribution of `profile`.
inline double expected_utility(const UtilityTable& table, const StrategyProfile& profile, int player) {
  detail::check_profile(table, profile);
  detail::check_player(table, player);
  return detail::expectation(table, profile, player, std::nullopt);
}

/// True iff no player gains more than `tol` by a unilateral pure deviation.
inline bool is_nash(const StrategyProfile& profile, const UtilityTable& table,
                    double tol = kDefaultEquilibriumTolerance) {
  detail::check_profile(table, profile);
  if (tol < 0.0) throw InvalidInput("tolerance must be non-negative");
  for (int i = 0; i < table.players(); ++i) {
    const double base = detail::expectation(table, profile, i, std::nullopt);
    for (int a = 0; a < table.actions(); ++a)
      if (detail::expectation(table, profile, i, a) > base + tol) return false;
  }
  return true;
}

/// Every joint action at which no player has a strictly improving pure deviation,
/// in lexicographic order.
inline std::vector<JointAction> enumerate_pure_nash(const UtilityTable& table, double tol = 0.0) {
  if (table.joint_count() > kMaxJointActions) throw CapacityError("joint action space too large");
  std::vector<JointAction> out;
  JointAction f;
  for (std::size_t j = 0; j < table.joint_count(); ++j) {
    table.decode(j, f);
    bool stable = true;
    for (int i = 0; i < table.players() && stable; ++i) {
      const double u = table.at(i, j);
      for (int a = 0; a < table.actions(); ++a) {
        if (a != f[i] && table.deviation(i, f, a) > u + tol) {
          stable = false;
          break;
        }
      }
    }
    if (stable) out.push_back(f);
  }
  return out;
}

inline StrategyProfile pure_profile(std::span<const int> joint, int actions) {
  StrategyProfile p;
  p.reserve(joint.size());
  for (int a : joint) p.push_back(MixedStrategy::pure(static_cast<std::size_t>(actions), static_cast<std::size_t>(a)));
  return p;
}

enum class NashSolverMode {
  automatic,  ///< support enumeration for two players, pure enumeration otherwise
  mixed,      ///< two-player support enumeration (pure equilibria included)
  pure_only,
};

namespace detail {

inline std::vector<std::vector<int>> subsets_of_size(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

// Mixed strategy of the opponent that makes the owner indifferent over
// `own_support`. payoff(own, other) is the owner's payoff.
template <typename Payoff>
std::optional<std::vector<double>> indifference_mix(const std::vector<int>& own_support,
                                                    const std::vector<int>& other_support, int actions,
                                                    Payoff&& payoff) {
  const int s = static_cast<int>(own_support.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s + 1, s + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) m(r, c) = payoff(own_support[r], other_support[c]);
    m(r, s) = -1.0;
  }
  for (int c = 0; c < s; ++c) m(s, c) = 1.0;
  rhs(s) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  if (!lu.isInvertible()) return std::nullopt;
  Eigen::VectorXd sol = lu.solve(rhs);
  if (!((m * sol - rhs).norm() < 1e-9)) return std::nullopt;
  std::vector<double> mix(actions, 0.0);
  double total = 0.0;
  for (int c = 0; c < s; ++c) {
    double v = sol(c);
    if (v < -1e-10) return std::nullopt;
    v = std::max(v, 0.0);
    mix[other_support[c]] = v;
    total += v;
  }
  if (total <= 0.0) return std::nullopt;
  for (double& v : mix) v /= total;
  return mix;
}

inline std::vector<std::vector<int>> supports_of(const StrategyProfile& p) {
  std::vector<std::vector<int>> out;
  for (const auto& s : p) out.push_back(s.support(1e-12));
  return out;
}

inline bool same_profile(const StrategyProfile& a, const StrategyProfile& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k)
      if (std::abs(a[i][k] - b[i][k]) > 1e-9) return false;
  return true;
}

inline std::vector<StrategyProfile> two_player_equilibria(const UtilityTable& table, double tol) {
  const int n = table.actions();
  std::size_t work = 0;
  for (int s = 1; s <= n; ++s) {
    const auto c = subsets_of_size(n, s).size();
    work += c * c;
  }
  if (work > 2'000'000) throw CapacityError("support enumeration too large for " + std::to_string(n) + " actions");

  auto row = [&](int a, int b) { return table(0, std::array<int, 2>{a, b}); };
  auto col = [&](int b, int a) { return table(1, std::array<int, 2>{a, b}); };

  std::vector<StrategyProfile> found;
  for (int s = 1; s <= n; ++s) {
    const auto sets = subsets_of_size(n, s);
    for (const auto& s1 : sets) {
      for (const auto& s2 : sets) {
        auto y = indifference_mix(s1, s2, n, row);
        if (!y) continue;
        auto x = indifference_mix(s2, s1, n, col);
        if (!x) continue;
        StrategyProfile p{MixedStrategy(*x), MixedStrategy(*y)};
        if (!is_nash(p, table, tol)) continue;
        bool dup = std::any_of(found.begin(), found.end(), [&](const auto& q) { return same_profile(p, q); });
        if (!dup) found.push_back(std::move(p));
      }
    }
  }
  return found;
}

}  // namespace detail

/// Nash equilibrium with the highest social welfare (sum of expected utilities).
///
/// Welfare ties within `tol` are broken by the lexicographically smallest tuple of
/// support index sets.
inline StrategyProfile solve_nash_welfare_max(const UtilityTable& table,
                                              NashSolverMode mode = NashSolverMode::automatic,
                                              double tol = kDefaultEquilibriumTolerance) {
  if (mode == NashSolverMode::automatic)
    mode = table.players() == 2 ? NashSolverMode::mixed : NashSolverMode::pure_only;
  if (mode == NashSolverMode::mixed && table.players() != 2)
    throw InvalidInput("mixed equilibrium solving is only available for two players");

  std::vector<StrategyProfile> candidates;
  if (mode == NashSolverMode::mixed) {
    candidates = detail::two_player_equilibria(table, tol);
  } else {
    for (const auto& f : enumerate_pure_nash(table)) candidates.push_back(pure_profile(f, table.actions()));
  }
  if (candidates.empty()) throw SolverIncomplete("no Nash equilibrium found in the requested solver mode");

  std::size_t best = 0;
  double best_welfare = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<int>> best_support;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double w = 0.0;
    for (int i = 0; i < table.players(); ++i) w += detail::expectation(table, candidates[c], i, std::nullopt);
    auto support = detail::supports_of(candidates[c]);
    const bool better = w > best_welfare + tol;
    const bool tie = std::abs(w - best_welfare) <= tol;
    if (better || (tie && support < best_support)) {
      best = c;
      best_welfare = std::max(w, best_welfare);
      best_support = std::move(support);
    }
  }
  return candidates[best];
}

/// max over f' of E_pi[U_i(f', f^-i)] - E_pi[U_i(f)]. Non-positive for every player
/// iff pi is a coarse correlated equilibrium.
inline double cce_deviation_gap(const JointDistribution& joint, const UtilityTable& table, int player) {
  if (joint.players() != table.players() || joint.actions() != table.actions())
    throw InvalidInput("joint distribution and table dimensions differ");
  detail::check_player(table, player);
  double realized = 0.0;
  std::vector<double> deviation(table.actions(), 0.0);
  JointAction f;
  for (std::size_t j = 0; j < table.joint_count(); ++j) {
    const double m = joint.mass(j);
    if (m == 0.0) continue;
    table.decode(j, f);
    realized += m * table.at(player, j);
    for (int a = 0; a < table.actions(); ++a) deviation[a] += m * table.deviation(player, f, a);
  }
  return *std::max_element(deviation.begin(), deviation.end()) - realized;
}

/// max over fixed f of sum_k [U_i(f, f^-i_k) - realized_k].
inline double external_regret(const RegretLedger& ledger, const UtilityTable& table) {
  detail::check_player(table, ledger.player());
  if (ledger.realized().size() != ledger.profiles().size()) throw InvalidInput("ragged regret ledger");
  std::vector<double> comparator(table.actions(), 0.0);
  double realized = 0.0;
  for (std::size_t k = 0; k < ledger.size(); ++k) {
    const auto& f = ledger.profiles()[k];
    for (int a = 0; a < table.actions(); ++a) comparator[a] += table.deviation(ledger.player(), f, a);
    realized += ledger.realized()[k];
  }
  return *std::max_element(comparator.begin(), comparator.end()) - realized;
}

/// Ledger for `player` whose realized utilities are read from `table`.
inline RegretLedger ledger_from_history(const std::vector<JointAction>& history, const UtilityTable& table,
                                        int player) {
  detail::check_player(table, player);
  RegretLedger ledger(player);
  for (const auto& f : history) ledger.record(f, table(player, f));
  return ledger;
}

/// Fraction of chirps at which each joint action was in force.
///
/// `histories[i][k]` is the subband offset of player i at chirp k.
inline JointDistribution empirical_joint(const std::vector<std::vector<int>>& histories, int actions) {
  if (histories.empty()) throw InvalidInput("empirical joint needs at least one history");
  const std::size_t k_total = histories.front().size();
  if (k_total == 0) throw InvalidInput("histories must be non-empty");
  for (const auto& h : histories)
    if (h.size() != k_total) throw InvalidInput("ragged histories");
  const int players = static_cast<int>(histories.size());
  UtilityTable shape(players, actions);
  std::vector<double> mass(shape.joint_count(), 0.0);
  JointAction f(players);
  for (std::size_t k = 0; k < k_total; ++k) {
    for (int i = 0; i < players; ++i) f[i] = histories[i][k];
    mass[shape.index(f)] += 1.0;
  }
  for (double& m : mass) m /= static_cast<double>(k_total);
  return {players, actions, std::move(mass)};
}

inline JointDistribution empirical_joint(const std::vector<JointAction>& samples, int players, int actions) {
  if (samples.empty()) throw InvalidInput("empirical joint needs at least one sample");
  UtilityTable shape(players, actions);
  std::vector<double> mass(shape.joint_count(), 0.0);
  for (const auto& f : samples) mass[shape.index(f)] += 1.0;
  for (double& m : mass) m /= static_cast<double>(samples.size());
  return {players, actions, std::move(mass)};
}

}  // namespace hopsim::game
