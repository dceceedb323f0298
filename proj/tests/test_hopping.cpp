#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hopsim/hopping.hpp"

using namespace hopsim;
using namespace hopsim::hopping;
using game::JointAction;
using game::MixedStrategy;

namespace {

EpisodeStats played(int subbands, std::initializer_list<std::pair<int, double>> sinr_db) {
  EpisodeStats st(subbands);
  for (auto [f, v] : sinr_db) {
    st.sinr_db[f] = v;
    st.snr_db[f] = v;
    st.count[f] = 1;
    st.clean_count[f] = 1;
  }
  return st;
}

double sum(const MixedStrategy& p) {
  double s = 0.0;
  for (double x : p.probs()) s += x;
  return s;
}

}  // namespace

TEST(EpisodeSchedule, RequiresDivisibility) {
  EpisodeSchedule s(512, 4);
  EXPECT_EQ(s.chirps_per_episode(), 128);
  EXPECT_EQ(s.boundary(3), 384);
  EXPECT_EQ(s.episode_of(383), 2);
  EXPECT_THROW(EpisodeSchedule(500, 60), InvalidInput);
  EXPECT_NO_THROW(EpisodeSchedule(500, 50));
}

TEST(ScheduleParams, ClosedForm) {
  const auto s = schedule_params(1, 6);
  EXPECT_NEAR(s.eta, std::sqrt(std::log(6.0) / 6.0), 1e-15);
  EXPECT_NEAR(s.eta, 0.5465, 1e-4);
  EXPECT_DOUBLE_EQ(s.gamma, s.eta);
  const auto q = schedule_params(4, 6);
  EXPECT_NEAR(q.eta, s.eta / 2.0, 1e-15);
  EXPECT_NEAR(q.gamma, s.gamma / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(schedule_params(1, 6, 1.0, 1e6).gamma, 1.0);
  EXPECT_THROW(schedule_params(0, 6), InvalidInput);
  EXPECT_THROW(schedule_params(1, 1), InvalidInput);
  EXPECT_THROW(schedule_params(1, 6, 0.0, 1.0), InvalidInput);
}

TEST(HardThreshold, ZeroesSmallEntriesAndRenormalizes) {
  auto q = hard_threshold(MixedStrategy({0.5, 0.46, 0.04}), 0.04);
  EXPECT_NEAR(q[0], 0.5 / 0.96, 1e-12);
  EXPECT_NEAR(q[1], 0.46 / 0.96, 1e-12);
  EXPECT_EQ(q[2], 0.0);
}

TEST(HardThreshold, IdentityCases) {
  MixedStrategy p({0.2, 0.3, 0.5});
  EXPECT_EQ(hard_threshold(p, 0.0), p);
  auto pure = MixedStrategy::pure(4, 2);
  EXPECT_EQ(hard_threshold(pure, 0.2), pure);
  EXPECT_THROW(hard_threshold(p, 1.0 / 3.0), InvalidInput);
  EXPECT_THROW(hard_threshold(p, -0.1), InvalidInput);
}

TEST(NoRegretUpdate, NoPlaysGivesUniform) {
  NoRegretState s(6, {});
  auto next = noregret_update(s, EpisodeStats(6));
  for (int f = 0; f < 6; ++f) EXPECT_NEAR(next.current[f], 1.0 / 6.0, 1e-15);
  EXPECT_EQ(next.tau, 2);
}

TEST(NoRegretUpdate, HandEvaluatedTwoArmStep) {
  NoRegretState s(2, {});
  auto next = noregret_update(s, played(2, {{0, 20.0}}), 0.1, 0.0);
  EXPECT_DOUBLE_EQ(next.loss[0], -40.0);
  EXPECT_DOUBLE_EQ(next.loss[1], 0.0);
  const double e4 = std::exp(4.0);
  EXPECT_NEAR(next.current[0], e4 / (e4 + 1.0), 1e-12);
  EXPECT_NEAR(next.current[0], 0.982, 5e-4);
  EXPECT_NEAR(next.current[1], 0.018, 5e-4);
}

TEST(NoRegretUpdate, FullExplorationIsUniform) {
  NoRegretState s(3, {});
  auto next = noregret_update(s, played(3, {{0, 20.0}, {2, -5.0}}), 0.5, 1.0);
  for (int f = 0; f < 3; ++f) EXPECT_NEAR(next.current[f], 1.0 / 3.0, 1e-15);
}

TEST(NoRegretUpdate, IncrementsAreClipped) {
  NoRegretParams p;
  p.clip_low = -5.0;
  p.clip_high = 5.0;
  NoRegretState s(2, p);
  auto next = noregret_update(s, played(2, {{0, 30.0}, {1, -30.0}}), 0.1, 0.0);
  EXPECT_DOUBLE_EQ(next.loss[0], -5.0);
  EXPECT_DOUBLE_EQ(next.loss[1], 5.0);
}

TEST(NoRegretUpdate, PlayedZeroProbabilityArmIsInconsistent) {
  NoRegretState s(3, {});
  s.current = MixedStrategy({0.5, 0.5, 0.0});
  EXPECT_THROW(noregret_update(s, played(3, {{2, 10.0}})), ConsistencyError);
}

TEST(NoRegretUpdate, ShiftInvariantAndSimplexPreserving) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  for (int trial = 0; trial < 100; ++trial) {
    NoRegretParams params;
    params.kappa = 0.0;
    NoRegretState s(6, params);
    for (auto& l : s.loss) l = u(rng) * 10.0;
    s.tau = 1 + trial;
    auto shifted = s;
    for (auto& l : shifted.loss) l += 1234.5;
    EpisodeStats st(6);
    for (int f = 0; f < 6; ++f)
      if (trial % (f + 2) == 0) {
        st.sinr_db[f] = u(rng);
        st.count[f] = 3;
      }
    auto a = noregret_update(s, st);
    auto b = noregret_update(shifted, st);
    EXPECT_NEAR(sum(a.current), 1.0, 1e-9);
    const double gamma = schedule_params(s.tau, 6).gamma;
    for (int f = 0; f < 6; ++f) {
      EXPECT_NEAR(a.current[f], b.current[f], 1e-12);
      EXPECT_GE(a.current[f], gamma / 6.0 - 1e-15);
    }
  }
}

TEST(SampleSubband, PureStrategyAlwaysReturnsItsIndex) {
  std::mt19937_64 rng(1);
  auto p = MixedStrategy::pure(6, 4);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_subband(p, rng).number(), 5);
}

TEST(SampleSubband, UniformCountsWithinBinomialBound) {
  std::mt19937_64 rng(2024);
  auto p = uniform_policy(6);
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 60000; ++i) counts[sample_subband(p, rng).offset()] += 1;
  for (int c : counts) {
    EXPECT_GE(c, 9500);
    EXPECT_LE(c, 10500);
  }
}

TEST(SampleSubband, SeededSequencesRepeat) {
  std::mt19937_64 a(99), b(99);
  MixedStrategy p({0.1, 0.2, 0.3, 0.4});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_subband(p, a), sample_subband(p, b));
}

TEST(UniformPolicy, EqualEntries) {
  auto p = uniform_policy(6);
  for (int f = 0; f < 6; ++f) EXPECT_DOUBLE_EQ(p[f], 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(uniform_policy(1)[0], 1.0);
  EXPECT_THROW(uniform_policy(0), InvalidInput);
}

TEST(NashExplore, CollisionCellTakesInterferedSinr) {
  NashHopperState s(0, 2, 2, 10, {});
  EpisodeStats mine(2), theirs(2);
  mine.interfered_sinr_db[0] = 3.0;
  mine.count[0] = 4;
  auto next = nash_explore_update(s, {mine, theirs});
  EXPECT_DOUBLE_EQ(next.estimated(0, JointAction{0, 0}), 3.0);
  EXPECT_DOUBLE_EQ(next.estimated(0, JointAction{0, 1}), -10.0);
  EXPECT_EQ(next.episodes_explored, 1);
}

TEST(NashExplore, CleanObservationsFillFreeCells) {
  NashHopperState s(1, 2, 3, 10, {});
  std::vector<std::optional<EpisodeStats>> all;
  for (int i = 0; i < 2; ++i) {
    EpisodeStats st(3);
    for (int f = 0; f < 3; ++f) st.snr_db[f] = 20.0;
    all.push_back(st);
  }
  auto next = nash_explore_update(s, all);
  for (std::size_t j = 0; j < next.estimated.joint_count(); ++j) {
    const auto f = next.estimated.decode(j);
    for (int i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(next.estimated.at(i, j), f[0] != f[1] ? 20.0 : -10.0);
  }
}

TEST(NashExplore, RecomputedProfileIsDistinctPurePair) {
  NashHopperState s(0, 2, 6, 0, {});
  std::vector<std::optional<EpisodeStats>> all;
  for (int i = 0; i < 2; ++i) {
    EpisodeStats st(6);
    for (int f = 0; f < 6; ++f) {
      st.snr_db[f] = 15.0 + f * 0.1 * (i + 1);
      st.interfered_sinr_db[f] = -20.0;
    }
    all.push_back(st);
  }
  auto next = nash_explore_update(s, all);
  ASSERT_TRUE(next.exploratory[0].is_pure());
  ASSERT_TRUE(next.exploratory[1].is_pure());
  EXPECT_NE(next.exploratory[0].support(), next.exploratory[1].support());
}

TEST(NashExplore, MissingStatsIsCommunicationError) {
  NashHopperState s(0, 2, 3, 10, {});
  EXPECT_THROW(nash_explore_update(s, {EpisodeStats(3)}), CommunicationError);
  EXPECT_THROW(nash_explore_update(s, {EpisodeStats(3), std::nullopt}), CommunicationError);
}

TEST(NashCommit, SequencingAndTieBreak) {
  NashHopperState s(1, 2, 6, 5120, {});
  EXPECT_THROW(nash_commit(s, 100), SequencingError);
  auto c = nash_commit(s, 5120);
  EXPECT_EQ(c.phase, NashPhase::commit);
  EXPECT_EQ(c.current(), game::solve_nash_welfare_max(s.estimated)[1]);
  EXPECT_THROW(nash_commit(c, 6000), SequencingError);
  EXPECT_THROW(nash_explore_update(c, {EpisodeStats(6), EpisodeStats(6)}), SequencingError);
}

TEST(NashCommit, SingleRadarPicksBestSnr) {
  NashHopperState s(0, 1, 4, 0, {});
  EpisodeStats st(4);
  const double snr[] = {12.0, 18.0, 9.0, 17.5};
  for (int f = 0; f < 4; ++f) st.snr_db[f] = snr[f];
  s = nash_explore_update(s, {st});
  s = nash_commit(s, 0);
  EXPECT_EQ(s.current(), MixedStrategy::pure(4, 1));
}
