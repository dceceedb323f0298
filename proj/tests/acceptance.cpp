// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hopsim/config.hpp"
#include "hopsim/sim.hpp"
#include "oracles.hpp"

using namespace hopsim;

namespace {

constexpr int kSeeds = 20;

int failures = 0;

void report(int n, bool pass, const std::string& what, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", n, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void parallel_for(int n, const std::function<void(int)>& body) {
  std::atomic<int> next{0};
  const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), n));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next++) < n;) body(i);
    });
  for (auto& t : pool) t.join();
}

sim::ScenarioConfig reference() {
  std::ifstream in(std::string(HOPSIM_SOURCE_DIR) + "/configs/table1.cfg");
  std::stringstream ss;
  ss << in.rdbuf();
  return config::parse_config(ss.str());
}

std::vector<sim::RunMetrics> run_seeds(sim::ScenarioConfig base, sim::Policy policy, int frames) {
  for (auto& r : base.radars) r.policy = policy;
  base.frames = frames;
  std::vector<sim::RunMetrics> out(kSeeds);
  parallel_for(kSeeds, [&](int s) {
    auto cfg = base;
    cfg.seed = static_cast<std::uint64_t>(s + 1);
    out[s] = sim::run_scenario(cfg);
  });
  return out;
}

// ---------------------------------------------------------------------------

void criterion1(const std::vector<sim::RunMetrics>& nash, int explore) {
  int ok = 0;
  for (const auto& m : nash) {
    bool clean = true;
    for (int e = explore; e < m.episodes(); ++e)
      for (int i = 0; i < m.radars; ++i) clean = clean && m.interference_rate[e][i] == 0.0;
    const auto& f = m.final_strategies;
    const bool distinct = f[0].is_pure() && f[1].is_pure() && f[0].support() != f[1].support();
    ok += clean && distinct ? 1 : 0;
  }
  report(1, ok >= 19, "nash commit phase interference-free with distinct pure subbands in >= 19/20 seeds",
         fmt("%d/20 seeds", ok));
}

void criterion2(const std::vector<sim::RunMetrics>& nr) {
  int ok = 0;
  std::vector<double> rates;
  for (const auto& m : nr) {
    const auto a = m.final_strategies[0].support();
    const auto b = m.final_strategies[1].support();
    bool disjoint = true;
    for (int x : a) disjoint = disjoint && std::find(b.begin(), b.end(), x) == b.end();
    const double rate = std::max(m.final_interference_rate(0), m.final_interference_rate(1));
    rates.push_back(rate);
    ok += disjoint && a.size() >= 2 && b.size() >= 2 && rate < 0.05 ? 1 : 0;
  }
  report(2, ok >= 18, "noregret final supports disjoint, >= 2 subbands each, final-10 interference < 5% in >= 18/20 seeds",
         fmt("%d/20 seeds, median final-10 rate %.4f", ok, median(rates)));
}

void criterion3(const std::vector<sim::RunMetrics>& long_runs) {
  bool pass = true;
  std::string detail;
  for (int i = 0; i < 2; ++i) {
    std::vector<double> at20, at80;
    for (const auto& m : long_runs) {
      double n20 = 0.0, n80 = 0.0;
      for (int e = 0; e < 20; ++e) n20 += m.samples_per_episode[e];
      for (int e = 0; e < 80; ++e) n80 += m.samples_per_episode[e];
      at20.push_back(m.cumulative_regret_db[19][i] / n20);
      at80.push_back(m.cumulative_regret_db[79][i] / n80);
    }
    const double r20 = median(at20), r80 = median(at80);
    pass = pass && r80 <= 0.7 * r20;
    detail += fmt("%sradar %d: %.4f dB at 20 -> %.4f dB at 80, ratio %.3f", i ? "; " : "", i + 1, r20, r80, r80 / r20);
  }
  report(3, pass, "median average regret at 80 episodes <= 0.7 x value at 20 episodes", detail);
}

void criterion4(const std::vector<const std::vector<sim::RunMetrics>*>& all) {
  int runs = 0, bad = 0;
  double worst = -INFINITY;
  for (const auto* set : all)
    for (const auto& m : *set) {
      ++runs;
      const double k = static_cast<double>(m.joint_samples.size());
      for (int i = 0; i < m.radars; ++i) {
        const double slack = m.cce_gap[i] - m.external_regret[i] / k;
        worst = std::max(worst, slack);
        bad += slack <= 1e-6 ? 0 : 1;
      }
    }
  report(4, bad == 0, "cce gap <= external regret / K + 1e-6 for every run and radar",
         fmt("%d runs, %d violations, max gap - regret/K = %.3g", runs, bad, worst));
}

// Synthesize one episode of fixed pure play and compare the per-subband
// estimate with 10 log10 of the mean theoretical SINR over the same chirps.
struct FidelityCase {
  std::string name;
  std::vector<signal::ChirpParams> radars;
  std::vector<int> subband;
  std::vector<int> evaluate;
};

std::vector<std::pair<std::string, double>> fidelity_errors(const FidelityCase& c, double snr_db, double inr_db,
                                                              std::uint64_t seed) {
  const int n = static_cast<int>(c.radars.size());
  std::vector<std::vector<int>> act(n);
  for (int i = 0; i < n; ++i) act[i].assign(c.radars[i].K, c.subband[i]);
  const auto table = sim::collision_table(c.radars, act);
  std::vector<std::pair<std::string, double>> out;
  for (int i : c.evaluate) {
    const auto& p = c.radars[i];
    std::mt19937_64 rng(seed + 17 * i);
    const signal::Target tgt{20.0, -15.0, snr_db};
    const double target_phase = signal::uniform_phase(rng);
    std::vector<signal::ChirpMeasurement> meas;
    double theory = 0.0;
    for (int k = 0; k < p.K; ++k) {
      std::vector<signal::Samples> interf;
      double overlap = 0.0;
      for (const auto& o : table[i][k]) {
        interf.push_back(signal::dechirped_interference(p, c.radars[o.source], inr_db, true, signal::uniform_phase(rng),
                                                        o.fraction));
        overlap += o.fraction;
      }
      const auto echo = signal::dechirped_echo(p, tgt, k, c.subband[i] * p.B_a, target_phase);
      const auto rx = signal::compose_received({echo}, interf, 1.0, rng);
      meas.push_back(signal::measure_chirp(rx, c.subband[i], k, 1.0, 16.0));
      theory += signal::theoretical_sinr(signal::from_db(snr_db), signal::from_db(inr_db) * overlap, 1.0);
    }
    const auto st = signal::estimate_episode_sinr(meas, p.A, signal::Averaging::linear);
    const double expected = signal::to_db(theory / p.K);
    const double got = *st.sinr_db[c.subband[i]];
    out.push_back({fmt("%s radar %d: %.2f vs %.2f dB", c.name.c_str(), i + 1, got, expected), got - expected});
  }
  return out;
}

void criterion5() {
  signal::ChirpParams r1;
  auto r2 = r1;
  r2.T_pri = 40e-6;
  r2.T_a = 32e-6;
  r2.K = 256;
  auto r2_short = r1;  // same PRI, shorter sweep: a different chirp slope
  r2_short.T_a = 12e-6;

  const std::vector<FidelityCase> cases{
      {"mixed-PRI collision", {r1, r2}, {2, 2}, {0}},
      {"equal-PRI collision", {r1, r2_short}, {4, 4}, {0, 1}},
      {"disjoint subbands", {r1, r2}, {0, 3}, {0, 1}},
  };
  bool pass = true;
  double worst = 0.0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3})
    for (const auto& c : cases)
      for (const auto& [label, err] : fidelity_errors(c, 10.0, 30.0, seed)) {
        worst = std::max(worst, std::abs(err));
        pass = pass && std::abs(err) <= 1.0;
        if (seed == 1) detail += (detail.empty() ? "" : "; ") + label;
      }
  report(5, pass, "fixed pure strategies: |estimated - theoretical SINR| <= 1 dB per subband",
         fmt("worst %.3f dB over 3 seeds; seed 1: ", worst) + detail);
}

void criterion6() {
  sim::ScenarioConfig cfg;
  sim::RadarConfig r;
  r.policy = sim::Policy::uniform;
  r.targets.push_back(signal::Target{20.0, -15.0, 20.0});
  cfg.radars.push_back(r);
  cfg.frames = 1;
  cfg.profile.enabled = false;
  cfg.keep_frame = true;
  const auto& p = r.chirp;
  const auto v_grid = signal::default_velocity_grid(p, p.K);
  std::vector<int> coarse_ok(100), fine_ok(100);
  std::vector<double> err(100);
  parallel_for(100, [&](int t) {
    auto c = cfg;
    c.seed = static_cast<std::uint64_t>(1000 + t);
    const auto m = sim::run_scenario(c);
    const auto est = signal::locate_target(*m.last_frame, p, v_grid, 4 * p.A);
    coarse_ok[t] = std::abs(est.coarse_range - 20.0) <= p.coarse_bin_width();
    err[t] = std::abs(est.range - 20.0);
    fine_ok[t] = err[t] <= p.fine_bin_width();
  });
  const int c_ok = std::accumulate(coarse_ok.begin(), coarse_ok.end(), 0);
  const int f_ok = std::accumulate(fine_ok.begin(), fine_ok.end(), 0);
  report(6, c_ok >= 95 && f_ok >= 95,
         "coarse peak within 1.0 m and fine estimate within 0.1667 m in >= 95/100 trials at SNR 20 dB",
         fmt("coarse %d/100, fine %d/100, median fine error %.4f m", c_ok, f_ok, median(err)));
}

void criterion7(const std::vector<sim::RunMetrics>& uni, const std::vector<sim::RunMetrics>& nr,
                const std::vector<sim::RunMetrics>& nash) {
  auto widths = [](const std::vector<sim::RunMetrics>& runs) {
    std::vector<double> w;
    for (const auto& m : runs) w.push_back(signal::mainlobe_width_3db(*m.profile));
    return median(w);
  };
  const double wu = widths(uni), wr = widths(nr), wn = widths(nash);
  const double ru = wu / wn, rr = wr / wn;
  const bool order = wu < wr && wr < wn;
  const bool ratios = std::abs(ru - 1.0 / 6.0) <= 0.25 / 6.0 && std::abs(rr - 1.0 / 3.0) <= 0.25 / 3.0;
  report(7, order && ratios, "mainlobe widths uniform < noregret < nash with ratios within 25% of 1/6 : 1/3 : 1",
         fmt("median widths uniform %.4f m, noregret %.4f m, nash %.4f m; ratios %.3f : %.3f : 1", wu, wr, wn, ru, rr));
}

void criterion8(const std::vector<sim::RunMetrics>& uni, const std::vector<sim::RunMetrics>& nr,
                const std::vector<sim::RunMetrics>& nash) {
  auto sinr = [](const sim::RunMetrics& m) {
    double s = 0.0;
    for (int i = 0; i < m.radars; ++i) s += m.final_mean_sinr_db(i);
    return s / m.radars;
  };
  int ok = 0;
  std::vector<double> fu, fr, fn;
  for (int s = 0; s < kSeeds; ++s) {
    const double ou = signal::off_peak_level_db(*uni[s].profile);
    const double orr = signal::off_peak_level_db(*nr[s].profile);
    const double on = signal::off_peak_level_db(*nash[s].profile);
    fu.push_back(ou);
    fr.push_back(orr);
    fn.push_back(on);
    const bool floor = ou > orr && ou > on;
    const bool better = sinr(nr[s]) > sinr(uni[s]) && sinr(nash[s]) > sinr(uni[s]);
    ok += floor && better ? 1 : 0;
  }
  report(8, ok >= 18, "uniform has the highest off-peak level and the lowest final mean SINR in >= 18/20 seeds",
         fmt("%d/20 seeds; median off-peak uniform %.2f, noregret %.2f, nash %.2f dB", ok, median(fu), median(fr),
             median(fn)));
}

game::UtilityTable to_table(const oracle::Table& t, int actions) {
  game::UtilityTable u(2, actions);
  for (const auto& [j, v] : t)
    for (int i = 0; i < 2; ++i) u.set(i, j, v[i]);
  return u;
}

void criterion9() {
  std::mt19937_64 rng(2024);
  int tables = 0, nash_mismatch = 0, gap_mismatch = 0;
  double real_gap_dev = 0.0;
  for (int trial = 0; trial < 400; ++trial) {
    const bool integer = trial < 200;
    const int a = 2 + trial % 3;
    const auto ot = oracle::random_table(2, a, rng, integer);
    const auto t = to_table(ot, a);

    auto mine = game::enumerate_pure_nash(t);
    auto want = oracle::pure_nash(ot, a);
    std::sort(mine.begin(), mine.end());
    std::sort(want.begin(), want.end());
    nash_mismatch += mine == want ? 0 : 1;

    // 64 samples keep every mass dyadic, so integer tables admit exact sums.
    std::uniform_int_distribution<int> pick(0, a - 1);
    std::vector<game::JointAction> h(64, game::JointAction(2));
    for (auto& f : h)
      for (auto& x : f) x = pick(rng);
    const auto pi = game::empirical_joint(h, 2, a);
    std::map<oracle::Joint, double> opi;
    for (const auto& f : h) opi[f] += 1.0 / 64.0;
    for (int i = 0; i < 2; ++i) {
      const double g = game::cce_deviation_gap(pi, t, i);
      const double o = oracle::cce_gap(ot, opi, i, a);
      if (integer) gap_mismatch += g == o ? 0 : 1;
      else real_gap_dev = std::max(real_gap_dev, std::abs(g - o));
    }
    ++tables;
  }
  report(9, nash_mismatch == 0 && gap_mismatch == 0 && real_gap_dev <= 1e-9,
         "pure NE sets and cce gaps match the brute-force oracle exactly on 200 random tables (I=2, A in {2,3,4})",
         fmt("%d tables, %d NE mismatches, %d exact-gap mismatches on integer tables, max real-table deviation %.2g",
             tables, nash_mismatch, gap_mismatch, real_gap_dev));
}

}  // namespace

int main() {
  const auto base = reference();
  const int frames = base.frames;
  const int explore = base.radars[0].nash.explore_episodes;

  std::printf("running %d seeds x 3 policies x %d episodes ...\n", kSeeds, frames);
  std::fflush(stdout);
  const auto nash = run_seeds(base, sim::Policy::nash, frames);
  const auto nr = run_seeds(base, sim::Policy::noregret, frames);
  const auto uni = run_seeds(base, sim::Policy::uniform, frames);

  auto long_base = base;
  long_base.profile.enabled = false;
  const auto long_runs = run_seeds(long_base, sim::Policy::noregret, 80);

  criterion1(nash, explore);
  criterion2(nr);
  criterion3(long_runs);
  criterion4({&nash, &nr, &uni, &long_runs});
  criterion5();
  criterion6();
  criterion7(uni, nr, nash);
  criterion8(uni, nr, nash);
  criterion9();

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
