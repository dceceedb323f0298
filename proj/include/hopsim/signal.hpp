#pragma once

// FMCW baseband model: dechirped echoes and interference, noise, thresholding
// interference detection, windowed SINR/SNR estimation, range FFT and the
// hop-compensated fine-range/Doppler matched filter.

#include <fftw3.h>

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hopsim/errors.hpp"
#include "hopsim/hopping.hpp"

namespace hopsim::signal {

using cplx = std::complex<double>;
using Samples = std::vector<cplx>;

inline constexpr double kSpeedOfLight = 3e8;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Chirp configuration of one radar.
struct ChirpParams {
  double f_c = 77e9;
  double B_a = 150e6;
  int A = 6;
  double T_pri = 20e-6;
  double T_a = 16e-6;
  double f_s = 20e6;
  int K = 512;

  /// Fill T_a with 0.8 * T_pri when not given.
  static ChirpParams make(double f_c, double B_a, int A, double T_pri, int K, std::optional<double> T_a = std::nullopt,
                          double f_s = 20e6) {
    ChirpParams p{f_c, B_a, A, T_pri, T_a.value_or(0.8 * T_pri), f_s, K};
    p.validate();
    return p;
  }

  double alpha() const noexcept { return B_a / T_a; }
  double total_bandwidth() const noexcept { return A * B_a; }
  double frame_duration() const noexcept { return K * T_pri; }
  double coarse_bin_width() const noexcept { return kSpeedOfLight / (2.0 * B_a); }
  double fine_bin_width() const noexcept { return kSpeedOfLight / (2.0 * total_bandwidth()); }

  int samples_per_chirp() const noexcept {
    // Guard against f_s * T_a landing a hair under an integer.
    return static_cast<int>(std::floor(f_s * T_a * (1.0 + 1e-12)));
  }

  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (!(f_c > 0.0)) out.push_back("f_c must be positive");
    if (!(B_a > 0.0)) out.push_back("B_a must be positive");
    if (A < 1) out.push_back("A must be >= 1");
    if (!(T_pri > 0.0)) out.push_back("T_pri must be positive");
    if (!(T_a > 0.0) || !(T_a < T_pri)) out.push_back("T_a must satisfy 0 < T_a < T_pri");
    if (!(f_s > 0.0)) out.push_back("f_s must be positive");
    if (K < 1) out.push_back("K must be >= 1");
    if (out.empty() && samples_per_chirp() < 2) out.push_back("N_s = floor(f_s T_a) must be >= 2");
    return out;
  }

  void validate() const {
    auto p = problems();
    if (!p.empty()) throw ValidationError(std::move(p));
  }

  friend bool operator==(const ChirpParams&, const ChirpParams&) = default;
};

struct Target {
  double r = 20.0;       // m
  double rdot = -15.0;   // m/s, negative approaching
  double snr_db = 20.0;  // per-sample post-dechirp SNR

  friend bool operator==(const Target&, const Target&) = default;
};

/// Complex baseband samples (N_s x K, column k is chirp k) and hop offsets Delta b_k.
struct ChirpFrame {
  Eigen::MatrixXcd samples;
  std::vector<double> hops;

  int samples_per_chirp() const { return static_cast<int>(samples.rows()); }
  int chirps() const { return static_cast<int>(samples.cols()); }

  friend bool operator==(const ChirpFrame& a, const ChirpFrame& b) {
    return a.hops == b.hops && a.samples.rows() == b.samples.rows() && a.samples.cols() == b.samples.cols() &&
           a.samples == b.samples;
  }
};

inline double coarse_range_frequency(const ChirpParams& p, double r) { return 2.0 * r * p.alpha() / kSpeedOfLight; }

/// Doppler in cycles per chirp.
inline double doppler_frequency(const ChirpParams& p, double rdot) {
  return -2.0 * rdot * p.T_pri * p.f_c / kSpeedOfLight;
}

inline double velocity_from_doppler(const ChirpParams& p, double f_d) {
  return -f_d * kSpeedOfLight / (2.0 * p.T_pri * p.f_c);
}

struct RangeSplit {
  double coarse;  // r-bar, a multiple of c/(2 B_a)
  double fine;    // epsilon_0 = r - r-bar
};

inline RangeSplit split_range(const ChirpParams& p, double r) {
  const double w = p.coarse_bin_width();
  const double coarse = std::round(r / w) * w;
  return {coarse, r - coarse};
}

inline double tx_chirp_phase(const ChirpParams& p, double f_k, double t) {
  if (!(t >= 0.0) || !(t < p.T_a)) throw InvalidInput("t outside the active chirp time");
  return kTwoPi * (f_k * t + 0.5 * p.alpha() * t * t);
}

/// Dechirped echo of one target on chirp k with hop offset db_k. `phase` is the
/// target's carrier phase (random per frame in the simulator).
inline Samples dechirped_echo(const ChirpParams& p, const Target& tgt, int k, double db_k, double phase = 0.0,
                              double noise_power = 1.0) {
  if (!(tgt.r > 0.0)) throw InvalidInput("target range must be positive");
  const double delay = 2.0 * (tgt.r + k * tgt.rdot * p.T_pri) / kSpeedOfLight;
  if (!(delay > 0.0) || !(delay < p.T_a)) throw InvalidInput("round-trip delay outside (0, T_a)");
  const double f_r = coarse_range_frequency(p, tgt.r);
  if (!(f_r < p.f_s)) throw InvalidInput("beat frequency beyond the sampling rate");

  const auto [r_bar, eps0] = split_range(p, tgt.r);
  const double f_d = doppler_frequency(p, tgt.rdot);
  const double amp = std::sqrt(std::pow(10.0, tgt.snr_db / 10.0) * noise_power);
  const double slow = kTwoPi * f_d * k -
                      kTwoPi * (2.0 * r_bar / kSpeedOfLight + 2.0 * (eps0 + k * tgt.rdot * p.T_pri) / kSpeedOfLight) * db_k +
                      phase;

  const int n = p.samples_per_chirp();
  Samples out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = i / p.f_s;
    out[i] = std::polar(amp, -kTwoPi * f_r * t + slow);
  }
  return out;
}

/// Residual chirp left after the victim dechirps a colliding chirp of `source`.
/// Power relative to noise is 10^(inr_db/10) * overlap.
inline Samples dechirped_interference(const ChirpParams& victim, const ChirpParams& source, double inr_db, bool collide,
                                      double phase, double overlap = 1.0, double noise_power = 1.0) {
  const int n = victim.samples_per_chirp();
  Samples out(static_cast<std::size_t>(n), cplx{});
  if (!collide) return out;
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw InvalidInput("overlap fraction outside [0,1]");
  const double amp = std::sqrt(std::pow(10.0, inr_db / 10.0) * overlap * noise_power);
  const double slope = victim.alpha() - source.alpha();
  for (int i = 0; i < n; ++i) {
    const double t = i / victim.f_s;
    out[i] = std::polar(amp, std::numbers::pi * slope * t * t + phase);
  }
  return out;
}

inline double uniform_phase(std::mt19937_64& rng) {
  return kTwoPi * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline void add_noise(Samples& x, double noise_power, std::mt19937_64& rng) {
  if (noise_power < 0.0) throw InvalidInput("noise power must be non-negative");
  if (noise_power == 0.0) return;
  std::normal_distribution<double> g(0.0, std::sqrt(noise_power / 2.0));
  for (auto& v : x) {
    const double re = g(rng);
    const double im = g(rng);
    v += cplx(re, im);
  }
}

/// Sum of components plus circular complex Gaussian noise. `length` is needed
/// only when both lists are empty.
inline Samples compose_received(const std::vector<Samples>& echoes, const std::vector<Samples>& interference,
                                double noise_power, std::mt19937_64& rng, std::size_t length = 0) {
  std::optional<std::size_t> n;
  for (const auto* group : {&echoes, &interference})
    for (const auto& v : *group) {
      if (n && *n != v.size()) throw InvalidInput("component lengths differ");
      n = v.size();
    }
  if (n && length != 0 && *n != length) throw InvalidInput("component length differs from requested length");
  Samples out(n.value_or(length), cplx{});
  for (const auto* group : {&echoes, &interference})
    for (const auto& v : *group)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  add_noise(out, noise_power, rng);
  return out;
}

inline double theoretical_sinr(double signal_power, double interference_power, double noise_power) {
  if (!(noise_power > 0.0)) throw InvalidInput("noise power must be positive");
  if (signal_power < 0.0 || interference_power < 0.0) throw InvalidInput("powers must be non-negative");
  return signal_power / (interference_power + noise_power);
}

inline double mean_power(std::span<const cplx> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (const auto& v : x) s += std::norm(v);
  return s / static_cast<double>(x.size());
}

inline double to_db(double linear) { return 10.0 * std::log10(linear); }
inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

// ---------------------------------------------------------------------------
// FFT

namespace detail {

class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(int n) {
    std::lock_guard lock(mu_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<fftw_complex> in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_dft_1d(n, in.data(), out.data(), FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    plans_.emplace(n, plan);
    return plan;
  }

  PlanCache(const PlanCache&) = delete;
  PlanCache& operator=(const PlanCache&) = delete;

 private:
  PlanCache() = default;
  ~PlanCache() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mu_;
  std::map<int, fftw_plan> plans_;
};

}  // namespace detail

/// Unitary DFT with kernel e^{+j 2 pi m n / N}, so the dechirped tone
/// e^{-j 2 pi f_r t} lands at bin round(f_r N / f_s).
inline void unitary_dft(const cplx* in, cplx* out, int n) {
  fftw_plan plan = detail::PlanCache::instance().get(n);
  // fftw_execute_dft does not write the input for out-of-place complex transforms.
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)), reinterpret_cast<fftw_complex*>(out));
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) out[i] *= scale;
}

inline Samples unitary_dft(std::span<const cplx> x) {
  Samples out(x.size());
  if (!x.empty()) unitary_dft(x.data(), out.data(), static_cast<int>(x.size()));
  return out;
}

enum class Window { none, hann };

/// Per-chirp fast-time DFT; output is range bins x K.
inline Eigen::MatrixXcd range_fft(const ChirpFrame& frame, Window window = Window::none) {
  const int n = frame.samples_per_chirp();
  if (n < 2) throw InvalidInput("range FFT needs N_s >= 2");
  Eigen::MatrixXcd out(n, frame.chirps());
  std::vector<double> taper(static_cast<std::size_t>(n), 1.0);
  if (window == Window::hann)
    for (int i = 0; i < n; ++i) taper[i] = 0.5 - 0.5 * std::cos(kTwoPi * i / n);
  Samples col(static_cast<std::size_t>(n));
  for (int k = 0; k < frame.chirps(); ++k) {
    for (int i = 0; i < n; ++i) col[i] = frame.samples(i, k) * taper[i];
    unitary_dft(col.data(), out.col(k).data(), n);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detection and estimation

struct Detection {
  bool flag = false;
  Samples clean;
  Samples interference;
  double threshold = 0.0;
};

/// Threshold detector: a sample is suspicious when |x|^2 exceeds
/// factor * (noise_power + envelope), where the envelope is the strongest range
/// bin's power spread over N_s samples. The chirp is flagged when more than 1% of
/// samples are suspicious.
inline Detection detect_interference(std::span<const cplx> samples, double noise_power, double factor) {
  if (!(factor > 1.0)) throw InvalidInput("detection factor must exceed 1");
  if (!(noise_power > 0.0)) throw InvalidInput("noise power must be positive");
  Detection d;
  d.clean.assign(samples.begin(), samples.end());
  d.interference.assign(samples.size(), cplx{});
  if (samples.empty()) return d;

  const auto spectrum = unitary_dft(samples);
  double peak = 0.0;
  for (const auto& v : spectrum) peak = std::max(peak, std::norm(v));
  const double envelope = peak / static_cast<double>(samples.size());
  d.threshold = factor * (noise_power + envelope);

  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (std::norm(samples[i]) > d.threshold) {
      ++hits;
      d.interference[i] = samples[i];
      d.clean[i] = 0.0;
    }
  }
  d.flag = static_cast<double>(hits) > 0.01 * static_cast<double>(samples.size());
  return d;
}

/// Everything the episode estimator needs from one chirp.
struct ChirpMeasurement {
  int subband = 0;
  int chirp = 0;  // slow-time index within the frame
  bool interfered = false;
  double noise_power = 1.0;
  double total_power = 0.0;
  Samples bins;  // unitary range DFT
  // Realized component powers, present only in genie mode.
  std::optional<double> true_signal_power;
  std::optional<double> true_interference_power;
};

struct GenieTruth {
  bool collided = false;
  double signal_power = 0.0;
  double interference_power = 0.0;
};

inline ChirpMeasurement measure_chirp(std::span<const cplx> samples, int subband, int chirp, double noise_power,
                                      double factor, const std::optional<GenieTruth>& genie = std::nullopt) {
  ChirpMeasurement m;
  m.subband = subband;
  m.chirp = chirp;
  m.noise_power = noise_power;
  m.total_power = mean_power(samples);
  if (genie) {
    m.interfered = genie->collided;
    m.true_signal_power = genie->signal_power;
    m.true_interference_power = genie->interference_power;
    return m;
  }
  m.interfered = detect_interference(samples, noise_power, factor).flag;
  m.bins = unitary_dft(samples);
  return m;
}

enum class Averaging { linear, log };

namespace detail {

inline constexpr double kRatioFloor = 1e-6;

// Strongest range bin summed over interference-free chirps, falling back to all
// chirps when every chirp was flagged.
inline std::optional<std::size_t> episode_target_bin(std::span<const ChirpMeasurement> chirps) {
  for (bool clean_only : {true, false}) {
    std::vector<double> acc;
    for (const auto& m : chirps) {
      if (m.bins.empty() || (clean_only && m.interfered)) continue;
      if (acc.empty()) acc.assign(m.bins.size(), 0.0);
      if (acc.size() != m.bins.size()) throw InvalidInput("chirps of one episode differ in length");
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += std::norm(m.bins[i]);
    }
    if (!acc.empty()) return static_cast<std::size_t>(std::max_element(acc.begin(), acc.end()) - acc.begin());
  }
  return std::nullopt;
}

// Target power at `bin` from the chirps of one subband. The echo keeps its
// phase progression across chirps while interference and noise do not, so the
// slow-time periodogram peak |Z|^2 ~ n^2 N P_s + Q with Q = sum_k |X_k|^2.
inline std::optional<double> coherent_signal_power(std::span<const ChirpMeasurement> chirps, int subband,
                                                   std::size_t bin) {
  std::vector<const ChirpMeasurement*> use;
  for (const auto& m : chirps)
    if (m.subband == subband && bin < m.bins.size()) use.push_back(&m);
  if (use.size() < 2) return std::nullopt;
  int lo = use.front()->chirp, hi = lo;
  for (const auto* m : use) {
    lo = std::min(lo, m->chirp);
    hi = std::max(hi, m->chirp);
  }
  const int len = static_cast<int>(std::bit_ceil(static_cast<unsigned>(8 * (hi - lo + 1))));
  Samples z(static_cast<std::size_t>(len), cplx{});
  double q = 0.0;
  for (const auto* m : use) {
    z[static_cast<std::size_t>(m->chirp - lo)] += m->bins[bin];
    q += std::norm(m->bins[bin]);
  }
  double peak = 0.0;
  for (const auto& v : unitary_dft(z)) peak = std::max(peak, std::norm(v));
  peak *= len;  // undo the unitary scaling
  const double n = static_cast<double>(use.size());
  const double per_bin = std::max(peak - q, 0.0) / (n * n - n);
  return per_bin / static_cast<double>(use.front()->bins.size());
}

struct ChirpRatios {
  double snr;
  double sinr;
};

// `coherent_ps` is the subband's coherent signal power, used for interfered
// chirps; without it the signal is taken from the target bin over a local floor.
inline ChirpRatios chirp_ratios(const ChirpMeasurement& m, std::optional<std::size_t> target_bin,
                                std::optional<double> coherent_ps = std::nullopt) {
  const double pn = m.noise_power;
  if (m.true_signal_power) {
    const double ps = *m.true_signal_power;
    return {ps / pn, ps / (m.true_interference_power.value_or(0.0) + pn)};
  }
  if (!m.interfered || !target_bin || m.bins.empty()) {
    const double ps = std::max(m.total_power - pn, 0.0);
    return {ps / pn, ps / pn};
  }
  double ps = 0.0;
  if (coherent_ps) {
    ps = std::min(*coherent_ps, std::max(m.total_power - pn, 0.0));
  } else {
    const auto n = m.bins.size();
    const auto b = *target_bin;
    double floor = 0.0;
    int used = 0;
    for (int d = 2; d <= 8; ++d) {
      for (int s : {-1, 1}) {
        const auto idx = static_cast<std::size_t>((static_cast<long>(b) + s * d + static_cast<long>(n)) % static_cast<long>(n));
        floor += std::norm(m.bins[idx]);
        ++used;
      }
    }
    floor /= std::max(used, 1);
    ps = std::max(std::norm(m.bins[b]) - floor, 0.0) / static_cast<double>(n);
  }
  const double pi = std::max(m.total_power - ps - pn, 0.0);
  return {ps / pn, ps / (pi + pn)};
}

// Coherent signal power for every subband that has interfered chirps.
inline std::vector<std::optional<double>> subband_signal_powers(std::span<const ChirpMeasurement> chirps,
                                                                std::optional<std::size_t> bin) {
  int top = -1;
  for (const auto& m : chirps) top = std::max(top, m.subband);
  std::vector<std::optional<double>> out(static_cast<std::size_t>(top + 1));
  if (!bin) return out;
  std::vector<bool> hit(out.size(), false);
  for (const auto& m : chirps)
    if (m.interfered && !m.bins.empty() && m.subband >= 0) hit[static_cast<std::size_t>(m.subband)] = true;
  for (std::size_t f = 0; f < out.size(); ++f)
    if (hit[f]) out[f] = coherent_signal_power(chirps, static_cast<int>(f), *bin);
  return out;
}

class Accumulator {
 public:
  explicit Accumulator(Averaging mode) : mode_(mode) {}
  void add(double ratio) {
    const double r = std::max(ratio, kRatioFloor);
    sum_ += mode_ == Averaging::linear ? r : to_db(r);
    ++n_;
  }
  std::optional<double> db() const {
    if (n_ == 0) return std::nullopt;
    const double mean = sum_ / n_;
    return mode_ == Averaging::linear ? to_db(mean) : mean;
  }

 private:
  Averaging mode_;
  double sum_ = 0.0;
  int n_ = 0;
};

}  // namespace detail

/// Per-chirp SINR (linear) as seen by the estimator.
inline std::vector<double> chirp_sinrs(std::span<const ChirpMeasurement> chirps) {
  const auto bin = detail::episode_target_bin(chirps);
  const auto ps = detail::subband_signal_powers(chirps, bin);
  std::vector<double> out;
  out.reserve(chirps.size());
  for (const auto& m : chirps)
    out.push_back(detail::chirp_ratios(m, bin, m.subband >= 0 ? ps[static_cast<std::size_t>(m.subband)] : std::nullopt).sinr);
  return out;
}

/// Windowed per-subband SINR/SNR estimates over one episode.
inline hopping::EpisodeStats estimate_episode_sinr(std::span<const ChirpMeasurement> chirps, int subbands,
                                                   Averaging averaging = Averaging::linear) {
  if (chirps.empty()) throw InvalidInput("episode has no chirps");
  hopping::EpisodeStats st(subbands);
  std::vector<detail::Accumulator> all(subbands, detail::Accumulator(averaging));
  auto clean = all;
  auto hit = all;
  for (const auto& m : chirps)
    if (m.subband < 0 || m.subband >= subbands) throw InvalidInput("chirp subband out of range");
  const auto bin = detail::episode_target_bin(chirps);
  const auto ps = detail::subband_signal_powers(chirps, bin);
  for (const auto& m : chirps) {
    const auto r = detail::chirp_ratios(m, bin, ps[static_cast<std::size_t>(m.subband)]);
    all[m.subband].add(r.sinr);
    st.count[m.subband] += 1;
    if (m.interfered) {
      hit[m.subband].add(r.sinr);
    } else {
      clean[m.subband].add(r.snr);
      st.clean_count[m.subband] += 1;
    }
  }
  for (int f = 0; f < subbands; ++f) {
    st.sinr_db[f] = all[f].db();
    st.snr_db[f] = clean[f].db();
    st.interfered_sinr_db[f] = hit[f].db();
  }
  return st;
}

// ---------------------------------------------------------------------------
// Fine range / Doppler

struct RangeDopplerSurface {
  int coarse_bin = 0;
  std::vector<double> velocities;  // m/s
  std::vector<double> eps;         // m, offsets from the bin center
  Eigen::MatrixXd db;              // velocities x eps
};

/// Velocities whose Doppler spans [-0.5, 0.5) cycles per chirp in `count` steps.
inline std::vector<double> default_velocity_grid(const ChirpParams& p, int count) {
  if (count < 1) throw InvalidInput("velocity grid needs at least one point");
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int m = 0; m < count; ++m) v[m] = velocity_from_doppler(p, -0.5 + static_cast<double>(m) / count);
  std::sort(v.begin(), v.end());
  return v;
}

/// Half-open grid over [-c/(4 B_a), c/(4 B_a)).
inline std::vector<double> default_eps_grid(const ChirpParams& p, int points_per_bin = 0) {
  if (points_per_bin <= 0) points_per_bin = 2 * p.A;
  const double w = p.coarse_bin_width();
  std::vector<double> e(static_cast<std::size_t>(points_per_bin));
  for (int i = 0; i < points_per_bin; ++i) e[i] = -w / 2.0 + w * i / points_per_bin;
  return e;
}

/// Grid matched filter over (v, eps) at one coarse bin, with the coarse-range
/// hop phase removed. Magnitude is 20 log10(|sum_k X_k conj(template_k)| / K).
inline RangeDopplerSurface fine_range_doppler(const Eigen::MatrixXcd& rfft, std::span<const double> hops, int coarse_bin,
                                              std::span<const double> v_grid, std::span<const double> eps_grid,
                                              const ChirpParams& p) {
  const int k_total = static_cast<int>(rfft.cols());
  if (static_cast<int>(hops.size()) != k_total) throw InvalidInput("hop sequence length differs from chirp count");
  if (coarse_bin < 0 || coarse_bin >= rfft.rows()) throw InvalidInput("coarse bin out of range");
  const double half = p.coarse_bin_width() / 2.0;
  for (double e : eps_grid)
    if (e < -half - 1e-12 || e > half + 1e-12) throw InvalidInput("eps grid outside the fine-quantization interval");

  const double c = kSpeedOfLight;
  const double r_bar = coarse_bin * p.coarse_bin_width();

  // Group chirps by hop value; eps then enters as one phasor per group.
  std::vector<double> levels;
  std::vector<int> group(static_cast<std::size_t>(k_total));
  for (int k = 0; k < k_total; ++k) {
    auto it = std::find_if(levels.begin(), levels.end(), [&](double l) { return std::abs(l - hops[k]) < 1e-3; });
    if (it == levels.end()) {
      levels.push_back(hops[k]);
      it = levels.end() - 1;
    }
    group[k] = static_cast<int>(it - levels.begin());
  }

  std::vector<cplx> y(static_cast<std::size_t>(k_total));
  for (int k = 0; k < k_total; ++k) y[k] = rfft(coarse_bin, k) * std::polar(1.0, kTwoPi * 2.0 * r_bar / c * hops[k]);

  RangeDopplerSurface s;
  s.coarse_bin = coarse_bin;
  s.velocities.assign(v_grid.begin(), v_grid.end());
  s.eps.assign(eps_grid.begin(), eps_grid.end());
  s.db.resize(static_cast<Eigen::Index>(v_grid.size()), static_cast<Eigen::Index>(eps_grid.size()));

  std::vector<cplx> g(levels.size());
  for (std::size_t vi = 0; vi < v_grid.size(); ++vi) {
    const double v = v_grid[vi];
    const double f_d = doppler_frequency(p, v);
    std::fill(g.begin(), g.end(), cplx{});
    for (int k = 0; k < k_total; ++k) {
      const double ph = -kTwoPi * f_d * k + kTwoPi * 2.0 * k * v * p.T_pri / c * hops[k];
      g[group[k]] += y[k] * std::polar(1.0, ph);
    }
    for (std::size_t ei = 0; ei < eps_grid.size(); ++ei) {
      cplx acc{};
      for (std::size_t l = 0; l < levels.size(); ++l)
        acc += g[l] * std::polar(1.0, kTwoPi * 2.0 * eps_grid[ei] / c * levels[l]);
      s.db(static_cast<Eigen::Index>(vi), static_cast<Eigen::Index>(ei)) =
          20.0 * std::log10(std::max(std::abs(acc) / k_total, 1e-300));
    }
  }
  return s;
}

/// Surfaces of consecutive coarse bins laid end to end on an absolute range axis.
struct StitchedSurface {
  std::vector<double> velocities;
  std::vector<double> ranges;
  std::vector<int> bins;  // coarse bin of each range sample
  Eigen::MatrixXd db;     // velocities x ranges
};

inline StitchedSurface stitch(const std::vector<RangeDopplerSurface>& parts, double coarse_bin_width) {
  if (parts.empty()) throw InvalidInput("nothing to stitch");
  StitchedSurface out;
  out.velocities = parts.front().velocities;
  std::size_t cols = 0;
  for (const auto& s : parts) {
    if (s.velocities != out.velocities) throw InvalidInput("surfaces use different velocity grids");
    cols += s.eps.size();
  }
  out.db.resize(static_cast<Eigen::Index>(out.velocities.size()), static_cast<Eigen::Index>(cols));
  Eigen::Index col = 0;
  for (const auto& s : parts) {
    for (std::size_t e = 0; e < s.eps.size(); ++e, ++col) {
      out.ranges.push_back(s.coarse_bin * coarse_bin_width + s.eps[e]);
      out.bins.push_back(s.coarse_bin);
      out.db.col(col) = s.db.col(static_cast<Eigen::Index>(e));
    }
  }
  return out;
}

struct FineRangeProfile {
  std::vector<double> ranges;        // m
  std::vector<double> magnitude_db;  // per range sample
  int coarse_bin = 0;                // bin holding the peak
  double velocity = 0.0;

  std::size_t peak_index() const {
    if (magnitude_db.empty()) throw InvalidInput("empty profile");
    return static_cast<std::size_t>(std::max_element(magnitude_db.begin(), magnitude_db.end()) - magnitude_db.begin());
  }
  double peak_range() const { return ranges[peak_index()]; }

  friend bool operator==(const FineRangeProfile&, const FineRangeProfile&) = default;
};

inline FineRangeProfile range_profile_at_velocity(const StitchedSurface& surface, double v) {
  auto it = std::find_if(surface.velocities.begin(), surface.velocities.end(),
                         [&](double g) { return std::abs(g - v) <= 1e-9 * std::max(1.0, std::abs(v)); });
  if (it == surface.velocities.end()) throw InvalidInput("velocity is not on the evaluated grid");
  const auto row = static_cast<Eigen::Index>(it - surface.velocities.begin());
  FineRangeProfile p;
  p.velocity = *it;
  p.ranges = surface.ranges;
  p.magnitude_db.resize(surface.ranges.size());
  for (std::size_t i = 0; i < surface.ranges.size(); ++i) p.magnitude_db[i] = surface.db(row, static_cast<Eigen::Index>(i));
  p.coarse_bin = surface.bins[p.peak_index()];
  return p;
}

/// Profile at one velocity across coarse bins [bin_lo, bin_hi].
inline FineRangeProfile compute_range_profile(const ChirpFrame& frame, const ChirpParams& p, double v, int bin_lo,
                                              int bin_hi, int points_per_bin = 0) {
  const auto rfft = range_fft(frame);
  bin_lo = std::max(bin_lo, 0);
  bin_hi = std::min(bin_hi, static_cast<int>(rfft.rows()) - 1);
  if (bin_lo > bin_hi) throw InvalidInput("empty coarse-bin window");
  const auto eps = default_eps_grid(p, points_per_bin);
  const std::vector<double> vg{v};
  std::vector<RangeDopplerSurface> parts;
  for (int b = bin_lo; b <= bin_hi; ++b) parts.push_back(fine_range_doppler(rfft, frame.hops, b, vg, eps, p));
  return range_profile_at_velocity(stitch(parts, p.coarse_bin_width()), v);
}

/// Width between the -3 dB crossings around the global peak, linearly
/// interpolated in dB. A side with no crossing runs to the profile edge.
inline double mainlobe_width_3db(const FineRangeProfile& prof) {
  const auto peak = prof.peak_index();
  const double level = prof.magnitude_db[peak] - 3.0;
  const auto& r = prof.ranges;
  const auto& m = prof.magnitude_db;

  auto crossing = [&](std::size_t inside, std::size_t outside) {
    const double t = (m[inside] - level) / (m[inside] - m[outside]);
    return r[inside] + t * (r[outside] - r[inside]);
  };

  double left = r.front();
  for (std::size_t i = peak; i > 0; --i) {
    if (m[i - 1] < level) {
      left = crossing(i, i - 1);
      break;
    }
  }
  double right = r.back();
  for (std::size_t i = peak; i + 1 < m.size(); ++i) {
    if (m[i + 1] < level) {
      right = crossing(i, i + 1);
      break;
    }
  }
  return right - left;
}

/// Median level of the profile samples farther than `exclusion_m` from the peak.
inline double off_peak_level_db(const FineRangeProfile& prof, double exclusion_m = 1.5) {
  const double at = prof.peak_range();
  std::vector<double> rest;
  for (std::size_t i = 0; i < prof.ranges.size(); ++i)
    if (std::abs(prof.ranges[i] - at) > exclusion_m) rest.push_back(prof.magnitude_db[i]);
  if (rest.empty()) throw InvalidInput("no profile samples outside the exclusion zone");
  auto mid = rest.begin() + static_cast<std::ptrdiff_t>(rest.size() / 2);
  std::nth_element(rest.begin(), mid, rest.end());
  if (rest.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(rest.begin(), mid);
  return 0.5 * (lo + hi);
}

struct TargetEstimate {
  int coarse_bin = 0;
  double coarse_range = 0.0;
  double eps = 0.0;
  double range = 0.0;
  double velocity = 0.0;
};

/// Coarse bin from the non-coherent range spectrum, then (v, eps) by grid search.
inline TargetEstimate locate_target(const ChirpFrame& frame, const ChirpParams& p, std::span<const double> v_grid,
                                    int points_per_bin = 0) {
  const auto rfft = range_fft(frame);
  const Eigen::VectorXd energy = rfft.cwiseAbs2().rowwise().sum();
  Eigen::Index bin = 0;
  energy.maxCoeff(&bin);
  const auto eps = default_eps_grid(p, points_per_bin);
  const auto s = fine_range_doppler(rfft, frame.hops, static_cast<int>(bin), v_grid, eps, p);
  Eigen::Index vi = 0, ei = 0;
  s.db.maxCoeff(&vi, &ei);
  TargetEstimate t;
  t.coarse_bin = static_cast<int>(bin);
  t.coarse_range = bin * p.coarse_bin_width();
  t.eps = eps[static_cast<std::size_t>(ei)];
  t.range = t.coarse_range + t.eps;
  t.velocity = v_grid[static_cast<std::size_t>(vi)];
  return t;
}

// ---------------------------------------------------------------------------
// Frame dump: 32-byte header ("HOPF", u16 version, u32 N_s, u32 K, f64 f_s,
// 10 reserved bytes) then little-endian complex64 samples, row-major N_s x K.

inline constexpr std::uint16_t kFrameDumpVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw InvalidInput("truncated frame dump");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_frame_dump(const std::filesystem::path& path, const ChirpFrame& frame, const ChirpParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os.write("HOPF", 4);
  detail::put_le<std::uint16_t>(os, kFrameDumpVersion);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(frame.samples_per_chirp()));
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(frame.chirps()));
  detail::put_le<double>(os, p.f_s);
  const char reserved[10] = {};
  os.write(reserved, sizeof reserved);
  for (int i = 0; i < frame.samples_per_chirp(); ++i)
    for (int k = 0; k < frame.chirps(); ++k) {
      detail::put_le<float>(os, static_cast<float>(frame.samples(i, k).real()));
      detail::put_le<float>(os, static_cast<float>(frame.samples(i, k).imag()));
    }

  auto side = path;
  side += ".hops.csv";
  std::ofstream cs(side);
  if (!cs) throw std::runtime_error("cannot open " + side.string());
  cs << "k,f_k_hz\n";
  char buf[64];
  for (int k = 0; k < frame.chirps(); ++k) {
    std::snprintf(buf, sizeof buf, "%d,%.1f\n", k, p.f_c + frame.hops[k]);
    cs << buf;
  }
  if (!os || !cs) throw std::runtime_error("write failed for " + path.string());
}

struct FrameDump {
  double f_s = 0.0;
  Eigen::MatrixXcf samples;
};

inline FrameDump read_frame_dump(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HOPF", 4) != 0) throw InvalidInput("not a HOPF frame dump");
  const auto version = detail::get_le<std::uint16_t>(is);
  if (version != kFrameDumpVersion) throw InvalidInput("unsupported frame dump version");
  const auto n = detail::get_le<std::uint32_t>(is);
  const auto k = detail::get_le<std::uint32_t>(is);
  FrameDump d;
  d.f_s = detail::get_le<double>(is);
  is.ignore(10);
  d.samples.resize(n, k);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < k; ++j) {
      const float re = detail::get_le<float>(is);
      const float im = detail::get_le<float>(is);
      d.samples(i, j) = {re, im};
    }
  return d;
}

}  // namespace hopsim::signal
