#pragma once

// Scenario files: a small TOML-like format with [run], [[radar]], [[target]] and
// [[link]] sections holding `key = value` lines. `#` starts a comment.
//
//   [run]
//   frames = 50
//   [[radar]]
//   T_pri = 20e-6
//   K = 512
//   policy = noregret
//   [[target]]
//   radar = 1
//   range = 20
//
// Radar, target and link references are 1-based in the file.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hopsim/errors.hpp"
#include "hopsim/sim.hpp"

namespace hopsim::config {

struct Entry {
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, Entry> entries;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

}  // namespace detail

/// Split text into sections. Keys before any header land in an unnamed section.
inline std::vector<Section> parse_document(const std::string& text) {
  static const std::set<std::string> kSections{"run", "radar", "target", "link"};
  static const std::set<std::string> kArrays{"radar", "target", "link"};
  std::vector<Section> out;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool have_run = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      const bool array = line.rfind("[[", 0) == 0;
      const std::string close = array ? "]]" : "]";
      if (line.size() < 2 * close.size() + 1 || line.compare(line.size() - close.size(), close.size(), close) != 0)
        throw ParseError(line_no, "", "malformed section header");
      const auto name = detail::trim(line.substr(close.size(), line.size() - 2 * close.size()));
      if (!kSections.count(name)) throw ParseError(line_no, name, "unknown section");
      if (array != static_cast<bool>(kArrays.count(name)))
        throw ParseError(line_no, name, array ? "use [" + name + "]" : "use [[" + name + "]]");
      if (name == "run") {
        if (have_run) throw ParseError(line_no, name, "duplicate [run] section");
        have_run = true;
      }
      out.push_back({name, line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "", "expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "", "empty key");
    if (value.empty()) throw ParseError(line_no, key, "empty value");
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') throw ParseError(line_no, key, "unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    if (out.empty()) throw ParseError(line_no, key, "key outside any section");
    auto& sec = out.back();
    if (sec.entries.count(key)) throw ParseError(line_no, key, "duplicate key");
    sec.entries[key] = {value, line_no};
  }
  return out;
}

namespace detail {

class Reader {
 public:
  Reader(const Section& s, std::string prefix) : s_(s), prefix_(std::move(prefix)) {}

  std::optional<double> number(const std::string& key) {
    auto e = take(key);
    if (!e) return std::nullopt;
    const char* b = e->value.data();
    const char* end = b + e->value.size();
    double v = 0.0;
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end || !std::isfinite(v)) throw ParseError(e->line, key, "expected a number, got '" + e->value + "'");
    return v;
  }

  std::optional<long long> integer(const std::string& key) {
    auto e = take(key);
    if (!e) return std::nullopt;
    const char* b = e->value.data();
    const char* end = b + e->value.size();
    long long v = 0;
    auto [p, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || p != end) throw ParseError(e->line, key, "expected an integer, got '" + e->value + "'");
    return v;
  }

  std::optional<bool> boolean(const std::string& key) {
    auto e = take(key);
    if (!e) return std::nullopt;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    throw ParseError(e->line, key, "expected true or false");
  }

  std::optional<std::string> text(const std::string& key) {
    auto e = take(key);
    if (!e) return std::nullopt;
    return e->value;
  }

  int line_of(const std::string& key) const {
    auto it = s_.entries.find(key);
    return it == s_.entries.end() ? s_.line : it->second.line;
  }

  /// Any key nobody asked for is an error.
  void finish() const {
    for (const auto& [k, e] : s_.entries)
      if (!used_.count(k)) throw ParseError(e.line, k, "unknown key in [" + s_.name + "]");
  }

  const std::string& prefix() const { return prefix_; }

 private:
  std::optional<Entry> take(const std::string& key) {
    used_.insert(key);
    auto it = s_.entries.find(key);
    if (it == s_.entries.end()) return std::nullopt;
    return it->second;
  }

  const Section& s_;
  std::string prefix_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Parse and validate. Syntax problems raise ParseError at the first offending
/// line; semantic problems are collected and raised together as ValidationError.
inline sim::ScenarioConfig parse_config(const std::string& text) {
  const auto sections = parse_document(text);
  sim::ScenarioConfig cfg;
  std::vector<std::string> failures;

  struct PendingTarget {
    long long radar;
    signal::Target target;
  };
  std::vector<PendingTarget> targets;
  std::vector<std::pair<long long, long long>> link_refs;

  for (const auto& sec : sections) {
    if (sec.name == "run") {
      detail::Reader r(sec, "run");
      if (auto v = r.integer("frames")) cfg.frames = static_cast<int>(*v);
      if (auto v = r.integer("episodes_per_frame")) cfg.episodes_per_frame = static_cast<int>(*v);
      if (auto v = r.integer("seed")) {
        if (*v < 0) throw ParseError(r.line_of("seed"), "seed", "seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(*v);
      }
      if (auto v = r.boolean("genie")) cfg.genie = *v;
      if (auto v = r.text("sinr_average")) {
        if (*v == "linear") cfg.averaging = signal::Averaging::linear;
        else if (*v == "log") cfg.averaging = signal::Averaging::log;
        else throw ParseError(r.line_of("sinr_average"), "sinr_average", "expected linear or log");
      }
      if (auto v = r.number("detection_factor")) cfg.detection_factor = *v;
      if (auto v = r.number("noise_power")) cfg.noise_power = *v;
      if (auto v = r.boolean("profile")) cfg.profile.enabled = *v;
      if (auto v = r.integer("profile_radar")) cfg.profile.radar = static_cast<int>(*v) - 1;
      if (auto v = r.integer("profile_points_per_bin")) cfg.profile.points_per_bin = static_cast<int>(*v);
      if (auto v = r.integer("profile_bin_lo")) cfg.profile.bin_lo = static_cast<int>(*v);
      if (auto v = r.integer("profile_bin_hi")) cfg.profile.bin_hi = static_cast<int>(*v);
      if (auto v = r.boolean("dump_frames")) cfg.keep_frame = *v;
      r.finish();
    } else if (sec.name == "radar") {
      const std::string tag = "radar[" + std::to_string(cfg.radars.size() + 1) + "]";
      detail::Reader r(sec, tag);
      sim::RadarConfig rc;
      rc.name = r.text("name").value_or("radar" + std::to_string(cfg.radars.size() + 1));
      auto required = [&](const std::string& key, std::optional<double> v) {
        if (!v) failures.push_back(tag + "." + key + " is required (line " + std::to_string(sec.line) + ")");
        return v.value_or(0.0);
      };
      rc.chirp.f_c = required("f_c", r.number("f_c"));
      rc.chirp.B_a = required("B_a", r.number("B_a"));
      auto a = r.integer("A");
      if (!a) failures.push_back(tag + ".A is required (line " + std::to_string(sec.line) + ")");
      rc.chirp.A = static_cast<int>(a.value_or(1));
      rc.chirp.T_pri = required("T_pri", r.number("T_pri"));
      auto k = r.integer("K");
      if (!k) failures.push_back(tag + ".K is required (line " + std::to_string(sec.line) + ")");
      rc.chirp.K = static_cast<int>(k.value_or(1));
      rc.chirp.T_a = r.number("T_a").value_or(0.8 * rc.chirp.T_pri);
      rc.chirp.f_s = r.number("f_s").value_or(20e6);
      if (auto p = r.text("policy")) {
        auto pol = sim::parse_policy(*p);
        if (!pol) throw ParseError(r.line_of("policy"), "policy", "expected uniform, nash, noregret or fixed");
        rc.policy = *pol;
      }
      if (auto v = r.number("c_eta")) rc.noregret.c_eta = *v;
      if (auto v = r.number("c_gamma")) rc.noregret.c_gamma = *v;
      if (auto v = r.number("kappa")) rc.noregret.kappa = *v;
      if (auto v = r.number("clip_low")) rc.noregret.clip_low = *v;
      if (auto v = r.number("clip_high")) rc.noregret.clip_high = *v;
      if (auto v = r.integer("explore_episodes")) rc.nash.explore_episodes = static_cast<int>(*v);
      if (auto v = r.number("nash_floor_db")) rc.nash.floor_db = *v;
      if (auto v = r.integer("fixed_subband")) rc.fixed_subband = static_cast<int>(*v);
      r.finish();
      cfg.radars.push_back(std::move(rc));
    } else if (sec.name == "target") {
      const std::string tag = "target[" + std::to_string(targets.size() + 1) + "]";
      detail::Reader r(sec, tag);
      PendingTarget t{r.integer("radar").value_or(1), {}};
      auto range = r.number("range");
      if (!range) failures.push_back(tag + ".range is required (line " + std::to_string(sec.line) + ")");
      t.target.r = range.value_or(1.0);
      t.target.rdot = r.number("velocity").value_or(0.0);
      t.target.snr_db = r.number("snr_db").value_or(20.0);
      r.finish();
      targets.push_back(t);
    } else if (sec.name == "link") {
      const std::string tag = "link[" + std::to_string(cfg.links.size() + 1) + "]";
      detail::Reader r(sec, tag);
      auto victim = r.integer("victim");
      auto source = r.integer("source");
      if (!victim) failures.push_back(tag + ".victim is required (line " + std::to_string(sec.line) + ")");
      if (!source) failures.push_back(tag + ".source is required (line " + std::to_string(sec.line) + ")");
      sim::LinkConfig l;
      l.victim = static_cast<int>(victim.value_or(1)) - 1;
      l.source = static_cast<int>(source.value_or(2)) - 1;
      l.inr_db = r.number("inr_db").value_or(30.0);
      r.finish();
      cfg.links.push_back(l);
    } else {
      throw ParseError(sec.line, sec.name, "unknown section");
    }
  }

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto idx = targets[i].radar;
    if (idx < 1 || idx > static_cast<long long>(cfg.radars.size())) {
      failures.push_back("target[" + std::to_string(i + 1) + "].radar = " + std::to_string(idx) + " does not name a radar");
      continue;
    }
    cfg.radars[static_cast<std::size_t>(idx - 1)].targets.push_back(targets[i].target);
  }

  if (failures.empty()) failures = cfg.problems();
  else for (auto& p : cfg.problems()) failures.push_back(std::move(p));
  if (!failures.empty()) throw ValidationError(std::move(failures));
  return cfg;
}

namespace detail {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Canonical text for a config, with every default spelled out.
inline std::string render_config(const sim::ScenarioConfig& cfg) {
  using detail::num;
  std::ostringstream os;
  os << "[run]\n"
     << "frames = " << cfg.frames << "\n"
     << "episodes_per_frame = " << cfg.episodes_per_frame << "\n"
     << "seed = " << cfg.seed << "\n"
     << "genie = " << (cfg.genie ? "true" : "false") << "\n"
     << "sinr_average = " << (cfg.averaging == signal::Averaging::linear ? "linear" : "log") << "\n"
     << "detection_factor = " << num(cfg.detection_factor) << "\n"
     << "noise_power = " << num(cfg.noise_power) << "\n"
     << "profile = " << (cfg.profile.enabled ? "true" : "false") << "\n"
     << "profile_radar = " << cfg.profile.radar + 1 << "\n"
     << "profile_points_per_bin = " << cfg.profile.points_per_bin << "\n"
     << "profile_bin_lo = " << cfg.profile.bin_lo << "\n"
     << "profile_bin_hi = " << cfg.profile.bin_hi << "\n"
     << "dump_frames = " << (cfg.keep_frame ? "true" : "false") << "\n";
  for (const auto& r : cfg.radars) {
    os << "\n[[radar]]\n"
       << "name = \"" << r.name << "\"\n"
       << "f_c = " << num(r.chirp.f_c) << "\n"
       << "B_a = " << num(r.chirp.B_a) << "\n"
       << "A = " << r.chirp.A << "\n"
       << "T_pri = " << num(r.chirp.T_pri) << "\n"
       << "T_a = " << num(r.chirp.T_a) << "\n"
       << "f_s = " << num(r.chirp.f_s) << "\n"
       << "K = " << r.chirp.K << "\n"
       << "policy = " << sim::to_string(r.policy) << "\n"
       << "c_eta = " << num(r.noregret.c_eta) << "\n"
       << "c_gamma = " << num(r.noregret.c_gamma) << "\n"
       << "kappa = " << num(r.noregret.kappa) << "\n"
       << "clip_low = " << num(r.noregret.clip_low) << "\n"
       << "clip_high = " << num(r.noregret.clip_high) << "\n"
       << "explore_episodes = " << r.nash.explore_episodes << "\n"
       << "nash_floor_db = " << num(r.nash.floor_db) << "\n"
       << "fixed_subband = " << r.fixed_subband << "\n";
  }
  for (std::size_t i = 0; i < cfg.radars.size(); ++i)
    for (const auto& t : cfg.radars[i].targets)
      os << "\n[[target]]\n"
         << "radar = " << i + 1 << "\n"
         << "range = " << num(t.r) << "\n"
         << "velocity = " << num(t.rdot) << "\n"
         << "snr_db = " << num(t.snr_db) << "\n";
  for (const auto& l : cfg.links)
    os << "\n[[link]]\n"
       << "victim = " << l.victim + 1 << "\n"
       << "source = " << l.source + 1 << "\n"
       << "inr_db = " << num(l.inr_db) << "\n";
  return os.str();
}

}  // namespace hopsim::config
