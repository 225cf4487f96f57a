#pragma once

// Experiment description and its flat key-value text format.
//
//   # comment
//   m_antennas = 4
//   ebn0_grid  = 0, 1, 2, 3
//   receivers  = proposed, mfb, direct_mf
//
// One `key = value` pair per line; arrays are comma-separated. Keys that are
// omitted take their defaults. `damping = none` disables damping.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bpmf/errors.hpp"
#include "bpmf/frame.hpp"
#include "bpmf/gmsg.hpp"
#include "bpmf/txchain.hpp"

namespace bpmf {

enum class ReceiverId { Proposed, Mfb, DirectMf };

inline std::string_view receiver_name(ReceiverId id) {
  switch (id) {
    case ReceiverId::Proposed: return "proposed";
    case ReceiverId::Mfb: return "mfb";
    case ReceiverId::DirectMf: return "direct_mf";
  }
  return "?";
}

inline std::optional<ReceiverId> parse_receiver(std::string_view s) {
  if (s == "proposed") return ReceiverId::Proposed;
  if (s == "mfb") return ReceiverId::Mfb;
  if (s == "direct_mf") return ReceiverId::DirectMf;
  return std::nullopt;
}

inline std::vector<double> default_ebn0_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 16; ++i) g.push_back(i);
  return g;
}

struct SimConfig {
  std::size_t m_antennas = 4;
  std::size_t n_users = 2;
  std::size_t k_subcarriers = 256;
  std::size_t kp_pilots = 16;
  std::size_t l_taps = 8;
  Constellation::Kind modulation = Constellation::Kind::Qpsk;
  CodeConfig code{};
  int iterations = 15;
  std::vector<double> ebn0_grid = default_ebn0_grid();
  int frames_per_point = 240;
  std::uint64_t master_seed = 1;
  std::vector<ReceiverId> receivers{ReceiverId::Proposed, ReceiverId::Mfb, ReceiverId::DirectMf};
  std::optional<double> damping;
  DemapMode demapper = DemapMode::Exact;

  LinkParams link() const {
    return {m_antennas, n_users, k_subcarriers, kp_pilots, l_taps, modulation, code};
  }

  bool operator==(const SimConfig&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class Int>
Int parse_int(std::string_view key, std::string_view v, int base = 10) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out, base);
  if (r.ec != std::errc{} || r.ptr != end)
    throw ConfigParse("key '" + std::string(key) + "': bad integer '" + std::string(v) + "'");
  return out;
}

inline double parse_double(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw ConfigParse("key '" + std::string(key) + "': bad number '" + s + "'");
  return d;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Every violated invariant, each prefixed with the offending key.
inline std::vector<std::string> config_violations(const SimConfig& c) {
  std::vector<std::string> v;
  auto positive = [&](std::size_t x, const char* key) {
    if (x == 0) v.push_back(std::string(key) + ": must be >= 1");
  };
  positive(c.m_antennas, "m_antennas");
  positive(c.n_users, "n_users");
  positive(c.k_subcarriers, "k_subcarriers");
  positive(c.kp_pilots, "kp_pilots");
  positive(c.l_taps, "l_taps");
  if (c.l_taps > c.k_subcarriers) v.push_back("l_taps: must not exceed k_subcarriers");
  const std::size_t np = c.n_users * c.kp_pilots;
  if (np > 0 && c.k_subcarriers > 0) {
    if (np > c.k_subcarriers)
      v.push_back("kp_pilots: n_users*kp_pilots (" + std::to_string(np) + ") exceeds k_subcarriers");
    else if (c.k_subcarriers % np != 0)
      v.push_back("kp_pilots: k_subcarriers (" + std::to_string(c.k_subcarriers) +
                  ") must be divisible by n_users*kp_pilots (" + std::to_string(np) + ")");
    else {
      const unsigned bps = Constellation::make(c.modulation).bits_per_symbol();
      const std::size_t coded = (c.k_subcarriers - np) * bps;
      if (coded / 2 <= c.code.constraint_length - 1)
        v.push_back("kp_pilots: no room left for a coded data block");
    }
  }
  if (!is_known_good_code(c.code))
    v.push_back("code_generators: unsupported (constraint length, generator) pair");
  if (c.iterations < 1) v.push_back("iterations: must be >= 1");
  if (c.frames_per_point < 1) v.push_back("frames_per_point: must be >= 1");
  if (c.ebn0_grid.empty()) v.push_back("ebn0_grid: must not be empty");
  for (double e : c.ebn0_grid)
    if (std::isnan(e)) v.push_back("ebn0_grid: NaN entry");
  if (c.receivers.empty()) v.push_back("receivers: must not be empty");
  for (std::size_t i = 0; i < c.receivers.size(); ++i)
    for (std::size_t j = i + 1; j < c.receivers.size(); ++j)
      if (c.receivers[i] == c.receivers[j]) v.push_back("receivers: duplicate entry");
  if (c.damping && !(*c.damping > 0.0 && *c.damping <= 1.0)) v.push_back("damping: must lie in (0, 1]");
  return v;
}

inline void validate(const SimConfig& c) {
  const auto v = config_violations(c);
  if (v.empty()) return;
  std::string msg;
  for (const auto& s : v) msg += (msg.empty() ? "" : "; ") + s;
  throw ConfigInvalid(msg);
}

inline SimConfig parse_config(std::string_view text) {
  using namespace detail;
  SimConfig c;
  std::map<std::string, std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigParse("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigParse("line " + std::to_string(line_no) + ": empty key");
    if (!seen.emplace(key, std::string(val)).second)
      throw ConfigParse("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");

    if (key == "m_antennas") c.m_antennas = parse_int<std::size_t>(key, val);
    else if (key == "n_users") c.n_users = parse_int<std::size_t>(key, val);
    else if (key == "k_subcarriers") c.k_subcarriers = parse_int<std::size_t>(key, val);
    else if (key == "kp_pilots") c.kp_pilots = parse_int<std::size_t>(key, val);
    else if (key == "l_taps") c.l_taps = parse_int<std::size_t>(key, val);
    else if (key == "modulation") {
      if (val == "qpsk") c.modulation = Constellation::Kind::Qpsk;
      else if (val == "qam16") c.modulation = Constellation::Kind::Qam16;
      else throw ConfigParse("key 'modulation': expected qpsk or qam16");
    } else if (key == "code_constraint_length") c.code.constraint_length = parse_int<unsigned>(key, val);
    else if (key == "code_generators") {
      const auto parts = split_list(val);
      if (parts.size() != 2) throw ConfigParse("key 'code_generators': expected two octal values");
      c.code.generators = {parse_int<unsigned>(key, parts[0], 8), parse_int<unsigned>(key, parts[1], 8)};
    } else if (key == "iterations") c.iterations = parse_int<int>(key, val);
    else if (key == "ebn0_grid") {
      c.ebn0_grid.clear();
      for (auto p : split_list(val)) c.ebn0_grid.push_back(parse_double(key, p));
    } else if (key == "frames_per_point") c.frames_per_point = parse_int<int>(key, val);
    else if (key == "master_seed") c.master_seed = parse_int<std::uint64_t>(key, val);
    else if (key == "receivers") {
      c.receivers.clear();
      for (auto p : split_list(val)) {
        const auto id = parse_receiver(p);
        if (!id) throw ConfigParse("key 'receivers': unknown receiver '" + std::string(p) + "'");
        c.receivers.push_back(*id);
      }
    } else if (key == "damping") {
      if (val == "none") c.damping.reset();
      else c.damping = parse_double(key, val);
    } else if (key == "demapper") {
      if (val == "exact") c.demapper = DemapMode::Exact;
      else if (val == "maxlog") c.demapper = DemapMode::MaxLog;
      else throw ConfigParse("key 'demapper': expected exact or maxlog");
    } else {
      throw ConfigParse("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  validate(c);
  return c;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string serialize_config(const SimConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "m_antennas = " << c.m_antennas << "\n";
  o << "n_users = " << c.n_users << "\n";
  o << "k_subcarriers = " << c.k_subcarriers << "\n";
  o << "kp_pilots = " << c.kp_pilots << "\n";
  o << "l_taps = " << c.l_taps << "\n";
  o << "modulation = " << (c.modulation == Constellation::Kind::Qpsk ? "qpsk" : "qam16") << "\n";
  o << "code_constraint_length = " << c.code.constraint_length << "\n";
  o << "code_generators = " << std::oct << c.code.generators[0] << ", " << c.code.generators[1]
    << std::dec << "\n";
  o << "iterations = " << c.iterations << "\n";
  o << "ebn0_grid = ";
  for (std::size_t i = 0; i < c.ebn0_grid.size(); ++i)
    o << (i ? ", " : "") << format_double(c.ebn0_grid[i]);
  o << "\n";
  o << "frames_per_point = " << c.frames_per_point << "\n";
  o << "master_seed = " << c.master_seed << "\n";
  o << "receivers = ";
  for (std::size_t i = 0; i < c.receivers.size(); ++i) o << (i ? ", " : "") << receiver_name(c.receivers[i]);
  o << "\n";
  o << "damping = " << (c.damping ? format_double(*c.damping) : std::string("none")) << "\n";
  o << "demapper = " << (c.demapper == DemapMode::Exact ? "exact" : "maxlog") << "\n";
  return o.str();
}

}  // namespace bpmf
