#pragma once

// Monte-Carlo orchestration: per-frame seeding, parallel trials, the
// line-delimited results file and its CSV summary.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "bpmf/baselines.hpp"
#include "bpmf/config.hpp"
#include "bpmf/errors.hpp"
#include "bpmf/frame.hpp"
#include "bpmf/receiver.hpp"

namespace bpmf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// seed = splitmix64(splitmix64(master ^ splitmix64(snr_index)) ^ frame_index)
inline std::uint64_t frame_seed(std::uint64_t master, std::uint64_t snr_index, std::uint64_t frame_index) {
  return splitmix64(splitmix64(master ^ splitmix64(snr_index)) ^ frame_index);
}

/// One line of the results file. Field order on disk:
///   receiver ebn0_index ebn0_db frame bit_errors info_bits frame_error nmse_db lambda_hat lambda_true wall_ms
struct TrialRecord {
  std::string receiver;
  std::size_t ebn0_index = 0;
  double ebn0_db = 0.0;
  std::size_t frame = 0;
  long bit_errors = 0;
  long info_bits = 0;
  bool frame_error = false;
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  double lambda_hat = 0.0;
  double lambda_true = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kResultsHeader =
    "# receiver ebn0_index ebn0_db frame bit_errors info_bits frame_error nmse_db lambda_hat "
    "lambda_true wall_ms";

inline std::string format_record(const TrialRecord& r) {
  using detail::format_double;
  std::ostringstream o;
  o << r.receiver << ' ' << r.ebn0_index << ' ' << format_double(r.ebn0_db) << ' ' << r.frame << ' '
    << r.bit_errors << ' ' << r.info_bits << ' ' << (r.frame_error ? 1 : 0) << ' '
    << format_double(r.nmse_db) << ' ' << format_double(r.lambda_hat) << ' '
    << format_double(r.lambda_true) << ' ' << format_double(r.wall_ms);
  return o.str();
}

inline TrialRecord parse_record(const std::string& line) {
  std::istringstream in(line);
  TrialRecord r;
  std::string fields[11];
  for (auto& f : fields)
    if (!(in >> f)) throw MalformedResults("too few fields in '" + line + "'");
  std::string extra;
  if (in >> extra) throw MalformedResults("too many fields in '" + line + "'");
  auto num = [&](const std::string& s) {
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw MalformedResults("bad number '" + s + "'");
    return d;
  };
  auto integer = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const long v = std::stol(s, &used);
      if (used != s.size()) throw MalformedResults("bad integer '" + s + "'");
      return v;
    } catch (const std::logic_error&) {
      throw MalformedResults("bad integer '" + s + "'");
    }
  };
  r.receiver = fields[0];
  if (!parse_receiver(r.receiver)) throw MalformedResults("unknown receiver '" + r.receiver + "'");
  r.ebn0_index = static_cast<std::size_t>(integer(fields[1]));
  r.ebn0_db = num(fields[2]);
  r.frame = static_cast<std::size_t>(integer(fields[3]));
  r.bit_errors = integer(fields[4]);
  r.info_bits = integer(fields[5]);
  const long fe = integer(fields[6]);
  if (fe != 0 && fe != 1) throw MalformedResults("frame_error must be 0 or 1");
  r.frame_error = fe == 1;
  r.nmse_db = num(fields[7]);
  r.lambda_hat = num(fields[8]);
  r.lambda_true = num(fields[9]);
  r.wall_ms = num(fields[10]);
  if (r.bit_errors < 0 || r.bit_errors > r.info_bits) throw MalformedResults("bit_errors out of range");
  return r;
}

inline std::vector<TrialRecord> read_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results '" + path + "'");
  std::vector<TrialRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(parse_record(std::string(t)));
  }
  return out;
}

/// Runs every configured receiver on one simulated frame (paired comparison).
inline std::vector<TrialRecord> run_frame(const SimConfig& cfg, const FrameLayout& layout,
                                          std::size_t ebn0_index, std::size_t frame_index) {
  const double ebn0 = cfg.ebn0_grid[ebn0_index];
  const double lambda = layout.noise_precision(ebn0);
  const Frame f = simulate_frame(layout, lambda, frame_seed(cfg.master_seed, ebn0_index, frame_index));
  ReceiverOptions opts;
  opts.iterations = cfg.iterations;
  opts.demap = cfg.demapper;
  opts.damping = cfg.damping;
  const long bits = static_cast<long>(layout.info_len() * layout.n_users());

  std::vector<TrialRecord> out;
  for (ReceiverId id : cfg.receivers) {
    TrialRecord r;
    r.receiver = std::string(receiver_name(id));
    r.ebn0_index = ebn0_index;
    r.ebn0_db = ebn0;
    r.frame = frame_index;
    r.info_bits = bits;
    r.lambda_true = lambda;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::vector<Bit>> decoded;
    if (id == ReceiverId::Mfb) {
      decoded = mfb_receiver(f.obs, layout, {&f.channel.freq, lambda, &f.x}, cfg.demapper);
      r.lambda_hat = lambda;
    } else {
      const auto res = id == ReceiverId::Proposed ? run_receiver(f.obs, layout, opts)
                                                  : direct_mf_receiver(f.obs, layout, opts);
      decoded = res.bits;
      r.lambda_hat = res.lambda_hat;
      r.nmse_db = to_db(channel_nmse(res.h_hat, f.channel.freq));
    }
    const auto t1 = std::chrono::steady_clock::now();
    r.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    r.bit_errors = count_bit_errors(decoded, f.info_bits);
    r.frame_error = r.bit_errors > 0;
    out.push_back(std::move(r));
  }
  return out;
}

/// All (snr, frame) tasks across `workers` threads. `sink` is called under a
/// lock with each completed frame's records, in completion order.
inline std::vector<TrialRecord> run_trials(
    const SimConfig& cfg, unsigned workers,
    const std::function<void(const std::vector<TrialRecord>&)>& sink = {}) {
  validate(cfg);
  const FrameLayout layout(cfg.link());
  const std::size_t frames = static_cast<std::size_t>(cfg.frames_per_point);
  const std::size_t n_tasks = cfg.ebn0_grid.size() * frames;
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::vector<TrialRecord> all;
  std::exception_ptr failure;
  auto work = [&] {
    try {
      for (std::size_t t = next++; t < n_tasks; t = next++) {
        auto recs = run_frame(cfg, layout, t / frames, t % frames);
        std::lock_guard lock(mu);
        if (sink) sink(recs);
        all.insert(all.end(), recs.begin(), recs.end());
      }
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
      next = n_tasks;
    }
  };
  workers = std::max(1u, workers);
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
  return all;
}

struct SummaryRow {
  std::string receiver;
  double ebn0_db = 0.0;
  double ber = 0.0;
  double fer = 0.0;
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  double lambda_rel_err = std::numeric_limits<double>::quiet_NaN();
  long frames = 0;
  long bits = 0;
  long bit_errors = 0;
};

/// Per-(receiver, ebn0) aggregates, sorted by receiver name then Eb/N0.
/// Records are ordered by their indices before any floating-point sum, so the
/// result does not depend on completion order.
inline std::vector<SummaryRow> summarize(std::vector<TrialRecord> records) {
  std::sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.receiver, a.ebn0_db, a.ebn0_index, a.frame) <
           std::tie(b.receiver, b.ebn0_db, b.ebn0_index, b.frame);
  });
  std::vector<SummaryRow> rows;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    SummaryRow row;
    row.receiver = records[i].receiver;
    row.ebn0_db = records[i].ebn0_db;
    long frame_errors = 0, nmse_count = 0;
    double nmse_lin = 0.0, lam_err = 0.0;
    for (; j < records.size() && records[j].receiver == row.receiver && records[j].ebn0_db == row.ebn0_db; ++j) {
      const auto& r = records[j];
      row.frames += 1;
      row.bits += r.info_bits;
      row.bit_errors += r.bit_errors;
      frame_errors += r.frame_error ? 1 : 0;
      if (!std::isnan(r.nmse_db)) {
        nmse_lin += std::pow(10.0, r.nmse_db / 10.0);
        ++nmse_count;
      }
      lam_err += std::abs(r.lambda_hat - r.lambda_true) / r.lambda_true;
    }
    const double nf = static_cast<double>(row.frames);
    row.ber = row.bits > 0 ? static_cast<double>(row.bit_errors) / static_cast<double>(row.bits) : 0.0;
    row.fer = static_cast<double>(frame_errors) / nf;
    if (nmse_count > 0) row.nmse_db = to_db(nmse_lin / static_cast<double>(nmse_count));
    row.lambda_rel_err = lam_err / nf;
    rows.push_back(row);
    i = j;
  }
  return rows;
}

inline constexpr const char* kSummaryHeader = "receiver,ebn0_db,ber,fer,nmse_db,lambda_rel_err,frames,bits";

namespace detail {
inline std::string g6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}
}  // namespace detail

/// Numbers are printed with 6 significant digits; a missing NMSE (the genie
/// receiver estimates no channel) prints as `nan`.
inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  using detail::g6;
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    out += r.receiver + "," + g6(r.ebn0_db) + "," + g6(r.ber) + "," + g6(r.fer) + "," + g6(r.nmse_db) + "," +
           g6(r.lambda_rel_err) + "," + std::to_string(r.frames) + "," + std::to_string(r.bits) + "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct SweepOutput {
  std::filesystem::path results;
  std::filesystem::path summary;
  std::vector<SummaryRow> rows;
};

/// Writes <out_dir>/results.txt (appended as frames complete) and
/// <out_dir>/summary.csv.
inline SweepOutput run_sweep(const SimConfig& cfg, unsigned workers, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  SweepOutput out{out_dir / "results.txt", out_dir / "summary.csv", {}};
  std::ofstream results(out.results);
  if (!results) throw IoError("cannot write '" + out.results.string() + "'");
  results << kResultsHeader << "\n";
  auto records = run_trials(cfg, workers, [&](const std::vector<TrialRecord>& recs) {
    for (const auto& r : recs) results << format_record(r) << "\n";
    results.flush();
    if (!results) throw IoError("write failed for '" + out.results.string() + "'");
  });
  out.rows = summarize(std::move(records));
  write_text(out.summary, summary_csv(out.rows));
  return out;
}

}  // namespace bpmf
