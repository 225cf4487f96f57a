#pragma once

// Frame layout shared by transmitter and receivers, and synthesis of one
// complete simulated frame (bits, symbols, channel, observation).

#include <cstdint>
#include <vector>

#include "bpmf/gmsg.hpp"
#include "bpmf/grid.hpp"
#include "bpmf/phy.hpp"
#include "bpmf/txchain.hpp"

namespace bpmf {

enum class Role : std::uint8_t { Data, Pilot, Silent };

/// Every pilot carries the same unit-energy point.
inline const cplx kPilotSymbol{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};

inline constexpr std::uint64_t kInterleaverSeedBase = 0x5eed;

struct LinkParams {
  std::size_t m_ant = 4;
  std::size_t n_users = 2;
  std::size_t k = 256;
  std::size_t kp = 16;
  std::size_t l_taps = 8;
  Constellation::Kind modulation = Constellation::Kind::Qpsk;
  CodeConfig code{};
};

/// Subcarriers owned by no user's pilot set carry data for every user, in
/// ascending subcarrier order.
class FrameLayout {
 public:
  explicit FrameLayout(const LinkParams& p)
      : params_(p),
        pilots_(make_pilot_pattern(p.n_users, p.k, p.kp)),
        constellation_(Constellation::make(p.modulation)),
        code_(p.code),
        roles_(p.n_users, p.k, Role::Data) {
    if (p.l_taps == 0 || p.l_taps > p.k) throw std::invalid_argument("FrameLayout: need 1 <= L <= K");
    std::vector<bool> is_pilot(p.k, false);
    for (std::size_t n = 0; n < p.n_users; ++n)
      for (std::size_t kk : pilots_.sets[n]) {
        is_pilot[kk] = true;
        for (std::size_t other = 0; other < p.n_users; ++other)
          roles_(other, kk) = other == n ? Role::Pilot : Role::Silent;
      }
    for (std::size_t kk = 0; kk < p.k; ++kk)
      if (!is_pilot[kk]) data_subcarriers_.push_back(kk);
    coded_len_ = data_subcarriers_.size() * constellation_.bits_per_symbol();
    if (coded_len_ > 0) {
      if (coded_len_ % 2 != 0 || coded_len_ / 2 <= code_.memory())
        throw std::invalid_argument("FrameLayout: data capacity too small for the code");
      info_len_ = coded_len_ / 2 - code_.memory();
    }
    for (std::size_t n = 0; n < p.n_users; ++n)
      interleavers_.emplace_back(coded_len_, kInterleaverSeedBase + n);
  }

  const LinkParams& params() const { return params_; }
  std::size_t m_ant() const { return params_.m_ant; }
  std::size_t n_users() const { return params_.n_users; }
  std::size_t k() const { return params_.k; }
  std::size_t l_taps() const { return params_.l_taps; }
  const PilotPattern& pilots() const { return pilots_; }
  const Constellation& constellation() const { return constellation_; }
  const ConvCode& code() const { return code_; }
  const Interleaver& interleaver(std::size_t n) const { return interleavers_[n]; }
  Role role(std::size_t n, std::size_t k) const { return roles_(n, k); }
  const std::vector<std::size_t>& data_subcarriers() const { return data_subcarriers_; }
  std::size_t data_symbols() const { return data_subcarriers_.size(); }
  std::size_t coded_len() const { return coded_len_; }
  std::size_t info_len() const { return info_len_; }
  /// Nominal rate used for Eb/N0 bookkeeping.
  static constexpr double code_rate() { return 0.5; }

  /// Noise precision for an Eb/N0 where Eb is the energy per information bit
  /// collected over all receive antennas (E|h|^2 = 1, unit-energy symbols).
  double noise_precision(double ebn0_db) const {
    return ebn0_to_precision(ebn0_db, code_rate(), constellation_.bits_per_symbol()) /
           static_cast<double>(params_.m_ant);
  }

 private:
  LinkParams params_;
  PilotPattern pilots_;
  Constellation constellation_;
  ConvCode code_;
  Grid2<Role> roles_;
  std::vector<std::size_t> data_subcarriers_;
  std::vector<Interleaver> interleavers_;
  std::size_t coded_len_ = 0;
  std::size_t info_len_ = 0;
};

struct Frame {
  std::vector<std::vector<Bit>> info_bits;  ///< per user
  Grid2<cplx> x;                            ///< (n, k), pilots inserted
  ChannelRealization channel;
  Observation obs;
};

/// Transmit symbol grid for the given per-user information bits.
inline Grid2<cplx> build_symbol_grid(const FrameLayout& layout,
                                     const std::vector<std::vector<Bit>>& info_bits) {
  Grid2<cplx> x(layout.n_users(), layout.k(), cplx{0.0, 0.0});
  for (std::size_t n = 0; n < layout.n_users(); ++n) {
    for (std::size_t kk : layout.pilots().sets[n]) x(n, kk) = kPilotSymbol;
    if (layout.data_symbols() == 0) continue;
    const auto coded = layout.code().encode(info_bits[n]);
    const auto inter = layout.interleaver(n).interleave<Bit>(coded);
    const auto syms = map_symbols(inter, layout.constellation());
    for (std::size_t d = 0; d < syms.size(); ++d) x(n, layout.data_subcarriers()[d]) = syms[d];
  }
  return x;
}

/// Draw order from a fresh Rng(seed): info bits (user by user), channel, noise.
inline Frame simulate_frame(const FrameLayout& layout, double lambda, std::uint64_t seed) {
  Rng rng(seed);
  Frame f;
  f.info_bits.resize(layout.n_users());
  for (auto& bits : f.info_bits) {
    bits.resize(layout.info_len());
    for (auto& b : bits) b = static_cast<Bit>(rng() >> 63);
  }
  f.x = build_symbol_grid(layout, f.info_bits);
  f.channel = gen_channel(rng, layout.m_ant(), layout.n_users(), layout.k(), layout.l_taps());
  f.obs = transmit(f.x, f.channel, layout.pilots(), lambda, rng);
  return f;
}

inline double channel_nmse(const Grid3<cplx>& estimate, const Grid3<cplx>& truth) {
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < truth.data().size(); ++i) {
    err += std::norm(estimate.data()[i] - truth.data()[i]);
    ref += std::norm(truth.data()[i]);
  }
  return err / ref;
}

inline double to_db(double v) { return 10.0 * std::log10(v); }

}  // namespace bpmf
