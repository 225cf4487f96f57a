#pragma once

// Frequency-domain multiuser MIMO-OFDM world model:
//   y[m][k] = sum_n h[m][n][k] x[n][k] + w,   w ~ CN(0, 1/lambda).

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bpmf/errors.hpp"
#include "bpmf/gmsg.hpp"
#include "bpmf/grid.hpp"

namespace bpmf {

using Rng = std::mt19937_64;

/// Draw from CN(0, variance).
inline cplx complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
  const double re = nd(rng);
  const double im = nd(rng);
  return {re, im};
}

/// exp(-j 2 pi r / K) for r = 0..K-1.
inline std::vector<cplx> dft_twiddles(std::size_t k) {
  std::vector<cplx> tw(k);
  for (std::size_t r = 0; r < k; ++r) {
    const double a = -2.0 * M_PI * static_cast<double>(r) / static_cast<double>(k);
    tw[r] = {std::cos(a), std::sin(a)};
  }
  return tw;
}

struct PilotPattern {
  std::size_t n_users = 0;
  std::size_t k = 0;
  std::size_t kp = 0;
  std::vector<std::vector<std::size_t>> sets;  ///< per-user pilot subcarriers, ascending
};

/// User n gets { n*K/(N*Kp) + j*K/Kp : j = 0..Kp-1 }.
inline PilotPattern make_pilot_pattern(std::size_t n_users, std::size_t k, std::size_t kp) {
  if (n_users == 0 || k == 0 || kp == 0)
    throw InvalidPilotConfig("n_users, k and kp must be positive");
  if (n_users * kp > k) throw InvalidPilotConfig("n_users*kp exceeds k");
  if (k % (n_users * kp) != 0)
    throw InvalidPilotConfig("k (" + std::to_string(k) + ") is not divisible by n_users*kp (" +
                             std::to_string(n_users * kp) + ")");
  PilotPattern p{n_users, k, kp, {}};
  const std::size_t spacing = k / kp;
  const std::size_t stagger = k / (n_users * kp);
  p.sets.resize(n_users);
  for (std::size_t n = 0; n < n_users; ++n)
    for (std::size_t j = 0; j < kp; ++j) p.sets[n].push_back(n * stagger + j * spacing);
  return p;
}

struct ChannelRealization {
  Grid3<cplx> taps;  ///< (m, n, l)
  Grid3<cplx> freq;  ///< (m, n, k)

  std::size_t m_ant() const { return taps.dim0(); }
  std::size_t n_users() const { return taps.dim1(); }
  std::size_t l_taps() const { return taps.dim2(); }
  std::size_t k() const { return freq.dim2(); }
};

/// freq[m][n][k] = sum_l taps[m][n][l] exp(-j 2 pi k l / K).
inline Grid3<cplx> taps_to_freq(const Grid3<cplx>& taps, std::size_t k) {
  const auto tw = dft_twiddles(k);
  Grid3<cplx> freq(taps.dim0(), taps.dim1(), k);
  for (std::size_t m = 0; m < taps.dim0(); ++m)
    for (std::size_t n = 0; n < taps.dim1(); ++n)
      for (std::size_t kk = 0; kk < k; ++kk) {
        cplx acc{0.0, 0.0};
        for (std::size_t l = 0; l < taps.dim2(); ++l) acc += taps(m, n, l) * tw[(kk * l) % k];
        freq(m, n, kk) = acc;
      }
  return freq;
}

/// Uniform power-delay profile: taps i.i.d. CN(0, 1/L), so E|h|^2 = 1.
inline ChannelRealization gen_channel(Rng& rng, std::size_t m_ant, std::size_t n_users,
                                      std::size_t k, std::size_t l_taps) {
  if (l_taps == 0 || l_taps > k) throw std::invalid_argument("gen_channel: need 1 <= L <= K");
  ChannelRealization ch;
  ch.taps = Grid3<cplx>(m_ant, n_users, l_taps);
  const double v = 1.0 / static_cast<double>(l_taps);
  for (auto& t : ch.taps.data()) t = complex_normal(rng, v);
  ch.freq = taps_to_freq(ch.taps, k);
  return ch;
}

struct Observation {
  Grid2<cplx> y;  ///< (m, k)
  double noise_precision = kInf;
};

/// x is indexed (n, k). lambda = +inf gives a noiseless observation.
inline Observation transmit(const Grid2<cplx>& x, const ChannelRealization& ch,
                            const PilotPattern& pilots, double lambda, Rng& rng) {
  const std::size_t n_users = ch.n_users(), k = ch.k(), m_ant = ch.m_ant();
  if (x.rows() != n_users || x.cols() != k) throw LengthMismatch("symbol grid does not match channel");
  if (!(lambda > 0.0)) throw std::invalid_argument("transmit: noise precision must be positive");
  for (std::size_t n = 0; n < pilots.sets.size(); ++n)
    for (std::size_t kk : pilots.sets[n])
      for (std::size_t other = 0; other < n_users; ++other)
        if (other != n && x(other, kk) != cplx{0.0, 0.0})
          throw PilotViolation("user " + std::to_string(other) + " transmits on pilot subcarrier " +
                               std::to_string(kk) + " of user " + std::to_string(n));
  Observation obs{Grid2<cplx>(m_ant, k), lambda};
  const double noise_var = std::isinf(lambda) ? 0.0 : 1.0 / lambda;
  for (std::size_t m = 0; m < m_ant; ++m)
    for (std::size_t kk = 0; kk < k; ++kk) {
      cplx acc{0.0, 0.0};
      for (std::size_t n = 0; n < n_users; ++n) acc += ch.freq(m, n, kk) * x(n, kk);
      if (noise_var > 0.0) acc += complex_normal(rng, noise_var);
      obs.y(m, kk) = acc;
    }
  return obs;
}

/// Noise precision for a given Eb/N0 with unit symbol energy:
/// lambda = 1/N0 = (Eb/N0) * code_rate * bits_per_symbol.
inline double ebn0_to_precision(double ebn0_db, double code_rate, unsigned bits_per_symbol) {
  if (std::isinf(ebn0_db)) return ebn0_db > 0 ? kInf : 0.0;
  return std::pow(10.0, ebn0_db / 10.0) * code_rate * static_cast<double>(bits_per_symbol);
}

}  // namespace bpmf
