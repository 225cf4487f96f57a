#pragma once

// Bit-level transmit chain and its soft inverse: terminated rate-1/2
// convolutional code with a BCJR decoder, seeded interleaver, Gray mapper
// and Gaussian-evidence demapper.
//
// LLR convention throughout: L = log P(b=0) / P(b=1).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bpmf/errors.hpp"
#include "bpmf/gmsg.hpp"
#include "bpmf/phy.hpp"

namespace bpmf {

using Bit = std::uint8_t;

inline constexpr double kLlrClamp = 30.0;

inline double clamp_llr(double l) {
  if (std::isnan(l)) return 0.0;
  return std::clamp(l, -kLlrClamp, kLlrClamp);
}

struct CodeConfig {
  unsigned constraint_length = 7;
  std::array<unsigned, 2> generators{0133, 0171};  // octal

  bool operator==(const CodeConfig&) const = default;
};

/// Known non-catastrophic rate-1/2 generator pairs (maximum free distance codes).
inline bool is_known_good_code(const CodeConfig& c) {
  static constexpr std::array<CodeConfig, 4> table{{
      {3, {05, 07}},
      {4, {015, 017}},
      {5, {023, 035}},
      {7, {0133, 0171}},
  }};
  return std::find(table.begin(), table.end(), c) != table.end();
}

/// Rate-1/2 feed-forward convolutional code, zero-terminated.
///
/// The shift register is reg = (u << (K-1)) | state, where bit K-2 of state is
/// the most recent past input. Generator g produces parity(reg & g), so the
/// MSB of each octal generator taps the current input.
class ConvCode {
 public:
  explicit ConvCode(CodeConfig cfg = {}) : cfg_(cfg) {
    if (cfg.constraint_length < 2 || cfg.constraint_length > 12)
      throw std::invalid_argument("ConvCode: unsupported constraint length");
    memory_ = cfg.constraint_length - 1;
    n_states_ = 1u << memory_;
    next_.resize(2 * n_states_);
    out_.resize(2 * n_states_);
    for (unsigned s = 0; s < n_states_; ++s)
      for (unsigned u = 0; u < 2; ++u) {
        const unsigned reg = (u << memory_) | s;
        next_[2 * s + u] = reg >> 1;
        const unsigned c0 = std::popcount(reg & cfg.generators[0]) & 1u;
        const unsigned c1 = std::popcount(reg & cfg.generators[1]) & 1u;
        out_[2 * s + u] = static_cast<std::uint8_t>((c0 << 1) | c1);
      }
  }

  const CodeConfig& config() const { return cfg_; }
  unsigned memory() const { return memory_; }
  unsigned n_states() const { return n_states_; }
  unsigned next_state(unsigned s, unsigned u) const { return next_[2 * s + u]; }
  /// Two output bits packed as (c0 << 1) | c1.
  unsigned output(unsigned s, unsigned u) const { return out_[2 * s + u]; }

  std::size_t coded_length(std::size_t info_len) const { return 2 * (info_len + memory_); }

  std::vector<Bit> encode(std::span<const Bit> info) const {
    std::vector<Bit> coded;
    coded.reserve(coded_length(info.size()));
    unsigned s = 0;
    auto step = [&](unsigned u) {
      const unsigned o = output(s, u);
      coded.push_back(static_cast<Bit>(o >> 1));
      coded.push_back(static_cast<Bit>(o & 1u));
      s = next_state(s, u);
    };
    for (Bit b : info) step(b & 1u);
    for (unsigned t = 0; t < memory_; ++t) step(0);
    return coded;
  }

  struct SisoOutput {
    std::vector<double> coded_extrinsic;  ///< per coded bit, clamped
    std::vector<double> info_posterior;   ///< a-posteriori LLR per info bit
    std::vector<Bit> info_bits;           ///< hard decisions
  };

  /// Forward-backward over the terminated trellis, in the probability domain
  /// with per-step normalisation (exact sum-product).
  SisoOutput decode_siso(std::span<const double> llrs) const {
    if (llrs.size() % 2 != 0 || llrs.size() < 2 * memory_)
      throw LengthMismatch("decode_siso: " + std::to_string(llrs.size()) +
                           " LLRs do not fit a terminated trellis");
    const std::size_t steps = llrs.size() / 2;
    const std::size_t info_len = steps - memory_;
    const unsigned S = n_states_;

    // p[t][c] = P(coded bit = c) up to a per-bit constant: exp(+-L/2).
    std::vector<std::array<double, 2>> p(llrs.size());
    for (std::size_t i = 0; i < llrs.size(); ++i) {
      const double h = 0.5 * clamp_llr(llrs[i]);
      p[i] = {std::exp(h), std::exp(-h)};
    }

    std::vector<double> alpha((steps + 1) * S, 0.0), beta((steps + 1) * S, 0.0);
    alpha[0] = 1.0;
    for (std::size_t t = 0; t < steps; ++t) {
      const double* a = &alpha[t * S];
      double* an = &alpha[(t + 1) * S];
      const unsigned umax = t < info_len ? 2 : 1;
      const auto& p0 = p[2 * t];
      const auto& p1 = p[2 * t + 1];
      for (unsigned s = 0; s < S; ++s) {
        if (a[s] == 0.0) continue;
        for (unsigned u = 0; u < umax; ++u) {
          const unsigned o = output(s, u);
          an[next_state(s, u)] += a[s] * p0[o >> 1] * p1[o & 1u];
        }
      }
      normalize(an, S);
    }
    beta[steps * S] = 1.0;
    for (std::size_t t = steps; t-- > 0;) {
      const double* bn = &beta[(t + 1) * S];
      double* b = &beta[t * S];
      const unsigned umax = t < info_len ? 2 : 1;
      const auto& p0 = p[2 * t];
      const auto& p1 = p[2 * t + 1];
      for (unsigned s = 0; s < S; ++s) {
        double acc = 0.0;
        for (unsigned u = 0; u < umax; ++u) {
          const unsigned o = output(s, u);
          acc += p0[o >> 1] * p1[o & 1u] * bn[next_state(s, u)];
        }
        b[s] = acc;
      }
      normalize(b, S);
    }

    SisoOutput out;
    out.coded_extrinsic.resize(llrs.size());
    out.info_posterior.resize(info_len);
    out.info_bits.resize(info_len);
    for (std::size_t t = 0; t < steps; ++t) {
      const double* a = &alpha[t * S];
      const double* bn = &beta[(t + 1) * S];
      const unsigned umax = t < info_len ? 2 : 1;
      const auto& p0 = p[2 * t];
      const auto& p1 = p[2 * t + 1];
      double e0[2] = {0.0, 0.0}, e1[2] = {0.0, 0.0}, app[2] = {0.0, 0.0};
      for (unsigned s = 0; s < S; ++s) {
        if (a[s] == 0.0) continue;
        for (unsigned u = 0; u < umax; ++u) {
          const unsigned o = output(s, u);
          const unsigned c0 = o >> 1, c1 = o & 1u;
          const double ab = a[s] * bn[next_state(s, u)];
          e0[c0] += ab * p1[c1];
          e1[c1] += ab * p0[c0];
          app[u] += ab * p0[c0] * p1[c1];
        }
      }
      out.coded_extrinsic[2 * t] = safe_log_ratio(e0[0], e0[1]);
      out.coded_extrinsic[2 * t + 1] = safe_log_ratio(e1[0], e1[1]);
      if (t < info_len) {
        const double l = safe_log_ratio(app[0], app[1]);
        out.info_posterior[t] = l;
        out.info_bits[t] = l < 0.0 ? 1 : 0;
      }
    }
    return out;
  }

 private:
  static void normalize(double* v, unsigned n) {
    double s = 0.0;
    for (unsigned i = 0; i < n; ++i) s += v[i];
    if (s > 0.0)
      for (unsigned i = 0; i < n; ++i) v[i] /= s;
  }

  static double safe_log_ratio(double a, double b) {
    if (a <= 0.0 && b <= 0.0) return 0.0;
    if (b <= 0.0) return kLlrClamp;
    if (a <= 0.0) return -kLlrClamp;
    return clamp_llr(std::log(a / b));
  }

  CodeConfig cfg_;
  unsigned memory_ = 0;
  unsigned n_states_ = 0;
  std::vector<unsigned> next_;
  std::vector<std::uint8_t> out_;
};

/// Pseudorandom permutation. Built by Fisher-Yates driven by
/// std::mt19937_64(seed): for i = n-1 down to 1, j = rng() % (i+1), swap(p[i], p[j]),
/// starting from the identity. interleave() emits out[i] = in[perm[i]].
class Interleaver {
 public:
  Interleaver() = default;
  Interleaver(std::size_t n, std::uint64_t seed) : perm_(n) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i-- > 1;) {
      const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(perm_[i], perm_[j]);
    }
  }

  std::size_t size() const { return perm_.size(); }
  const std::vector<std::size_t>& permutation() const { return perm_; }

  template <class T>
  std::vector<T> interleave(std::span<const T> in) const {
    check(in.size());
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[perm_[i]];
    return out;
  }

  template <class T>
  std::vector<T> deinterleave(std::span<const T> in) const {
    check(in.size());
    std::vector<T> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[perm_[i]] = in[i];
    return out;
  }

 private:
  void check(std::size_t n) const {
    if (n != perm_.size())
      throw LengthMismatch("interleaver of size " + std::to_string(perm_.size()) + " got " +
                           std::to_string(n));
  }

  std::vector<std::size_t> perm_;
};

inline std::vector<cplx> map_symbols(std::span<const Bit> bits, const Constellation& c) {
  const unsigned b = c.bits_per_symbol();
  if (bits.size() % b != 0)
    throw LengthMismatch(std::to_string(bits.size()) + " bits is not a multiple of " +
                         std::to_string(b));
  std::vector<cplx> out(bits.size() / b);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t q = 0;
    for (unsigned j = 0; j < b; ++j) q = (q << 1) | (bits[i * b + j] & 1u);
    out[i] = c.point(q);
  }
  return out;
}

enum class DemapMode { Exact, MaxLog };

/// Demapper evidence variances are floored here so a point-mass observation
/// still produces finite metrics.
inline constexpr double kEvidenceVarianceFloor = 1e-12;

/// Extrinsic bit LLRs from Gaussian symbol evidence CN(x; mean, var) and bit
/// priors. Output has evidence.size() * bits_per_symbol entries.
inline std::vector<double> demap(std::span<const GaussMsg> evidence,
                                 std::span<const double> prior_llrs, const Constellation& c,
                                 DemapMode mode = DemapMode::Exact) {
  const unsigned B = c.bits_per_symbol();
  const std::size_t Q = c.size();
  if (prior_llrs.size() != evidence.size() * B)
    throw LengthMismatch("demap: prior LLR count does not match evidence");
  std::vector<double> ext(prior_llrs.size());
  std::vector<double> total(Q);
  for (std::size_t i = 0; i < evidence.size(); ++i) {
    const GaussMsg& e = evidence[i];
    const double* lp = &prior_llrs[i * B];
    for (std::size_t q = 0; q < Q; ++q) {
      double metric = 0.0;
      if (!e.is_vacuous())
        metric = -std::norm(c.point(q) - e.mean) / std::max(e.variance, kEvidenceVarianceFloor);
      for (unsigned j = 0; j < B; ++j) {
        const double h = 0.5 * clamp_llr(lp[j]);
        metric += c.label_bit(q, j) ? -h : h;
      }
      total[q] = metric;
    }
    for (unsigned j = 0; j < B; ++j) {
      const double h = 0.5 * clamp_llr(lp[j]);
      double m0 = -kInf, m1 = -kInf;
      for (std::size_t q = 0; q < Q; ++q) {
        const unsigned bit = c.label_bit(q, j);
        const double v = total[q] - (bit ? -h : h);
        if (bit) m1 = std::max(m1, v);
        else m0 = std::max(m0, v);
      }
      double l = m0 - m1;
      if (mode == DemapMode::Exact) {
        double s0 = 0.0, s1 = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
          const unsigned bit = c.label_bit(q, j);
          const double v = total[q] - (bit ? -h : h);
          if (bit) s1 += std::exp(v - m1);
          else s0 += std::exp(v - m0);
        }
        l += std::log(s0) - std::log(s1);
      }
      ext[i * B + j] = clamp_llr(l);
    }
  }
  return ext;
}

/// gamma^s = prod_j P(b_j = label_j(s)), normalised, one message per symbol.
inline std::vector<DiscreteMsg> symbol_prior(std::span<const double> llrs, const Constellation& c) {
  const unsigned B = c.bits_per_symbol();
  const std::size_t Q = c.size();
  if (llrs.size() % B != 0) throw LengthMismatch("symbol_prior: LLR count not a multiple of bits/symbol");
  std::vector<DiscreteMsg> out(llrs.size() / B);
  std::vector<double> logw(Q);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double mx = -kInf;
    for (std::size_t q = 0; q < Q; ++q) {
      double lw = 0.0;
      for (unsigned j = 0; j < B; ++j) {
        const double h = 0.5 * clamp_llr(llrs[i * B + j]);
        lw += c.label_bit(q, j) ? -h : h;
      }
      logw[q] = lw;
      mx = std::max(mx, lw);
    }
    out[i].weights.resize(Q);
    for (std::size_t q = 0; q < Q; ++q) out[i].weights[q] = std::exp(logw[q] - mx);
    out[i].normalize();
  }
  return out;
}

}  // namespace bpmf
