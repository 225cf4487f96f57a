#pragma once

// Iterative MIMO-OFDM receiver built on a hybrid BP/MF rule at the hard
// constraint factors z_mnk = x_nk h_mnk: the factor's delta is first
// integrated against the incoming Gaussian message on z (BP-like), which
// leaves CN(x h; z_in, v_in), and the result is then exponentiated-expected
// against the belief of the other variable (MF-like).
//
// One outer iteration runs, in order:
//   1. interference messages toward every z (sum-node / observation side)
//   2. z-factor messages toward x, combined over receive antennas
//   3. demap -> SISO decode -> symbol priors -> symbol beliefs
//   4. z-factor messages toward h, tap-domain channel prior, channel beliefs
//   5. z beliefs and their extrinsic messages toward the sum node
//   6. noise-precision update

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bpmf/channel_prior.hpp"
#include "bpmf/errors.hpp"
#include "bpmf/frame.hpp"
#include "bpmf/gmsg.hpp"
#include "bpmf/grid.hpp"
#include "bpmf/phy.hpp"
#include "bpmf/txchain.hpp"

namespace bpmf {

inline constexpr double kLambdaCeiling = 1e12;
inline constexpr double kDegenerateScale = 1e-30;

inline double cap_variance(double v) { return std::min(v, kVarianceCeiling); }

// ---------------------------------------------------------------------------
// Message equations

/// Message toward z_mnk from the sum node for every user n at one (m, k):
/// mean y - sum_{n' != n} vec_z[n'].mean, variance noise_var + sum_{n' != n} vec_z[n'].variance.
/// Leave-one-out sums use prefix/suffix accumulation so one huge variance does
/// not swamp the others. Stored variances are capped at kVarianceCeiling.
inline void interference_column(cplx y, double noise_var, std::span<const GaussMsg> vec_z,
                                std::span<GaussMsg> out) {
  const std::size_t N = vec_z.size();
  cplx total_mean{0.0, 0.0};
  for (const auto& g : vec_z) total_mean += g.mean;
  // prefix[n] = sum of variances of users < n
  double prefix = 0.0;
  std::vector<double> suffix(N + 1, 0.0);
  for (std::size_t n = N; n-- > 0;) suffix[n] = suffix[n + 1] + vec_z[n].variance;
  for (std::size_t n = 0; n < N; ++n) {
    const double others = prefix + suffix[n + 1];
    out[n] = {y - (total_mean - vec_z[n].mean), cap_variance(noise_var + others)};
    prefix += vec_z[n].variance;
  }
}

/// MF-like message from f_z to x given the channel belief.
inline GaussMsg msg_fz_to_x(const GaussMsg& cev_z, const GaussMsg& h_belief) {
  const double energy = std::norm(h_belief.mean) + h_belief.variance;
  if (!(energy >= kDegenerateScale)) throw ZeroChannelBelief("|h|^2 + var_h is below 1e-30");
  return {std::conj(h_belief.mean) * cev_z.mean / energy, cap_variance(cev_z.variance / energy)};
}

/// Evidence for x_nk passed to soft demodulation: product over antennas.
inline GaussMsg combine_x(std::span<const GaussMsg> per_antenna) { return product(per_antenna); }

struct SymbolBelief {
  DiscreteMsg weights;
  cplx mean{0.0, 0.0};
  double variance = 0.0;
};

/// b(x = s) proportional to gamma^s CN(s; evidence).
inline SymbolBelief belief_x(const GaussMsg& evidence, const DiscreteMsg& prior,
                             const Constellation& c) {
  const std::size_t Q = c.size();
  SymbolBelief b;
  b.weights.weights.assign(Q, 0.0);
  std::vector<double> logw(Q, -kInf);
  double mx = -kInf;
  for (std::size_t q = 0; q < Q; ++q) {
    if (!(prior.weights[q] > 0.0)) continue;
    double lw = std::log(prior.weights[q]);
    if (!evidence.is_vacuous())
      lw -= std::norm(c.point(q) - evidence.mean) / std::max(evidence.variance, kEvidenceVarianceFloor);
    logw[q] = lw;
    mx = std::max(mx, lw);
  }
  if (!std::isfinite(mx)) throw EmptyBelief("symbol posterior has no mass");
  for (std::size_t q = 0; q < Q; ++q)
    b.weights.weights[q] = std::isinf(logw[q]) ? 0.0 : std::exp(logw[q] - mx);
  b.weights.normalize();
  const auto mom = discrete_moments(b.weights, c);
  b.mean = mom.mean;
  b.variance = mom.variance;
  return b;
}

/// MF-like message from f_z to h given the symbol belief moments. This is
/// also the message from h_mnk toward the channel prior.
inline GaussMsg msg_fz_to_h(const GaussMsg& cev_z, cplx x_mean, double x_var) {
  const double energy = std::norm(x_mean) + x_var;
  if (!(energy >= kDegenerateScale)) throw ZeroSymbolBelief("|x|^2 + var_x is below 1e-30");
  return {std::conj(x_mean) * cev_z.mean / energy, cap_variance(cev_z.variance / energy)};
}

inline GaussMsg belief_h(const GaussMsg& extr_in, const GaussMsg& extr_out) {
  return product(extr_in, extr_out);
}

/// Moments of z = x h under independent beliefs on x and h.
inline GaussMsg belief_z(cplx x_mean, double x_var, cplx h_mean, double h_var) {
  return {x_mean * h_mean,
          std::norm(x_mean) * h_var + std::norm(h_mean) * x_var + h_var * x_var};
}

inline DivideResult msg_z_extrinsic(const GaussMsg& z_belief, const GaussMsg& cev_z) {
  return divide_checked(z_belief, cev_z);
}

struct NoiseUpdate {
  double lambda = 1.0;
  bool clamped = false;
};

/// Mean-field update of the noise precision under the prior 1/lambda:
/// lambda = MK / sum_{m,k} (|y - tau|^2 + var_tau), tau = sum_n z.
inline NoiseUpdate noise_precision_update(const Observation& obs, const Grid3<GaussMsg>& z_belief) {
  const std::size_t M = obs.y.rows(), K = obs.y.cols(), N = z_belief.dim1();
  double resid = 0.0;
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) {
      cplx tau{0.0, 0.0};
      double var = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        tau += z_belief(m, n, k).mean;
        var += z_belief(m, n, k).variance;
      }
      resid += std::norm(obs.y(m, k) - tau) + var;
    }
  const double mk = static_cast<double>(M * K);
  if (!(resid > mk / kLambdaCeiling)) return {kLambdaCeiling, true};
  return {mk / resid, false};
}

/// Scale-aware start: half of MK / sum |y|^2.
inline double initial_noise_precision(const Observation& obs) {
  double power = 0.0;
  for (auto v : obs.y.data()) power += std::norm(v);
  const double mk = static_cast<double>(obs.y.data().size());
  if (!(power > 0.0)) return kLambdaCeiling;
  return std::min(0.5 * mk / power, kLambdaCeiling);
}

struct PilotEstimate {
  Grid3<GaussMsg> h;  ///< per (m, n, k) channel belief
  double lambda_hat = 1.0;
};

/// Channel estimate from pilots alone. Alternates the tap-prior solve with
/// the noise update restricted to pilot positions, starting from
/// initial_noise_precision. Every other user is silent at a pilot, so y / p
/// observes h_mnk directly.
inline PilotEstimate pilot_only_estimate(const Observation& obs, const FrameLayout& layout, int iterations = 10) {
  const std::size_t M = layout.m_ant(), N = layout.n_users(), K = layout.k();
  if (obs.y.rows() != M || obs.y.cols() != K) throw LengthMismatch("observation shape");
  const TapPrior prior(K, layout.l_taps());
  const double p2 = std::norm(kPilotSymbol);
  PilotEstimate est{Grid3<GaussMsg>(M, N, K), initial_noise_precision(obs)};
  std::vector<GaussMsg> o(K);
  for (int it = 0; it < iterations; ++it) {
    double resid = 0.0, count = 0.0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t m = 0; m < M; ++m) {
        std::fill(o.begin(), o.end(), GaussMsg::vacuous());
        for (std::size_t k : layout.pilots().sets[n])
          o[k] = {obs.y(m, k) / kPilotSymbol, 1.0 / (est.lambda_hat * p2)};
        const auto post = prior.posterior(o);
        for (std::size_t k = 0; k < K; ++k) est.h(m, n, k) = post.marginals[k];
        for (std::size_t k : layout.pilots().sets[n]) {
          const auto& g = post.marginals[k];
          resid += std::norm(obs.y(m, k) - g.mean * kPilotSymbol) + g.variance * p2;
          count += 1.0;
        }
      }
    est.lambda_hat = resid > 0.0 ? std::min(count / resid, kLambdaCeiling) : kLambdaCeiling;
  }
  return est;
}

// ---------------------------------------------------------------------------
// Receiver plumbing shared with the baselines

struct ReceiverOptions {
  int iterations = 15;
  DemapMode demap = DemapMode::Exact;
  std::optional<double> damping;           ///< weight of the new vec_z, in (0, 1]
  const Grid3<cplx>* known_channel = nullptr;  ///< genie channel; skips channel estimation
};

/// Optional ground truth used only for diagnostics.
struct Truth {
  const Grid3<cplx>* channel = nullptr;
  const std::vector<std::vector<Bit>>* info_bits = nullptr;
};

struct IterationRecord {
  int iteration = 0;
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
  double lambda_hat = 0.0;
  long bit_errors = -1;
  long info_bits = 0;
  double wall_ms = 0.0;
  double decoder_ms = 0.0;
  int degenerate = 0;  ///< clamp events during this iteration

  double ber() const {
    return bit_errors < 0 || info_bits == 0 ? std::numeric_limits<double>::quiet_NaN()
                                            : static_cast<double>(bit_errors) / static_cast<double>(info_bits);
  }
};

struct ReceiverResult {
  std::vector<std::vector<Bit>> bits;
  Grid3<cplx> h_hat;
  double lambda_hat = 0.0;
  std::vector<IterationRecord> diagnostics;
};

/// Demapper/decoder side of the graph for all users: turns Gaussian symbol
/// evidence into symbol beliefs, carrying decoder extrinsics between calls.
class SymbolDetector {
 public:
  explicit SymbolDetector(const FrameLayout& layout, DemapMode mode = DemapMode::Exact)
      : layout_(&layout), mode_(mode) {
    reset();
  }

  void reset() {
    const std::size_t N = layout_->n_users();
    prior_llr_.assign(N, std::vector<double>(layout_->coded_len(), 0.0));
    decoded_.assign(N, std::vector<Bit>(layout_->info_len(), 0));
    gamma_.assign(N, std::vector<DiscreteMsg>(layout_->data_symbols(),
                                              DiscreteMsg::uniform(layout_->constellation().size())));
  }

  /// evidence[d] belongs to data subcarrier d of user n. Writes the belief
  /// moments of every data position of n into x_belief. Returns decoder time (ms).
  double detect(std::size_t n, std::span<const GaussMsg> evidence, Grid2<Moments>& x_belief) {
    const auto& c = layout_->constellation();
    if (layout_->data_symbols() == 0) return 0.0;
    const auto ext = demap(evidence, prior_llr_[n], c, mode_);
    const auto& il = layout_->interleaver(n);
    const auto deint = il.deinterleave<double>(ext);
    const auto t0 = std::chrono::steady_clock::now();
    auto siso = layout_->code().decode_siso(deint);
    const auto t1 = std::chrono::steady_clock::now();
    prior_llr_[n] = il.interleave<double>(siso.coded_extrinsic);
    decoded_[n] = std::move(siso.info_bits);
    gamma_[n] = symbol_prior(prior_llr_[n], c);
    const auto& data = layout_->data_subcarriers();
    for (std::size_t d = 0; d < data.size(); ++d) {
      const auto b = belief_x(evidence[d], gamma_[n][d], c);
      x_belief(n, data[d]) = {b.mean, b.variance};
    }
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  }

  const std::vector<std::vector<Bit>>& decoded() const { return decoded_; }
  const std::vector<DiscreteMsg>& priors(std::size_t n) const { return gamma_[n]; }

 private:
  const FrameLayout* layout_;
  DemapMode mode_;
  std::vector<std::vector<double>> prior_llr_;  // decoder extrinsics, interleaved order
  std::vector<std::vector<Bit>> decoded_;
  std::vector<std::vector<DiscreteMsg>> gamma_;
};

/// Known value of x at pilot and silent positions; data positions start at
/// the uniform-prior moments.
inline Grid2<Moments> initial_symbol_beliefs(const FrameLayout& layout) {
  const auto uni = discrete_moments(DiscreteMsg::uniform(layout.constellation().size()),
                                    layout.constellation());
  Grid2<Moments> x(layout.n_users(), layout.k());
  for (std::size_t n = 0; n < layout.n_users(); ++n)
    for (std::size_t k = 0; k < layout.k(); ++k) {
      switch (layout.role(n, k)) {
        case Role::Pilot: x(n, k) = {kPilotSymbol, 0.0}; break;
        case Role::Silent: x(n, k) = {cplx{0.0, 0.0}, 0.0}; break;
        case Role::Data: x(n, k) = uni; break;
      }
    }
  return x;
}

inline bool known_positions_intact(const FrameLayout& layout, const Grid2<Moments>& x) {
  for (std::size_t n = 0; n < layout.n_users(); ++n)
    for (std::size_t k = 0; k < layout.k(); ++k) {
      const Role r = layout.role(n, k);
      if (r == Role::Data) continue;
      const cplx expect = r == Role::Pilot ? kPilotSymbol : cplx{0.0, 0.0};
      if (x(n, k).mean != expect || x(n, k).variance != 0.0) return false;
    }
  return true;
}

inline long count_bit_errors(const std::vector<std::vector<Bit>>& a,
                             const std::vector<std::vector<Bit>>& b) {
  long e = 0;
  for (std::size_t n = 0; n < a.size(); ++n)
    for (std::size_t i = 0; i < a[n].size(); ++i) e += (a[n][i] != b[n][i]) ? 1 : 0;
  return e;
}

// ---------------------------------------------------------------------------
// The hybrid receiver

struct ReceiverState {
  Grid3<GaussMsg> cev_z;       ///< sum node -> f_z
  Grid3<GaussMsg> vec_z;       ///< f_z -> sum node (extrinsic)
  Grid3<GaussMsg> z_belief;
  Grid2<Moments> x_belief;     ///< (n, k)
  Grid3<GaussMsg> h_extr_in;   ///< channel prior -> h
  Grid3<GaussMsg> h_extr_out;  ///< h -> channel prior
  Grid3<GaussMsg> h_belief;
  double lambda_hat = 1.0;
};

/// Every stored variance lies in [0, kVarianceCeiling]; h_extr_out may also
/// be vacuous (silent positions carry no channel information).
inline bool variances_in_range(const ReceiverState& s) {
  auto ok = [](const Grid3<GaussMsg>& g, bool allow_vacuous) {
    for (const auto& m : g.data()) {
      if (allow_vacuous && m.is_vacuous()) continue;
      if (!(m.variance >= 0.0 && m.variance <= kVarianceCeiling)) return false;
    }
    return true;
  };
  for (const auto& x : s.x_belief.data())
    if (!(x.variance >= 0.0 && x.variance <= kVarianceCeiling)) return false;
  return ok(s.cev_z, false) && ok(s.vec_z, false) && ok(s.z_belief, false) &&
         ok(s.h_extr_in, false) && ok(s.h_extr_out, true) && ok(s.h_belief, false);
}

class HybridReceiver {
 public:
  HybridReceiver(const FrameLayout& layout, ReceiverOptions opts = {})
      : layout_(&layout),
        opts_(opts),
        prior_(layout.k(), layout.l_taps()),
        detector_(layout, opts.demap) {
    if (opts.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
    if (opts.damping && !(*opts.damping > 0.0 && *opts.damping <= 1.0))
      throw std::invalid_argument("damping must lie in (0, 1]");
  }

  const ReceiverState& state() const { return st_; }
  const SymbolDetector& detector() const { return detector_; }

  /// Pilot-bootstrapped start: known symbols at pilot/silent positions,
  /// vacuous z extrinsics, then a pilot-driven channel estimate and the z
  /// extrinsics it implies.
  void initialize(const Observation& obs) {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    if (obs.y.rows() != M || obs.y.cols() != K) throw LengthMismatch("observation shape");
    st_ = ReceiverState{};
    st_.cev_z = Grid3<GaussMsg>(M, N, K);
    st_.vec_z = Grid3<GaussMsg>(M, N, K);
    st_.z_belief = Grid3<GaussMsg>(M, N, K);
    st_.h_extr_in = Grid3<GaussMsg>(M, N, K);
    st_.h_extr_out = Grid3<GaussMsg>(M, N, K);
    st_.h_belief = Grid3<GaussMsg>(M, N, K, GaussMsg{cplx{0.0, 0.0}, 1.0});
    st_.x_belief = initial_symbol_beliefs(*layout_);
    st_.lambda_hat = initial_noise_precision(obs);
    detector_.reset();
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
          if (layout_->role(n, k) == Role::Silent) st_.vec_z(m, n, k) = GaussMsg::point({0.0, 0.0});
    degenerate_ = 0;
    update_interference(obs);
    update_channel();
    update_z();
  }

  // step 1
  void update_interference(const Observation& obs) {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    const double noise_var = 1.0 / st_.lambda_hat;
    std::vector<GaussMsg> col(N), out(N);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t n = 0; n < N; ++n) col[n] = st_.vec_z(m, n, k);
        interference_column(obs.y(m, k), noise_var, col, out);
        for (std::size_t n = 0; n < N; ++n) st_.cev_z(m, n, k) = out[n];
      }
  }

  // steps 2 and 3; returns decoder time in ms
  double update_symbols() {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users();
    const auto& data = layout_->data_subcarriers();
    std::vector<GaussMsg> evidence(data.size()), per_ant(M);
    double dec_ms = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < data.size(); ++d) {
        const std::size_t k = data[d];
        for (std::size_t m = 0; m < M; ++m)
          per_ant[m] = msg_fz_to_x(st_.cev_z(m, n, k), st_.h_belief(m, n, k));
        evidence[d] = combine_x(per_ant);
      }
      dec_ms += detector_.detect(n, evidence, st_.x_belief);
    }
    return dec_ms;
  }

  // step 4
  void update_channel() {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    if (opts_.known_channel) {
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k)
            st_.h_belief(m, n, k) = GaussMsg::point((*opts_.known_channel)(m, n, k));
      return;
    }
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
          if (layout_->role(n, k) == Role::Silent) {
            st_.h_extr_out(m, n, k) = GaussMsg::vacuous();
            continue;
          }
          const auto& x = st_.x_belief(n, k);
          st_.h_extr_out(m, n, k) = msg_fz_to_h(st_.cev_z(m, n, k), x.mean, x.variance);
        }
        std::span<const GaussMsg> out(st_.h_extr_out.row(m, n), K);
        std::span<GaussMsg> in(st_.h_extr_in.row(m, n), K);
        degenerate_ += prior_.update(out, in);
        for (std::size_t k = 0; k < K; ++k)
          st_.h_belief(m, n, k) = belief_h(st_.h_extr_in(m, n, k), st_.h_extr_out(m, n, k));
      }
  }

  // step 5
  void update_z() {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    const double w = opts_.damping.value_or(1.0);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
          const auto& x = st_.x_belief(n, k);
          const auto& h = st_.h_belief(m, n, k);
          const GaussMsg zb = belief_z(x.mean, x.variance, h.mean, h.variance);
          st_.z_belief(m, n, k) = zb;
          const auto res = msg_z_extrinsic(zb, st_.cev_z(m, n, k));
          degenerate_ += res.degenerate ? 1 : 0;
          GaussMsg next = res.msg;
          GaussMsg& prev = st_.vec_z(m, n, k);
          if (w < 1.0 && !prev.is_vacuous()) {
            next.mean = w * next.mean + (1.0 - w) * prev.mean;
            next.variance = w * next.variance + (1.0 - w) * prev.variance;
          }
          next.variance = cap_variance(next.variance);
          prev = next;
        }
  }

  // step 6
  void update_noise(const Observation& obs) {
    const auto up = noise_precision_update(obs, st_.z_belief);
    degenerate_ += up.clamped ? 1 : 0;
    st_.lambda_hat = up.lambda;
  }

  ReceiverResult run(const Observation& obs, const Truth& truth = {}) {
    initialize(obs);
    ReceiverResult res;
    for (int it = 1; it <= opts_.iterations; ++it) {
      degenerate_ = 0;
      const auto t0 = std::chrono::steady_clock::now();
      update_interference(obs);
      const double dec_ms = update_symbols();
      update_channel();
      update_z();
      update_noise(obs);
      const auto t1 = std::chrono::steady_clock::now();
      if (!known_positions_intact(*layout_, st_.x_belief))
        throw std::logic_error("receiver modified a known symbol belief");
      IterationRecord rec;
      rec.iteration = it;
      rec.lambda_hat = st_.lambda_hat;
      rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      rec.decoder_ms = dec_ms;
      rec.degenerate = degenerate_;
      if (truth.channel) rec.nmse_db = to_db(channel_nmse(channel_estimate(), *truth.channel));
      if (truth.info_bits) {
        rec.bit_errors = count_bit_errors(detector_.decoded(), *truth.info_bits);
        rec.info_bits = static_cast<long>(layout_->info_len() * layout_->n_users());
      }
      res.diagnostics.push_back(rec);
    }
    res.bits = detector_.decoded();
    res.h_hat = channel_estimate();
    res.lambda_hat = st_.lambda_hat;
    return res;
  }

  Grid3<cplx> channel_estimate() const {
    const auto& hb = st_.h_belief;
    Grid3<cplx> h(hb.dim0(), hb.dim1(), hb.dim2());
    for (std::size_t i = 0; i < hb.data().size(); ++i) h.data()[i] = hb.data()[i].mean;
    return h;
  }

 private:
  const FrameLayout* layout_;
  ReceiverOptions opts_;
  TapPrior prior_;
  SymbolDetector detector_;
  ReceiverState st_;
  int degenerate_ = 0;
};

inline ReceiverResult run_receiver(const Observation& obs, const FrameLayout& layout,
                                   const ReceiverOptions& opts = {}, const Truth& truth = {}) {
  HybridReceiver rx(layout, opts);
  return rx.run(obs, truth);
}

}  // namespace bpmf
