#pragma once

// Reference receivers: the matched-filter bound (genie channel, noise
// precision and interference) and a direct mean-field receiver that applies
// MF to the observation factor CN(y; sum_n h x, 1/lambda) with no auxiliary
// z layer. Both share the transmit chain and channel prior with the hybrid
// receiver.

#include <chrono>
#include <vector>

#include "bpmf/channel_prior.hpp"
#include "bpmf/frame.hpp"
#include "bpmf/receiver.hpp"

namespace bpmf {

struct GenieInputs {
  const Grid3<cplx>* channel = nullptr;  ///< true h (m, n, k)
  double lambda = 1.0;                    ///< true noise precision
  const Grid2<cplx>* symbols = nullptr;   ///< true x (n, k)
};

/// Exact cancellation of every other user, maximal-ratio combining with the
/// true channel, one demap + decode pass.
inline std::vector<std::vector<Bit>> mfb_receiver(const Observation& obs, const FrameLayout& layout,
                                                  const GenieInputs& genie,
                                                  DemapMode mode = DemapMode::Exact) {
  const std::size_t M = layout.m_ant(), N = layout.n_users();
  const auto& h = *genie.channel;
  const auto& x = *genie.symbols;
  const auto& data = layout.data_subcarriers();
  std::vector<std::vector<Bit>> bits(N);
  std::vector<GaussMsg> evidence(data.size());
  const std::vector<double> flat(layout.coded_len(), 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    if (data.empty()) continue;
    for (std::size_t d = 0; d < data.size(); ++d) {
      const std::size_t k = data[d];
      cplx num{0.0, 0.0};
      double energy = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        cplx r = obs.y(m, k);
        for (std::size_t o = 0; o < N; ++o)
          if (o != n) r -= h(m, o, k) * x(o, k);
        num += std::conj(h(m, n, k)) * r;
        energy += std::norm(h(m, n, k));
      }
      if (!(energy >= kDegenerateScale)) {
        evidence[d] = GaussMsg::vacuous();
        continue;
      }
      const double var = std::isinf(genie.lambda) ? 0.0 : 1.0 / (genie.lambda * energy);
      evidence[d] = {num / energy, var};
    }
    const auto ext = demap(evidence, flat, layout.constellation(), mode);
    const auto deint = layout.interleaver(n).deinterleave<double>(ext);
    bits[n] = layout.code().decode_siso(deint).info_bits;
  }
  return bits;
}

/// Direct mean-field receiver. Same schedule, decoder, channel prior, noise
/// update and iteration count as the hybrid receiver; only the equalisation
/// messages differ:
///   x_nk <- precision lambda * sum_m (|h|^2 + var_h), mean sum_m h^* r / sum_m (|h|^2 + var_h)
///   h_mnk <- precision lambda * (|x|^2 + var_x),      mean x^* r / (|x|^2 + var_x)
/// with r = y_mk - sum_{n' != n} h_mn'k x_n'k formed from belief means.
class DirectMfReceiver {
 public:
  DirectMfReceiver(const FrameLayout& layout, ReceiverOptions opts = {})
      : layout_(&layout), opts_(opts), prior_(layout.k(), layout.l_taps()), detector_(layout, opts.demap) {
    if (opts.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  }

  /// Message toward x_nk from the M observation factors, given residuals
  /// r_m and channel beliefs h_m.
  static GaussMsg x_message(std::span<const cplx> residual, std::span<const GaussMsg> h, double lambda) {
    cplx num{0.0, 0.0};
    double energy = 0.0;
    for (std::size_t m = 0; m < h.size(); ++m) {
      num += std::conj(h[m].mean) * residual[m];
      energy += std::norm(h[m].mean) + h[m].variance;
    }
    if (!(energy >= kDegenerateScale)) throw ZeroChannelBelief("sum_m |h|^2 + var_h is below 1e-30");
    return {num / energy, 1.0 / (lambda * energy)};
  }

  static GaussMsg h_message(cplx residual, cplx x_mean, double x_var, double lambda) {
    const double energy = std::norm(x_mean) + x_var;
    if (!(energy >= kDegenerateScale)) throw ZeroSymbolBelief("|x|^2 + var_x is below 1e-30");
    return {std::conj(x_mean) * residual / energy, cap_variance(1.0 / (lambda * energy))};
  }

  const Grid3<GaussMsg>& h_belief() const { return h_belief_; }
  const Grid2<Moments>& x_belief() const { return x_; }
  double lambda_hat() const { return lambda_; }

  void initialize(const Observation& obs) {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    x_ = initial_symbol_beliefs(*layout_);
    lambda_ = initial_noise_precision(obs);
    h_extr_out_ = Grid3<GaussMsg>(M, N, K);
    h_extr_in_ = Grid3<GaussMsg>(M, N, K);
    h_belief_ = Grid3<GaussMsg>(M, N, K, GaussMsg{cplx{0.0, 0.0}, 1.0});
    detector_.reset();
    // pilot-only channel estimate: other users are silent at a pilot, so r = y
    update_channel(obs, /*pilots_only=*/true);
  }

  ReceiverResult run(const Observation& obs, const Truth& truth = {}) {
    initialize(obs);
    ReceiverResult res;
    for (int it = 1; it <= opts_.iterations; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      const double dec_ms = update_symbols(obs);
      update_channel(obs, false);
      update_noise(obs);
      const auto t1 = std::chrono::steady_clock::now();
      IterationRecord rec;
      rec.iteration = it;
      rec.lambda_hat = lambda_;
      rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      rec.decoder_ms = dec_ms;
      if (truth.channel) rec.nmse_db = to_db(channel_nmse(channel_estimate(), *truth.channel));
      if (truth.info_bits) {
        rec.bit_errors = count_bit_errors(detector_.decoded(), *truth.info_bits);
        rec.info_bits = static_cast<long>(layout_->info_len() * layout_->n_users());
      }
      res.diagnostics.push_back(rec);
    }
    res.bits = detector_.decoded();
    res.h_hat = channel_estimate();
    res.lambda_hat = lambda_;
    return res;
  }

  Grid3<cplx> channel_estimate() const {
    Grid3<cplx> h(h_belief_.dim0(), h_belief_.dim1(), h_belief_.dim2());
    for (std::size_t i = 0; i < h_belief_.data().size(); ++i) h.data()[i] = h_belief_.data()[i].mean;
    return h;
  }

 private:
  // tau[m][k] = sum_n h x from current belief means
  Grid2<cplx> reconstruction() const {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    Grid2<cplx> tau(M, K, cplx{0.0, 0.0});
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) tau(m, k) += h_belief_(m, n, k).mean * x_(n, k).mean;
    return tau;
  }

  double update_symbols(const Observation& obs) {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users();
    const auto& data = layout_->data_subcarriers();
    const auto tau = reconstruction();
    const Grid2<Moments> x_prev = x_;
    std::vector<GaussMsg> evidence(data.size()), hs(M);
    std::vector<cplx> r(M);
    double dec_ms = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t d = 0; d < data.size(); ++d) {
        const std::size_t k = data[d];
        for (std::size_t m = 0; m < M; ++m) {
          hs[m] = h_belief_(m, n, k);
          r[m] = obs.y(m, k) - (tau(m, k) - hs[m].mean * x_prev(n, k).mean);
        }
        evidence[d] = x_message(r, hs, lambda_);
      }
      dec_ms += detector_.detect(n, evidence, x_);
    }
    return dec_ms;
  }

  void update_channel(const Observation& obs, bool pilots_only) {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    if (opts_.known_channel) {
      for (std::size_t m = 0; m < M; ++m)
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t k = 0; k < K; ++k)
            h_belief_(m, n, k) = GaussMsg::point((*opts_.known_channel)(m, n, k));
      return;
    }
    const auto tau = reconstruction();
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t k = 0; k < K; ++k) {
          const Role role = layout_->role(n, k);
          if (role == Role::Silent || (pilots_only && role != Role::Pilot)) {
            h_extr_out_(m, n, k) = GaussMsg::vacuous();
            continue;
          }
          const auto& x = x_(n, k);
          const cplx r = obs.y(m, k) - (tau(m, k) - h_belief_(m, n, k).mean * x.mean);
          h_extr_out_(m, n, k) = h_message(r, x.mean, x.variance, lambda_);
        }
        std::span<const GaussMsg> out(h_extr_out_.row(m, n), K);
        std::span<GaussMsg> in(h_extr_in_.row(m, n), K);
        prior_.update(out, in);
        for (std::size_t k = 0; k < K; ++k)
          h_belief_(m, n, k) = belief_h(h_extr_in_(m, n, k), h_extr_out_(m, n, k));
      }
  }

  void update_noise(const Observation& obs) {
    const std::size_t M = layout_->m_ant(), N = layout_->n_users(), K = layout_->k();
    Grid3<GaussMsg> zb(M, N, K);
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
          const auto& h = h_belief_(m, n, k);
          zb(m, n, k) = belief_z(x_(n, k).mean, x_(n, k).variance, h.mean, h.variance);
        }
    lambda_ = noise_precision_update(obs, zb).lambda;
  }

  const FrameLayout* layout_;
  ReceiverOptions opts_;
  TapPrior prior_;
  SymbolDetector detector_;
  Grid2<Moments> x_;
  Grid3<GaussMsg> h_extr_out_, h_extr_in_, h_belief_;
  double lambda_ = 1.0;
};

inline ReceiverResult direct_mf_receiver(const Observation& obs, const FrameLayout& layout,
                                         const ReceiverOptions& opts = {}, const Truth& truth = {}) {
  DirectMfReceiver rx(layout, opts);
  return rx.run(obs, truth);
}

}  // namespace bpmf
