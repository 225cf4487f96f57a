#pragma once

// Exact Gaussian inference for one (receive antenna, user) channel under the
// tap-domain prior h = F_L t, t ~ CN(0, I/L), where F_L holds the first L
// columns of the K-point DFT matrix. Per-subcarrier messages are treated as
// independent Gaussian observations of h_k.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <span>
#include <vector>

#include "bpmf/errors.hpp"
#include "bpmf/gmsg.hpp"
#include "bpmf/phy.hpp"

namespace bpmf {

/// Observation variances below this are raised to it before weighting.
inline constexpr double kObservationVarianceFloor = 1e-15;

class TapPrior {
 public:
  TapPrior(std::size_t k, std::size_t l_taps, double regularization = 1e-10)
      : k_(k), l_(l_taps), reg_(regularization), tw_(dft_twiddles(k)) {
    if (l_taps == 0 || l_taps > k) throw std::invalid_argument("TapPrior: need 1 <= L <= K");
  }

  std::size_t k() const { return k_; }
  std::size_t l_taps() const { return l_; }

  struct Posterior {
    Eigen::VectorXcd tap_mean;
    Eigen::MatrixXcd tap_cov;
    std::vector<GaussMsg> marginals;  ///< per subcarrier
  };

  /// Tap posterior and per-subcarrier marginals given observations (vacuous
  /// entries carry no weight). Cost O(K L + L^3).
  Posterior posterior(std::span<const GaussMsg> obs) const {
    if (obs.size() != k_) throw LengthMismatch("TapPrior: expected one message per subcarrier");
    const std::size_t L = l_;
    const std::ptrdiff_t Ls = static_cast<std::ptrdiff_t>(L);

    // r[d + L-1] = sum_k w_k e^{+j2pi k d/K}, so (F^H W F)[l][l'] = r[l-l'].
    std::vector<cplx> r(2 * L - 1, cplx{0.0, 0.0});
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(Ls);
    for (std::size_t kk = 0; kk < k_; ++kk) {
      const GaussMsg& o = obs[kk];
      if (o.is_vacuous()) continue;
      const double w = 1.0 / std::max(o.variance, kObservationVarianceFloor);
      for (std::ptrdiff_t d = -(Ls - 1); d < Ls; ++d)
        r[static_cast<std::size_t>(d + Ls - 1)] += w * std::conj(twiddle(kk, d));
      const cplx wo = w * o.mean;
      for (std::size_t l = 0; l < L; ++l)
        b(static_cast<Eigen::Index>(l)) += std::conj(twiddle(kk, static_cast<std::ptrdiff_t>(l))) * wo;
    }

    Eigen::MatrixXcd A(Ls, Ls);
    for (std::ptrdiff_t l = 0; l < Ls; ++l)
      for (std::ptrdiff_t lp = 0; lp < Ls; ++lp)
        A(l, lp) = r[static_cast<std::size_t>(l - lp + Ls - 1)];
    A.diagonal().array() += static_cast<double>(L) + reg_;

    Eigen::LLT<Eigen::MatrixXcd> llt(A);
    if (llt.info() != Eigen::Success) throw SingularTapSystem("tap information matrix is not positive definite");
    Posterior post;
    post.tap_cov = llt.solve(Eigen::MatrixXcd::Identity(Ls, Ls));
    post.tap_mean = post.tap_cov * b;
    if (!post.tap_mean.allFinite()) throw SingularTapSystem("tap solve produced non-finite values");

    // c[d + L-1] = sum_{l-l'=d} Sigma[l][l'], so var_k = sum_d c_d e^{-j2pi k d/K}.
    std::vector<cplx> c(2 * L - 1, cplx{0.0, 0.0});
    for (std::ptrdiff_t l = 0; l < Ls; ++l)
      for (std::ptrdiff_t lp = 0; lp < Ls; ++lp)
        c[static_cast<std::size_t>(l - lp + Ls - 1)] += post.tap_cov(l, lp);

    post.marginals.resize(k_);
    for (std::size_t kk = 0; kk < k_; ++kk) {
      cplx mu{0.0, 0.0};
      for (std::size_t l = 0; l < L; ++l)
        mu += twiddle(kk, static_cast<std::ptrdiff_t>(l)) * post.tap_mean(static_cast<Eigen::Index>(l));
      double var = 0.0;
      for (std::ptrdiff_t d = -(Ls - 1); d < Ls; ++d)
        var += (c[static_cast<std::size_t>(d + Ls - 1)] * twiddle(kk, d)).real();
      post.marginals[kk] = {mu, std::max(var, 0.0)};
    }
    return post;
  }

  /// Extrinsic messages toward each h_k: posterior marginal divided by the
  /// incoming observation. Returns the number of clamped divisions.
  int update(std::span<const GaussMsg> extr_out, std::span<GaussMsg> extr_in) const {
    if (extr_in.size() != k_) throw LengthMismatch("TapPrior: output span has wrong length");
    const auto post = posterior(extr_out);
    int degenerate = 0;
    for (std::size_t kk = 0; kk < k_; ++kk) {
      const auto res = divide_checked(post.marginals[kk], extr_out[kk]);
      extr_in[kk] = res.msg;
      degenerate += res.degenerate ? 1 : 0;
    }
    return degenerate;
  }

 private:
  // e^{-j 2 pi k d / K} for possibly negative d.
  cplx twiddle(std::size_t kk, std::ptrdiff_t d) const {
    const auto K = static_cast<std::ptrdiff_t>(k_);
    std::ptrdiff_t idx = (static_cast<std::ptrdiff_t>(kk) * d) % K;
    if (idx < 0) idx += K;
    return tw_[static_cast<std::size_t>(idx)];
  }

  std::size_t k_;
  std::size_t l_;
  double reg_;
  std::vector<cplx> tw_;
};

}  // namespace bpmf
