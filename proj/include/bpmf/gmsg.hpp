#pragma once

// Scalar complex Gaussian and discrete message algebra.
//
// Messages are stored in variance form. A variance of +inf is a vacuous
// message (flat density) and acts as the identity of product(); a variance
// of 0 is a point mass.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bpmf/errors.hpp"

namespace bpmf {

using cplx = std::complex<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Largest variance ever stored by the receiver; also the near-vacuous
/// value returned when a division has non-positive precision.
inline constexpr double kVarianceCeiling = 1e12;
/// Divisions whose precision falls at or below this are clamped.
inline constexpr double kPrecisionFloor = 1e-12;

/// Circularly-symmetric complex Gaussian CN(x; mean, variance) with
/// E|x - mean|^2 = variance.
struct GaussMsg {
  cplx mean{0.0, 0.0};
  double variance = kInf;

  static GaussMsg vacuous() { return {}; }
  static GaussMsg point(cplx at) { return {at, 0.0}; }

  bool is_vacuous() const { return std::isinf(variance); }
  bool is_point() const { return variance == 0.0; }
  double precision() const { return is_vacuous() ? 0.0 : 1.0 / variance; }

  bool operator==(const GaussMsg&) const = default;
};

inline bool is_valid(const GaussMsg& g) {
  if (std::isnan(g.variance) || g.variance < 0.0) return false;
  if (!g.is_vacuous() && !(std::isfinite(g.mean.real()) && std::isfinite(g.mean.imag())))
    return false;
  return true;
}

/// Pointwise product of two Gaussian densities, renormalised.
inline GaussMsg product(const GaussMsg& a, const GaussMsg& b) {
  if (a.is_point()) return a;
  if (b.is_point()) return b;
  if (a.is_vacuous()) return b;
  if (b.is_vacuous()) return a;
  const double pa = 1.0 / a.variance;
  const double pb = 1.0 / b.variance;
  const double v = 1.0 / (pa + pb);
  return {v * (a.mean * pa + b.mean * pb), v};
}

/// Product over a whole list; empty input gives the vacuous message.
inline GaussMsg product(std::span<const GaussMsg> msgs) {
  double prec = 0.0;
  cplx weighted{0.0, 0.0};
  for (const auto& g : msgs) {
    if (g.is_point()) return g;
    if (g.is_vacuous()) continue;
    const double p = 1.0 / g.variance;
    prec += p;
    weighted += g.mean * p;
  }
  if (prec == 0.0) return GaussMsg::vacuous();
  const double v = 1.0 / prec;
  return {weighted * v, v};
}

struct DivideResult {
  GaussMsg msg;
  bool degenerate = false;  ///< the variance clamp fired
};

/// num / den with the variance clamp: if the resulting precision is at or
/// below kPrecisionFloor the result is (num.mean, kVarianceCeiling) and
/// `degenerate` is set.
inline DivideResult divide_checked(const GaussMsg& num, const GaussMsg& den) {
  if (den.is_vacuous()) return {num, false};
  if (num.is_point()) return {num, false};
  const double pden = den.is_point() ? kInf : 1.0 / den.variance;
  const double pnum = num.precision();
  const double prec = pnum - pden;
  if (!(prec > kPrecisionFloor)) return {{num.mean, kVarianceCeiling}, true};
  const double v = std::min(1.0 / prec, kVarianceCeiling);
  return {{v * (num.mean * pnum - den.mean * pden), v}, false};
}

inline GaussMsg divide(const GaussMsg& num, const GaussMsg& den) {
  return divide_checked(num, den).msg;
}

/// Log-density of CN(x; g.mean, g.variance); g must be finite and non-point.
inline double log_pdf(const GaussMsg& g, cplx x) {
  return -std::log(M_PI * g.variance) - std::norm(x - g.mean) / g.variance;
}

/// Moment-match a weighted point set onto the Gaussian family.
inline GaussMsg project_gaussian(std::span<const std::pair<cplx, double>> weighted_points) {
  double total = 0.0;
  for (const auto& [x, w] : weighted_points) {
    if (w < 0.0) throw std::invalid_argument("project_gaussian: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw EmptyBelief("all projection weights are zero");
  cplx mean{0.0, 0.0};
  for (const auto& [x, w] : weighted_points) mean += x * (w / total);
  double var = 0.0;
  for (const auto& [x, w] : weighted_points) var += std::norm(x - mean) * (w / total);
  return {mean, var};
}

/// Unit-energy Gray-labelled constellation. Point q carries the label whose
/// bits, MSB first, are the binary digits of q.
class Constellation {
 public:
  enum class Kind { Qpsk, Qam16 };

  static Constellation qpsk() {
    // per axis: bit 0 -> +1, bit 1 -> -1
    const double a = 1.0 / std::sqrt(2.0);
    std::vector<cplx> pts(4);
    for (unsigned q = 0; q < 4; ++q) {
      const unsigned b0 = (q >> 1) & 1u, b1 = q & 1u;
      pts[q] = {a * (1.0 - 2.0 * b0), a * (1.0 - 2.0 * b1)};
    }
    return Constellation(Kind::Qpsk, 2, std::move(pts));
  }

  static Constellation qam16() {
    // per axis (sign bit, magnitude bit): 00 -> +1, 01 -> +3, 10 -> -1, 11 -> -3
    const double a = 1.0 / std::sqrt(10.0);
    auto pam = [a](unsigned s, unsigned m) { return a * (1.0 - 2.0 * s) * (1.0 + 2.0 * m); };
    std::vector<cplx> pts(16);
    for (unsigned q = 0; q < 16; ++q) {
      const unsigned b0 = (q >> 3) & 1u, b1 = (q >> 2) & 1u, b2 = (q >> 1) & 1u, b3 = q & 1u;
      pts[q] = {pam(b0, b1), pam(b2, b3)};
    }
    return Constellation(Kind::Qam16, 4, std::move(pts));
  }

  static Constellation make(Kind kind) { return kind == Kind::Qpsk ? qpsk() : qam16(); }

  Kind kind() const { return kind_; }
  unsigned bits_per_symbol() const { return bits_; }
  std::size_t size() const { return points_.size(); }
  const std::vector<cplx>& points() const { return points_; }
  cplx point(std::size_t q) const { return points_[q]; }

  /// Bit j (0 = MSB) of the label of point q.
  unsigned label_bit(std::size_t q, unsigned j) const {
    return static_cast<unsigned>(q >> (bits_ - 1 - j)) & 1u;
  }

  double average_energy() const {
    double e = 0.0;
    for (auto s : points_) e += std::norm(s);
    return e / static_cast<double>(points_.size());
  }

 private:
  Constellation(Kind kind, unsigned bits, std::vector<cplx> pts)
      : kind_(kind), bits_(bits), points_(std::move(pts)) {}

  Kind kind_;
  unsigned bits_;
  std::vector<cplx> points_;
};

/// Non-negative weights over the points of a constellation.
struct DiscreteMsg {
  std::vector<double> weights;

  static DiscreteMsg uniform(std::size_t q) {
    return {std::vector<double>(q, 1.0 / static_cast<double>(q))};
  }
  static DiscreteMsg point_mass(std::size_t q, std::size_t at) {
    DiscreteMsg d{std::vector<double>(q, 0.0)};
    d.weights[at] = 1.0;
    return d;
  }

  void normalize() {
    const double s = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(s > 0.0)) throw EmptyBelief("discrete message has no positive weight");
    for (auto& w : weights) w /= s;
  }

  std::size_t argmax() const {
    return static_cast<std::size_t>(
        std::distance(weights.begin(), std::max_element(weights.begin(), weights.end())));
  }
};

struct Moments {
  cplx mean{0.0, 0.0};
  double variance = 0.0;
};

inline Moments discrete_moments(const DiscreteMsg& msg, const Constellation& c) {
  cplx mean{0.0, 0.0};
  double second = 0.0;
  for (std::size_t q = 0; q < c.size(); ++q) {
    mean += msg.weights[q] * c.point(q);
    second += msg.weights[q] * std::norm(c.point(q));
  }
  return {mean, std::max(0.0, second - std::norm(mean))};
}

}  // namespace bpmf
