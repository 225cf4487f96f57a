#include <gtest/gtest.h>

#include <bit>
#include <random>
#include <vector>

#include "bpmf/gmsg.hpp"
#include "oracles.hpp"

using namespace bpmf;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

GaussMsg random_msg(std::mt19937_64& rng, double decades = 3.0) {
  std::normal_distribution<double> nd(0.0, 2.0);
  std::uniform_real_distribution<double> lv(-decades, decades);
  return {{nd(rng), nd(rng)}, std::pow(10.0, lv(rng))};
}

}  // namespace

TEST(Product, EqualVarianceAverage) {
  const auto p = product(GaussMsg{{1.0, 0.0}, 2.0}, GaussMsg{{3.0, 0.0}, 2.0});
  EXPECT_DOUBLE_EQ(p.mean.real(), 2.0);
  EXPECT_DOUBLE_EQ(p.mean.imag(), 0.0);
  EXPECT_DOUBLE_EQ(p.variance, 1.0);
}

TEST(Product, VacuousIsIdentity) {
  const GaussMsg a{{0.3, -1.2}, 0.7};
  EXPECT_EQ(product(a, GaussMsg::vacuous()), a);
  EXPECT_EQ(product(GaussMsg::vacuous(), a), a);
}

TEST(Product, MatchesGridIntegratedPointwiseProduct) {
  const GaussMsg a{{1.0, 1.0}, 0.5}, b{{-1.0, 0.0}, 0.25};
  const auto fit = oracle::grid_moments(
      [&](cplx x) { return oracle::log_cn(x, a.mean, a.variance) + oracle::log_cn(x, b.mean, b.variance); },
      {0.0, 0.0}, 1.0, 1.0, 6.0, 300);
  const auto p = product(a, b);
  EXPECT_NEAR(p.mean.real(), fit.mean.real(), 1e-6);
  EXPECT_NEAR(p.mean.imag(), fit.mean.imag(), 1e-6);
  EXPECT_NEAR(p.variance, fit.variance, 1e-6);
}

TEST(Product, PointMassDominates) {
  const auto p = product(GaussMsg::point({1.0, 2.0}), GaussMsg{{5.0, 5.0}, 0.1});
  EXPECT_TRUE(p.is_point());
  EXPECT_EQ(p.mean, cplx(1.0, 2.0));
}

TEST(Product, CommutativeAssociativeAndShrinking) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20000; ++i) {
    const auto a = random_msg(rng), b = random_msg(rng), c = random_msg(rng);
    const auto ab = product(a, b), ba = product(b, a);
    EXPECT_LE(std::abs(ab.mean - ba.mean), 1e-12 * std::max(1.0, std::abs(ab.mean)));
    EXPECT_LE(rel(ab.variance, ba.variance), 1e-12);
    const auto l = product(product(a, b), c), r = product(a, product(b, c));
    EXPECT_LE(std::abs(l.mean - r.mean), 1e-12 * std::max(1.0, std::abs(l.mean)) + 1e-12 * std::sqrt(l.variance));
    EXPECT_LE(rel(l.variance, r.variance), 1e-12);
    EXPECT_LE(ab.variance, std::min(a.variance, b.variance));
  }
}

TEST(Product, ListFoldAgreesWithPairwise) {
  std::mt19937_64 rng(5);
  std::vector<GaussMsg> v;
  for (int i = 0; i < 6; ++i) v.push_back(random_msg(rng));
  v.push_back(GaussMsg::vacuous());
  GaussMsg acc = GaussMsg::vacuous();
  for (const auto& g : v) acc = product(acc, g);
  const auto f = product(std::span<const GaussMsg>(v));
  EXPECT_NEAR(std::abs(f.mean - acc.mean), 0.0, 1e-12);
  EXPECT_NEAR(rel(f.variance, acc.variance), 0.0, 1e-12);
  EXPECT_TRUE(product(std::span<const GaussMsg>{}).is_vacuous());
}

TEST(Divide, ZeroMeans) {
  const auto d = divide(GaussMsg{{0.0, 0.0}, 1.0}, GaussMsg{{0.0, 0.0}, 2.0});
  EXPECT_EQ(d.mean, cplx(0.0, 0.0));
  EXPECT_DOUBLE_EQ(d.variance, 2.0);
}

TEST(Divide, NegativePrecisionClamps) {
  const auto r = divide_checked(GaussMsg{{1.0, 0.0}, 2.0}, GaussMsg{{0.0, 0.0}, 1.0});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.msg.mean, cplx(1.0, 0.0));
  EXPECT_EQ(r.msg.variance, kVarianceCeiling);
}

TEST(Divide, EqualVariancesClamp) {
  const auto r = divide_checked(GaussMsg{{1.0, 0.0}, 2.0}, GaussMsg{{3.0, 0.0}, 2.0});
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.msg.variance, kVarianceCeiling);
}

TEST(Divide, VacuousDenominator) {
  const GaussMsg a{{0.5, 0.5}, 3.0};
  const auto r = divide_checked(a, GaussMsg::vacuous());
  EXPECT_FALSE(r.degenerate);
  EXPECT_EQ(r.msg, a);
}

// The stored product variance carries a's precision only to about
// eps * (1 + va / vb), so variances stay within four decades of each other.
TEST(Divide, RoundTripRecoversFactor) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20000; ++i) {
    const auto a = random_msg(rng, 2.0), b = random_msg(rng, 2.0);
    if (a.variance == b.variance) continue;
    const auto r = divide_checked(product(a, b), b);
    ASSERT_FALSE(r.degenerate);
    EXPECT_LE(std::abs(r.msg.mean - a.mean), 1e-10 * std::max(std::abs(a.mean), std::sqrt(a.variance)));
    EXPECT_LE(rel(r.msg.variance, a.variance), 1e-10);
  }
}

TEST(DiscreteMoments, UniformQpsk) {
  const auto c = Constellation::qpsk();
  const auto m = discrete_moments(DiscreteMsg::uniform(4), c);
  EXPECT_NEAR(std::abs(m.mean), 0.0, 1e-15);
  EXPECT_NEAR(m.variance, 1.0, 1e-15);
}

TEST(DiscreteMoments, PointMass) {
  const auto c = Constellation::qam16();
  const auto m = discrete_moments(DiscreteMsg::point_mass(16, 9), c);
  EXPECT_EQ(m.mean, c.point(9));
  EXPECT_NEAR(m.variance, 0.0, 1e-15);
}

TEST(DiscreteMoments, WeightedQpskMatchesDirectSum) {
  const auto c = Constellation::qpsk();
  const DiscreteMsg w{{0.7, 0.1, 0.1, 0.1}};
  const double a = 1.0 / std::sqrt(2.0);
  // points in label order 00, 01, 10, 11
  const cplx s[4] = {{a, a}, {a, -a}, {-a, a}, {-a, -a}};
  cplx mean{0.0, 0.0};
  for (int q = 0; q < 4; ++q) mean += w.weights[q] * s[q];
  double var = 0.0;
  for (int q = 0; q < 4; ++q) var += w.weights[q] * std::norm(s[q] - mean);
  const auto m = discrete_moments(w, c);
  EXPECT_NEAR(std::abs(m.mean - mean), 0.0, 1e-15);
  EXPECT_NEAR(m.variance, var, 1e-15);
}

TEST(DiscreteMoments, VarianceNeverNegative) {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> ex(1.0);
  std::uniform_int_distribution<int> spike(0, 15);
  const auto c = Constellation::qam16();
  for (int i = 0; i < 10000; ++i) {
    DiscreteMsg d{std::vector<double>(16)};
    for (auto& w : d.weights) w = std::pow(ex(rng), 8.0);
    d.weights[spike(rng)] += 1e6;
    d.normalize();
    EXPECT_GE(discrete_moments(d, c).variance, 0.0);
  }
}

TEST(DiscreteMsg, NormalizeRejectsAllZero) {
  DiscreteMsg d{{0.0, 0.0, 0.0, 0.0}};
  EXPECT_THROW(d.normalize(), EmptyBelief);
  DiscreteMsg e{{1.0, 3.0}};
  e.normalize();
  EXPECT_NEAR(e.weights[0] + e.weights[1], 1.0, 1e-12);
}

TEST(Projection, SinglePointAndSymmetricPair) {
  const std::vector<std::pair<cplx, double>> one{{{0.2, -0.4}, 1.0}};
  const auto g = project_gaussian(one);
  EXPECT_EQ(g.mean, cplx(0.2, -0.4));
  EXPECT_EQ(g.variance, 0.0);
  const std::vector<std::pair<cplx, double>> two{{{1.0, 0.0}, 0.5}, {{-1.0, 0.0}, 0.5}};
  const auto h = project_gaussian(two);
  EXPECT_NEAR(std::abs(h.mean), 0.0, 1e-15);
  EXPECT_NEAR(h.variance, 1.0, 1e-15);
}

TEST(Projection, AllZeroWeightsIsEmptyBelief) {
  const std::vector<std::pair<cplx, double>> pts{{{1.0, 0.0}, 0.0}, {{0.0, 1.0}, 0.0}};
  EXPECT_THROW(project_gaussian(pts), EmptyBelief);
}

TEST(Projection, QpskGaussianLikelihoodMatchesDirectSum) {
  const auto c = Constellation::qpsk();
  const cplx center{0.3, 0.2};
  const double v = 0.5;
  std::vector<std::pair<cplx, double>> pts;
  double wsum = 0.0;
  cplx m1{0.0, 0.0};
  double m2 = 0.0;
  for (auto s : c.points()) {
    const double w = std::exp(-std::norm(s - center) / v);
    pts.emplace_back(s, w);
    wsum += w;
    m1 += w * s;
    m2 += w * std::norm(s);
  }
  const cplx mean = m1 / wsum;
  const double var = m2 / wsum - std::norm(mean);
  const auto g = project_gaussian(pts);
  EXPECT_NEAR(std::abs(g.mean - mean), 0.0, 1e-14);
  EXPECT_NEAR(g.variance, var, 1e-14);
}

TEST(Projection, GridOfGaussianRecoversIt) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto g = random_msg(rng);
    const double s = std::sqrt(g.variance / 2.0);
    std::vector<std::pair<cplx, double>> pts;
    const int n = 60;
    for (int a = -n; a <= n; ++a)
      for (int b = -n; b <= n; ++b) {
        const cplx x = g.mean + cplx{6.0 * s * a / n, 6.0 * s * b / n};
        pts.emplace_back(x, std::exp(log_pdf(g, x) - log_pdf(g, g.mean)));
      }
    const auto p = project_gaussian(pts);
    EXPECT_LE(std::abs(p.mean - g.mean), 1e-4 * std::sqrt(g.variance));
    EXPECT_LE(rel(p.variance, g.variance), 1e-4);
  }
}

TEST(Constellation, UnitEnergyAndBijectiveLabels) {
  for (auto c : {Constellation::qpsk(), Constellation::qam16()}) {
    EXPECT_NEAR(c.average_energy(), 1.0, 1e-12);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) EXPECT_GT(std::abs(c.point(i) - c.point(j)), 0.1);
  }
}

TEST(Constellation, GrayNeighboursDifferInOneBit) {
  for (auto c : {Constellation::qpsk(), Constellation::qam16()}) {
    double dmin = 1e9;
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) dmin = std::min(dmin, std::abs(c.point(i) - c.point(j)));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        if (std::abs(std::abs(c.point(i) - c.point(j)) - dmin) < 1e-9)
          EXPECT_EQ(std::popcount(i ^ j), 1) << i << " " << j;
  }
}
