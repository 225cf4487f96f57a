#include <gtest/gtest.h>

#include <random>
#include <set>

#include "bpmf/frame.hpp"
#include "bpmf/phy.hpp"

using namespace bpmf;

TEST(PilotPattern, TwoUsersStaggered) {
  const auto p = make_pilot_pattern(2, 8, 2);
  EXPECT_EQ(p.sets[0], (std::vector<std::size_t>{0, 4}));
  EXPECT_EQ(p.sets[1], (std::vector<std::size_t>{2, 6}));
}

TEST(PilotPattern, AllPilots) {
  const auto p = make_pilot_pattern(1, 4, 4);
  EXPECT_EQ(p.sets[0], (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(PilotPattern, IndivisibleIsRejected) {
  EXPECT_THROW(make_pilot_pattern(3, 8, 2), InvalidPilotConfig);
  EXPECT_THROW(make_pilot_pattern(2, 8, 8), InvalidPilotConfig);
  EXPECT_THROW(make_pilot_pattern(0, 8, 2), InvalidPilotConfig);
}

TEST(PilotPattern, DisjointAndUniformForRandomValidConfigs) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(1, 8);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = pick(rng), kp = pick(rng), mult = pick(rng);
    const std::size_t k = n * kp * mult;
    const auto p = make_pilot_pattern(n, k, kp);
    std::set<std::size_t> seen;
    for (const auto& s : p.sets) {
      ASSERT_EQ(s.size(), kp);
      for (std::size_t j = 0; j < kp; ++j) {
        EXPECT_LT(s[j], k);
        if (j + 1 < kp) EXPECT_EQ(s[j + 1] - s[j], k / kp);
        EXPECT_TRUE(seen.insert(s[j]).second);
      }
    }
  }
}

TEST(Channel, SingleTapIsFlat) {
  Rng rng(3);
  const auto ch = gen_channel(rng, 2, 3, 16, 1);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(ch.freq(m, n, k), ch.taps(m, n, 0));
}

TEST(Channel, FrequencyResponseIsDftOfTaps) {
  Rng rng(4);
  const std::size_t K = 32, L = 5;
  const auto ch = gen_channel(rng, 2, 2, K, L);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < K; ++k) {
        cplx acc{0.0, 0.0};
        for (std::size_t l = 0; l < L; ++l)
          acc += ch.taps(m, n, l) * std::polar(1.0, -2.0 * M_PI * double(k * l) / double(K));
        EXPECT_LE(std::abs(acc - ch.freq(m, n, k)), 1e-9);
      }
}

TEST(Channel, UnitAveragePower) {
  Rng rng(5);
  double acc = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto ch = gen_channel(rng, 1, 1, 8, 4);
    acc += std::norm(ch.freq(0, 0, static_cast<std::size_t>(i % 8)));
  }
  EXPECT_NEAR(acc / draws, 1.0, 0.02);
}

TEST(Channel, SameSeedSameRealization) {
  Rng a(99), b(99);
  const auto ca = gen_channel(a, 4, 2, 64, 8), cb = gen_channel(b, 4, 2, 64, 8);
  EXPECT_EQ(ca.taps, cb.taps);
  EXPECT_EQ(ca.freq, cb.freq);
}

TEST(Transmit, NoiselessIdentityChannel) {
  Rng rng(1);
  ChannelRealization ch;
  ch.taps = Grid3<cplx>(2, 1, 1, cplx{1.0, 0.0});
  ch.freq = taps_to_freq(ch.taps, 4);
  Grid2<cplx> x(1, 4);
  for (std::size_t k = 0; k < 4; ++k) x(0, k) = cplx(double(k), -1.0);
  const auto pilots = make_pilot_pattern(1, 4, 1);
  const auto obs = transmit(x, ch, pilots, kInf, rng);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(obs.y(m, k), x(0, k));
}

TEST(Transmit, TwoUsersMatchDirectSum) {
  Rng rng(8);
  const auto ch = gen_channel(rng, 3, 2, 8, 2);
  const auto pilots = make_pilot_pattern(2, 8, 2);
  Grid2<cplx> x(2, 8);
  for (std::size_t k = 0; k < 8; ++k) {
    x(0, k) = cplx(0.5, double(k));
    x(1, k) = cplx(-1.0, 0.25 * double(k));
  }
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k : pilots.sets[n]) x(1 - n, k) = 0.0;
  const auto obs = transmit(x, ch, pilots, kInf, rng);
  for (std::size_t m = 0; m < 3; ++m)
    for (std::size_t k = 0; k < 8; ++k)
      EXPECT_EQ(obs.y(m, k), ch.freq(m, 0, k) * x(0, k) + ch.freq(m, 1, k) * x(1, k));
}

TEST(Transmit, RejectsPilotViolation) {
  Rng rng(2);
  const auto ch = gen_channel(rng, 1, 2, 8, 2);
  const auto pilots = make_pilot_pattern(2, 8, 2);
  Grid2<cplx> x(2, 8, cplx{1.0, 0.0});
  EXPECT_THROW(transmit(x, ch, pilots, 1.0, rng), PilotViolation);
  EXPECT_THROW(transmit(Grid2<cplx>(2, 7), ch, pilots, 1.0, rng), LengthMismatch);
}

TEST(Transmit, NoiseVarianceIsInversePrecision) {
  Rng rng(6);
  const std::size_t K = 1000;
  ChannelRealization ch;
  ch.taps = Grid3<cplx>(1, 1, 1, cplx{1.0, 0.0});
  ch.freq = Grid3<cplx>(1, 1, K, cplx{1.0, 0.0});
  const auto pilots = make_pilot_pattern(1, K, 1);
  const double lambda = 4.0;
  double acc = 0.0;
  std::size_t count = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto obs = transmit(Grid2<cplx>(1, K), ch, pilots, lambda, rng);
    for (auto v : obs.y.data()) acc += std::norm(v), ++count;
  }
  EXPECT_NEAR(acc / double(count), 1.0 / lambda, 0.02 / lambda);
}

TEST(Transmit, ReceivedEnergyAtDataSubcarriers) {
  const FrameLayout layout(LinkParams{});
  const double lambda = 2.0;
  double acc = 0.0, acc2 = 0.0;
  std::size_t count = 0;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto f = simulate_frame(layout, lambda, s);
    for (std::size_t m = 0; m < layout.m_ant(); ++m)
      for (std::size_t k : layout.data_subcarriers()) {
        const double e = std::norm(f.obs.y(m, k));
        acc += e, acc2 += e * e, ++count;
      }
  }
  const double mean = acc / double(count);
  const double se = std::sqrt((acc2 / double(count) - mean * mean) / double(count));
  const double expect = double(layout.n_users()) * 1.0 + 1.0 / lambda;
  EXPECT_NEAR(mean, expect, 3.0 * se);
}

TEST(Snr, EbN0Conversion) {
  EXPECT_DOUBLE_EQ(ebn0_to_precision(0.0, 0.5, 2), 1.0);
  EXPECT_NEAR(ebn0_to_precision(10.0, 0.5, 4), 20.0, 1e-12);
  const FrameLayout layout(LinkParams{});
  EXPECT_NEAR(layout.noise_precision(0.0), 0.25, 1e-15);
}

TEST(Frame, SameSeedSameFrame) {
  const FrameLayout layout(LinkParams{});
  const auto a = simulate_frame(layout, 3.0, 42), b = simulate_frame(layout, 3.0, 42);
  EXPECT_EQ(a.info_bits, b.info_bits);
  EXPECT_EQ(a.obs.y, b.obs.y);
  EXPECT_EQ(a.channel.freq, b.channel.freq);
}
