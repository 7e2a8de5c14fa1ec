#include "hspsim/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

namespace hspsim {
namespace {

// Known-answer vectors for Philox4x32-10, cross-checked against an
// independent implementation before being frozen here.
TEST(Philox, KnownAnswerZeros) {
  const auto out = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = Philox4x32::block(
      {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
      {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPiDigits) {
  const auto out = Philox4x32::block(
      {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
      {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(out[0], 0xd16cfe09u);
  EXPECT_EQ(out[1], 0x94fdccebu);
  EXPECT_EQ(out[2], 0x5001e420u);
  EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(PulseRng, SameTripleSameSequence) {
  PulseRng a(0xDEADBEEFCAFEull, RngStream::kSource, 12345);
  PulseRng b(0xDEADBEEFCAFEull, RngStream::kSource, 12345);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u32(), b.next_u32());
}

TEST(PulseRng, StreamsAndPulsesAreIndependentCoordinates) {
  PulseRng base(7, RngStream::kSource, 0);
  PulseRng other_stream(7, RngStream::kDetect, 0);
  PulseRng other_pulse(7, RngStream::kSource, 1);
  PulseRng other_seed(8, RngStream::kSource, 0);
  const uint64_t v = base.next_u64();
  EXPECT_NE(v, other_stream.next_u64());
  EXPECT_NE(v, other_pulse.next_u64());
  EXPECT_NE(v, other_seed.next_u64());
}

TEST(PulseRng, PartitionIndependence) {
  // Per-pulse values must not depend on the order pulses are visited in.
  const int n = 512;
  std::vector<uint64_t> forward(n), backward(n);
  for (int i = 0; i < n; ++i) {
    PulseRng rng(99, RngStream::kDetect, i);
    forward[i] = rng.next_u64();
  }
  for (int i = n - 1; i >= 0; --i) {
    PulseRng rng(99, RngStream::kDetect, i);
    backward[i] = rng.next_u64();
  }
  EXPECT_EQ(forward, backward);
}

TEST(PulseRng, UniformMoments) {
  PulseRng rng(2024, RngStream::kSource, 0);
  const int n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum_sq += u * u;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
  // Var(sample var) for U(0,1) is (mu4 - var^2)/n with mu4 = 1/80.
  EXPECT_NEAR(var, 1.0 / 12.0, 5.0 * std::sqrt((1.0 / 80.0 - 1.0 / 144.0) / n));
}

TEST(PulseRng, GaussianMoments) {
  PulseRng rng(5150, RngStream::kQuadrature, 0);
  const int n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(var, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(PulseRng, BoseEinsteinMoments) {
  // Mean and variance of the thermal sampler against the analytic m(1+m),
  // with the tolerance derived from exact pmf moments.
  const double m = 0.25;
  PulseRng rng(31337, RngStream::kSource, 0);
  const int n = 1000000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const int k = rng.bose_einstein(m);
    sum += k;
    sum_sq += static_cast<double>(k) * k;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double true_var = m * (1.0 + m);
  // Fourth central moment by direct pmf summation.
  double mu4 = 0.0;
  const double q = m / (1.0 + m);
  for (int k = 0; k < 200; ++k) {
    const double p = std::pow(q, k) / (1.0 + m);
    mu4 += p * std::pow(k - m, 4);
  }
  EXPECT_NEAR(mean, m, 5.0 * std::sqrt(true_var / n));
  EXPECT_NEAR(var, true_var, 5.0 * std::sqrt((mu4 - true_var * true_var) / n));
}

TEST(PulseRng, BoseEinsteinZeroMeanDrawsNothing) {
  PulseRng rng(1, RngStream::kSource, 0);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(rng.bose_einstein(0.0), 0);
}

TEST(PulseRng, PrecomputedLogRatioMatchesDirectSampler) {
  const double m = 0.731;
  const double log_q = std::log(m / (1.0 + m));
  PulseRng a(42, RngStream::kSource, 17);
  PulseRng b(42, RngStream::kSource, 17);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(a.bose_einstein(m), b.geometric_from_log_ratio(log_q));
  }
}

TEST(PulseRng, PoissonMoments) {
  const double lam = 3.7;
  PulseRng rng(777, RngStream::kSource, 0);
  const int n = 400000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const int k = rng.poisson(lam);
    sum += k;
    sum_sq += static_cast<double>(k) * k;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, lam, 5.0 * std::sqrt(lam / n));
  // Var(sample var) ~ (mu4 - lam^2)/n with mu4 = lam(1 + 3 lam) for Poisson.
  EXPECT_NEAR(var, lam, 5.0 * std::sqrt(lam * (1.0 + 2.0 * lam) / n));
}

TEST(PulseRng, PoissonChunkedLargeMean) {
  const double lam = 75.0;
  PulseRng rng(888, RngStream::kSource, 0);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += rng.poisson(lam);
  EXPECT_NEAR(sum / n, lam, 5.0 * std::sqrt(lam / n));
}

TEST(PulseRng, RejectsNegativeMeans) {
  PulseRng rng(1, RngStream::kSource, 0);
  EXPECT_THROW(rng.bose_einstein(-0.1), std::invalid_argument);
  EXPECT_THROW(rng.poisson(-2.0), std::invalid_argument);
}

TEST(DeriveSeed, DistinctTagsDistinctSeeds) {
  const uint64_t s = 123456789;
  EXPECT_NE(derive_seed(s, 0), derive_seed(s, 1));
  EXPECT_NE(derive_seed(s, 0), s);
  EXPECT_EQ(derive_seed(s, 3), derive_seed(s, 3));
}

}  // namespace
}  // namespace hspsim
