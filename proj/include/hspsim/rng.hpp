#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace hspsim {

/// Roles a single pulse's random draws are split into. Each role gets an
/// independent counter-based stream, so adding draws to one role never
/// shifts another role's sequence.
enum class RngStream : uint32_t {
  kSource = 0,      ///< per-mode pair numbers and Raman photons
  kDetect = 1,      ///< channel/SPD thinning, splitter routing, dark counts
  kQuadrature = 2,  ///< photon-number choice and quadrature rejection sampling
  kWaveform = 3,    ///< leak oscillation phase and per-sample electronic noise
};

/// Philox4x32-10 block cipher used as a counter-based random generator.
/// Stateless: the 128-bit counter encodes (pulse_index, stream, block) and the
/// 64-bit key is the user seed, so any block can be generated in isolation.
struct Philox4x32 {
  static constexpr uint32_t kMul0 = 0xD2511F53u;
  static constexpr uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr uint32_t kWeyl1 = 0xBB67AE85u;
  static constexpr int kRounds = 10;

  static std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr,
                                       std::array<uint32_t, 2> key) {
    for (int round = 0; round < kRounds; ++round) {
      if (round != 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const uint64_t prod0 = static_cast<uint64_t>(kMul0) * ctr[0];
      const uint64_t prod1 = static_cast<uint64_t>(kMul1) * ctr[2];
      const uint32_t hi0 = static_cast<uint32_t>(prod0 >> 32);
      const uint32_t lo0 = static_cast<uint32_t>(prod0);
      const uint32_t hi1 = static_cast<uint32_t>(prod1 >> 32);
      const uint32_t lo1 = static_cast<uint32_t>(prod1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// Random stream for one (seed, stream, pulse_index) triple. A pure function
/// of its constructor arguments: two instances built with the same triple
/// yield identical sequences regardless of what any other instance consumed,
/// which is what makes sharded simulation bit-identical to serial runs.
class PulseRng {
 public:
  PulseRng(uint64_t seed, RngStream stream, uint64_t pulse_index)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
        base_{static_cast<uint32_t>(pulse_index),
              static_cast<uint32_t>(pulse_index >> 32),
              static_cast<uint32_t>(stream), 0u} {}

  uint32_t next_u32() {
    if (pos_ == 4) {
      buffer_ = Philox4x32::block(base_, key_);
      ++base_[3];
      pos_ = 0;
    }
    return buffer_[pos_++];
  }

  uint64_t next_u64() {
    const uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Marsaglia polar method; the second variate of
  /// each pair is cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double v1, v2, s;
    do {
      v1 = 2.0 * uniform() - 1.0;
      v2 = 2.0 * uniform() - 1.0;
      s = v1 * v1 + v2 * v2;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v2 * f;
    have_cached_ = true;
    return v1 * f;
  }

  /// Bose-Einstein (geometric, support 0,1,2,...) sample with the given mean:
  /// P(n) = mean^n / (1 + mean)^(n+1), inverted through the closed-form CDF.
  int bose_einstein(double mean) {
    if (mean < 0.0) throw std::invalid_argument("bose_einstein: negative mean");
    if (mean == 0.0) return 0;
    return geometric_from_log_ratio(std::log(mean / (1.0 + mean)));
  }

  /// Same distribution with log(mean/(1+mean)) precomputed by the caller;
  /// consumes exactly one uniform, identically to bose_einstein().
  int geometric_from_log_ratio(double log_q) {
    const double u = uniform();
    const double n = std::floor(std::log1p(-u) / log_q);
    return n > 1e6 ? 1000000 : static_cast<int>(n);
  }

  /// Poisson sample by Knuth's product method, chunked so the running
  /// product never underflows for large means.
  int poisson(double mean) {
    if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
    int total = 0;
    while (mean > 30.0) {
      total += poisson_knuth(30.0);
      mean -= 30.0;
    }
    return total + poisson_knuth(mean);
  }

  /// Number of successes among n independent trials with probability p.
  int binomial(int n, double p) {
    int k = 0;
    for (int i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
    return k;
  }

 private:
  int poisson_knuth(double mean) {
    if (mean == 0.0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double prod = 1.0;
    do {
      ++k;
      prod *= uniform();
    } while (prod > limit);
    return k - 1;
  }

  std::array<uint32_t, 2> key_;
  std::array<uint32_t, 4> base_;
  std::array<uint32_t, 4> buffer_{};
  int pos_ = 4;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

/// One splitmix64 step; used to derive independent child seeds (for example
/// the vacuum and heralded runs of a homodyne acquisition) from a config seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace hspsim
