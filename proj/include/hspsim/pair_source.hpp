#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspsim/errors.hpp"
#include "hspsim/rng.hpp"

namespace hspsim {

/// Pair-generation statistics of the source: quadratic pump scaling,
/// Schmidt-mode structure, optional uncorrelated Raman noise per arm.
struct SourceParams {
  double s1 = 0.0;             ///< pairs per pulse per squared pump unit
  double pump_photons = 0.0;   ///< average pump photons per pulse (P_a)
  std::vector<double> schmidt_weights;  ///< nonnegative, sums to 1
  double raman_mean_s = 0.0;   ///< mean noise photons per pulse, signal arm
  double raman_mean_i = 0.0;   ///< mean noise photons per pulse, idler arm
  double rep_rate_hz = 37e6;   ///< pulse repetition rate f_p
  std::map<std::string, std::string> metadata;  ///< informational only

  double mean_pairs() const;
  double effective_mode_number() const;
  void validate() const;
};

/// Photon numbers of one pulse. Pair correlation is perfect: each mode
/// contributes the same count to both arms; Raman photons are arm-local.
struct PairSample {
  int n_signal = 0;
  int n_idler = 0;
  std::vector<int> per_mode_pairs;
};

/// Mean pairs per pulse under the quadratic pump law mu = s1 * P_a^2.
inline double mean_pairs_from_pump(double pump_photons, double s1) {
  if (pump_photons < 0.0)
    throw std::invalid_argument("mean_pairs_from_pump: negative pump_photons");
  if (s1 < 0.0) throw std::invalid_argument("mean_pairs_from_pump: negative s1");
  return s1 * pump_photons * pump_photons;
}

inline double SourceParams::mean_pairs() const {
  return mean_pairs_from_pump(pump_photons, s1);
}

inline double SourceParams::effective_mode_number() const {
  double sum_sq = 0.0;
  for (const double w : schmidt_weights) sum_sq += w * w;
  return 1.0 / sum_sq;
}

inline void SourceParams::validate() const {
  if (s1 < 0.0) throw std::invalid_argument("source.s1: must be >= 0");
  if (pump_photons < 0.0)
    throw std::invalid_argument("source.pump_photons: must be >= 0");
  if (raman_mean_s < 0.0 || raman_mean_i < 0.0)
    throw std::invalid_argument("source.raman_mean: must be >= 0");
  if (!(rep_rate_hz > 0.0))
    throw std::invalid_argument("source.rep_rate_hz: must be > 0");
  if (schmidt_weights.empty())
    throw std::invalid_argument("source.schmidt_weights: empty");
  double sum = 0.0;
  for (const double w : schmidt_weights) {
    if (w < 0.0)
      throw std::invalid_argument("source.schmidt_weights: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("source.schmidt_weights: must sum to 1");
  const double k = effective_mode_number();
  const double n = static_cast<double>(schmidt_weights.size());
  if (k < 1.0 - 1e-9 || k > n + 1e-9)
    throw std::invalid_argument(
        "source.schmidt_weights: effective mode number outside [1, n_modes]");
}

/// Geometric-decay weights lambda_k proportional to r^k with r solved by
/// bisection so the effective mode number 1/sum(lambda^2) hits K_target.
inline std::vector<double> schmidt_weights_for_target_K(double K_target,
                                                        int n_modes) {
  if (n_modes < 1)
    throw std::invalid_argument("schmidt_weights_for_target_K: n_modes < 1");
  if (K_target < 1.0 || K_target > static_cast<double>(n_modes))
    throw std::invalid_argument(
        "schmidt_weights_for_target_K: K_target outside [1, n_modes]");

  const auto weights_for_ratio = [n_modes](double r) {
    std::vector<double> w(n_modes);
    double sum = 0.0;
    double term = 1.0;
    for (int k = 0; k < n_modes; ++k) {
      w[k] = term;
      sum += term;
      term *= r;
    }
    for (double& v : w) v /= sum;
    return w;
  };
  const auto mode_count = [](const std::vector<double>& w) {
    double s = 0.0;
    for (const double v : w) s += v * v;
    return 1.0 / s;
  };

  if (K_target == 1.0) return weights_for_ratio(0.0);
  if (K_target == static_cast<double>(n_modes)) return weights_for_ratio(1.0);

  double lo = 0.0, hi = 1.0;
  for (int step = 0; step < 200; ++step) {
    const double r = 0.5 * (lo + hi);
    const auto w = weights_for_ratio(r);
    const double k = mode_count(w);
    if (std::abs(k - K_target) <= 1e-10) return w;
    if (k < K_target)
      lo = r;
    else
      hi = r;
  }
  throw std::runtime_error(
      "schmidt_weights_for_target_K: no convergence after 200 steps");
}

/// Reusable sampler holding the per-mode log ratios so the hot loop does not
/// recompute logarithms every pulse. Draw sequence: active modes in order,
/// then signal Raman, then idler Raman; zero-mean components draw nothing.
class SourceSampler {
 public:
  explicit SourceSampler(const SourceParams& params) : params_(params) {
    params.validate();
    const double mu = params.mean_pairs();
    log_ratio_.resize(params.schmidt_weights.size(), 0.0);
    for (size_t k = 0; k < params.schmidt_weights.size(); ++k) {
      const double m = mu * params.schmidt_weights[k];
      log_ratio_[k] = m > 0.0 ? std::log(m / (1.0 + m)) : 0.0;
      if (m > 0.0) active_ = static_cast<int>(k) + 1;
    }
  }

  const SourceParams& params() const { return params_; }

  void sample(uint64_t pulse_index, uint64_t seed, PairSample* out) const {
    PulseRng rng(seed, RngStream::kSource, pulse_index);
    out->per_mode_pairs.assign(params_.schmidt_weights.size(), 0);
    int pairs = 0;
    for (int k = 0; k < active_; ++k) {
      if (log_ratio_[k] == 0.0) continue;
      const int n = rng.geometric_from_log_ratio(log_ratio_[k]);
      out->per_mode_pairs[k] = n;
      pairs += n;
    }
    out->n_signal = pairs;
    out->n_idler = pairs;
    if (params_.raman_mean_s > 0.0)
      out->n_signal += rng.poisson(params_.raman_mean_s);
    if (params_.raman_mean_i > 0.0)
      out->n_idler += rng.poisson(params_.raman_mean_i);
  }

 private:
  SourceParams params_;
  std::vector<double> log_ratio_;
  int active_ = 0;
};

/// Photon numbers of pulse `pulse_index`. Pure in (params, pulse_index, seed).
inline PairSample sample_pulse(const SourceParams& params, uint64_t pulse_index,
                               uint64_t seed) {
  PairSample out;
  SourceSampler(params).sample(pulse_index, seed, &out);
  return out;
}

/// Empirical first- and second-order statistics of the signal arm over a
/// pulse ensemble, at the photon-number level (no detection chain).
struct SourceEnsembleStats {
  double mean_signal = 0.0;
  double g2_signal = 0.0;  ///< n_pulses * sum n(n-1) / (sum n)^2
};

inline SourceEnsembleStats source_ensemble_stats(const SourceParams& params,
                                                 uint64_t n_pulses,
                                                 uint64_t seed) {
  if (n_pulses == 0)
    throw std::invalid_argument("source_ensemble_stats: n_pulses == 0");
  SourceSampler sampler(params);
  PairSample sample;
  double sum_n = 0.0;
  double sum_nn = 0.0;
  for (uint64_t i = 0; i < n_pulses; ++i) {
    sampler.sample(i, seed, &sample);
    const double n = sample.n_signal;
    sum_n += n;
    sum_nn += n * (n - 1.0);
  }
  if (sum_n == 0.0)
    throw EstimatorUndefined("source_ensemble_stats: no photons generated");
  SourceEnsembleStats stats;
  stats.mean_signal = sum_n / static_cast<double>(n_pulses);
  stats.g2_signal = static_cast<double>(n_pulses) * sum_nn / (sum_n * sum_n);
  return stats;
}

}  // namespace hspsim
