#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "hspsim/errors.hpp"
#include "hspsim/pair_source.hpp"
#include "hspsim/rng.hpp"

namespace hspsim {

/// Click-detection chain parameters. SPDs are threshold detectors (no photon
/// number resolution, no dead time); dark counts are independent Bernoulli
/// events per pulse gate.
struct DetectorParams {
  double eta_spd = 0.8;        ///< detection efficiency per SPD
  double dark_prob = 1.35e-5;  ///< dark-count probability per pulse gate
  double splitter_ratio = 0.5; ///< HBT splitter transmission toward arm 1
  double eta_channel_s = 1.0;  ///< passive transmission, signal channel
  double eta_channel_i = 1.0;  ///< passive transmission, idler channel

  void validate() const {
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(eta_spd))
      throw std::invalid_argument("detector.eta_spd: must be in [0,1]");
    if (!in_unit(dark_prob))
      throw std::invalid_argument("detector.dark_prob: must be in [0,1]");
    if (!in_unit(splitter_ratio))
      throw std::invalid_argument("detector.splitter_ratio: must be in [0,1]");
    if (!in_unit(eta_channel_s))
      throw std::invalid_argument("detector.eta_channel_s: must be in [0,1]");
    if (!in_unit(eta_channel_i))
      throw std::invalid_argument("detector.eta_channel_i: must be in [0,1]");
  }
};

/// Dark-count probability per pulse gate for a detector with the given
/// counts-per-second rating at repetition rate f_p.
inline double dark_prob_from_rate(double counts_per_second, double rep_rate_hz) {
  if (counts_per_second < 0.0 || rep_rate_hz <= 0.0)
    throw std::invalid_argument("dark_prob_from_rate: invalid inputs");
  return std::min(1.0, counts_per_second / rep_rate_hz);
}

/// Click tallies over a pulse ensemble. Same-pulse coincidences only (the
/// pulsed regime makes timing windows trivial).
struct CountsRecord {
  uint64_t n_pulses = 0;
  uint64_t N_h = 0;    ///< herald (idler) clicks
  uint64_t N_c = 0;    ///< herald AND direct signal detection
  uint64_t N_1 = 0;    ///< unheralded singles, HBT arm 1
  uint64_t N_2 = 0;    ///< unheralded singles, HBT arm 2
  uint64_t N_12 = 0;   ///< HBT pairwise coincidences
  uint64_t N_h1 = 0;   ///< herald AND arm 1
  uint64_t N_h2 = 0;   ///< herald AND arm 2
  uint64_t N_h12 = 0;  ///< triple coincidences
  double f_p = 37e6;   ///< repetition rate, used to convert counts to rates
};

/// Click outcome of one pulse. The direct-detection path and the HBT path
/// share the channel-surviving signal photons but use independent SPD
/// thinning, mirroring the two alternative measurement configurations.
struct ClickTuple {
  bool herald = false;
  bool signal_direct = false;
  bool arm1 = false;
  bool arm2 = false;
};

/// Detection outcome of one pulse. Draw order within the pulse's detect
/// stream: idler survival per photon, idler dark, signal channel survival
/// per photon, direct SPD per survivor, direct dark, splitter route plus
/// arm SPD per survivor, arm darks. Zero-probability dark draws are skipped.
inline ClickTuple detect_pulse(const PairSample& sample,
                               const DetectorParams& det, uint64_t pulse_index,
                               uint64_t seed) {
  PulseRng rng(seed, RngStream::kDetect, pulse_index);
  const bool has_dark = det.dark_prob > 0.0;
  ClickTuple out;

  const double b_idler = det.eta_channel_i * det.eta_spd;
  bool idler_detected = false;
  for (int i = 0; i < sample.n_idler; ++i)
    idler_detected = rng.bernoulli(b_idler) || idler_detected;
  out.herald = idler_detected || (has_dark && rng.bernoulli(det.dark_prob));

  int channel_survivors = 0;
  for (int i = 0; i < sample.n_signal; ++i)
    channel_survivors += rng.bernoulli(det.eta_channel_s) ? 1 : 0;

  bool direct = false;
  for (int i = 0; i < channel_survivors; ++i)
    direct = rng.bernoulli(det.eta_spd) || direct;
  out.signal_direct = direct || (has_dark && rng.bernoulli(det.dark_prob));

  bool hit1 = false, hit2 = false;
  for (int i = 0; i < channel_survivors; ++i) {
    const bool to_arm1 = rng.bernoulli(det.splitter_ratio);
    const bool detected = rng.bernoulli(det.eta_spd);
    if (to_arm1)
      hit1 = detected || hit1;
    else
      hit2 = detected || hit2;
  }
  out.arm1 = hit1 || (has_dark && rng.bernoulli(det.dark_prob));
  out.arm2 = hit2 || (has_dark && rng.bernoulli(det.dark_prob));
  return out;
}

/// Aggregates detect_pulse tallies over an ensemble. Work may be sharded
/// over n_threads workers (0 = hardware concurrency); tallies merge by
/// addition and the per-pulse RNG contract makes the result identical to a
/// serial run for any worker count.
inline CountsRecord run_counting_experiment(const SourceParams& src,
                                            const DetectorParams& det,
                                            uint64_t n_pulses, uint64_t seed,
                                            int n_threads = 0) {
  if (n_pulses < 1)
    throw std::invalid_argument("run_counting_experiment: n_pulses must be >= 1");
  det.validate();
  const SourceSampler sampler(src);

  if (n_threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    n_threads = hw == 0 ? 1 : static_cast<int>(hw);
  }
  const uint64_t max_shards = std::max<uint64_t>(1, n_pulses / 4096);
  n_threads = static_cast<int>(
      std::min<uint64_t>(static_cast<uint64_t>(n_threads), max_shards));

  const auto tally_range = [&](uint64_t begin, uint64_t end,
                               CountsRecord* local) {
    PairSample sample;
    for (uint64_t i = begin; i < end; ++i) {
      sampler.sample(i, seed, &sample);
      const ClickTuple c = detect_pulse(sample, det, i, seed);
      if (c.herald) {
        ++local->N_h;
        if (c.signal_direct) ++local->N_c;
        if (c.arm1) ++local->N_h1;
        if (c.arm2) ++local->N_h2;
        if (c.arm1 && c.arm2) ++local->N_h12;
      }
      if (c.arm1) ++local->N_1;
      if (c.arm2) ++local->N_2;
      if (c.arm1 && c.arm2) ++local->N_12;
    }
  };

  std::vector<CountsRecord> partial(n_threads);
  if (n_threads == 1) {
    tally_range(0, n_pulses, &partial[0]);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(n_threads);
    const uint64_t chunk = n_pulses / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const uint64_t begin = chunk * t;
      const uint64_t end = t + 1 == n_threads ? n_pulses : begin + chunk;
      workers.emplace_back(tally_range, begin, end, &partial[t]);
    }
    for (auto& w : workers) w.join();
  }

  CountsRecord total;
  total.n_pulses = n_pulses;
  total.f_p = src.rep_rate_hz;
  for (const CountsRecord& p : partial) {
    total.N_h += p.N_h;
    total.N_c += p.N_c;
    total.N_1 += p.N_1;
    total.N_2 += p.N_2;
    total.N_12 += p.N_12;
    total.N_h1 += p.N_h1;
    total.N_h2 += p.N_h2;
    total.N_h12 += p.N_h12;
  }
  return total;
}

/// Estimator value plus an inconsistency flag for results outside their
/// physical range (returned rather than clamped, so calibration problems are
/// visible).
struct FlaggedValue {
  double value = 0.0;
  bool warning = false;
};

/// Heralding efficiency (N_c/N_h)/eta_spd: the probability that a signal
/// photon is present in the channel given a herald, corrected for the signal
/// SPD. Values above 1 are flagged as inconsistent calibration.
inline FlaggedValue heralding_efficiency(const CountsRecord& rec,
                                         double eta_spd) {
  if (!(eta_spd > 0.0) || eta_spd > 1.0)
    throw std::invalid_argument("heralding_efficiency: eta_spd outside (0,1]");
  if (rec.N_h == 0)
    throw EstimatorUndefined("heralding_efficiency: no herald clicks");
  FlaggedValue out;
  out.value = static_cast<double>(rec.N_c) / static_cast<double>(rec.N_h) /
              eta_spd;
  out.warning = out.value > 1.0;
  return out;
}

/// Heralded second-order correlation N_h * N_h12 / (N_h1 * N_h2): the
/// triple-to-accidental ratio conditioned on the herald. Below 1 signals
/// antibunching.
inline double g2_heralded(const CountsRecord& rec) {
  if (rec.N_h1 == 0 || rec.N_h2 == 0)
    throw EstimatorUndefined("g2_heralded: zero heralded singles denominator");
  return static_cast<double>(rec.N_h) * static_cast<double>(rec.N_h12) /
         (static_cast<double>(rec.N_h1) * static_cast<double>(rec.N_h2));
}

/// Unheralded second-order correlation n_pulses * N_12 / (N_1 * N_2) on the
/// HBT arms; 2 for single-mode thermal light, 1 + 1/K for K modes.
inline double g2_unheralded(const CountsRecord& rec) {
  if (rec.N_1 == 0 || rec.N_2 == 0)
    throw EstimatorUndefined("g2_unheralded: zero singles denominator");
  return static_cast<double>(rec.n_pulses) * static_cast<double>(rec.N_12) /
         (static_cast<double>(rec.N_1) * static_cast<double>(rec.N_2));
}

/// Effective mode count 1/(g2 - 1) from the thermal relation g2 = 1 + 1/M.
inline double mode_number(double g2) {
  if (!(g2 > 1.0))
    throw EstimatorUndefined(
        "mode_number: g2 <= 1 is outside the thermal model");
  return 1.0 / (g2 - 1.0);
}

/// Single-parameter least-squares fit of y = s1 * x^2.
struct PumpFit {
  double s1 = 0.0;
  double rms_residual = 0.0;
};

/// Closed-form fit s1 = sum(x^2 y)/sum(x^4) over (pump, herald-probability)
/// points, plus the RMS residual of the quadratic model.
inline PumpFit fit_pump_quadratic(
    const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2)
    throw std::invalid_argument("fit_pump_quadratic: need at least 2 points");
  double sum_x4 = 0.0, sum_x2y = 0.0;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto& [x, y] = points[i];
    if (y < 0.0 || y > 1.0)
      throw std::invalid_argument(
          "fit_pump_quadratic: probability outside [0,1]");
    for (size_t j = i + 1; j < points.size(); ++j) {
      if (points[j].first == x)
        throw std::invalid_argument(
            "fit_pump_quadratic: duplicate pump levels");
    }
    sum_x4 += x * x * x * x;
    sum_x2y += x * x * y;
  }
  if (sum_x4 == 0.0)
    throw std::invalid_argument(
        "fit_pump_quadratic: all pump levels zero (degenerate design)");
  PumpFit fit;
  fit.s1 = sum_x2y / sum_x4;
  double sum_r2 = 0.0;
  for (const auto& [x, y] : points) {
    const double r = y - fit.s1 * x * x;
    sum_r2 += r * r;
  }
  fit.rms_residual = std::sqrt(sum_r2 / static_cast<double>(points.size()));
  return fit;
}

/// Inverts a herald click probability to a mean-pair-number estimate in the
/// linear (low-mean) regime: strips the dark-count floor, then divides by the
/// idler-arm detection efficiency. Threshold saturation makes this a slight
/// underestimate at larger means.
inline double mean_pairs_from_herald_prob(double p_h,
                                          const DetectorParams& det) {
  const double b = det.eta_channel_i * det.eta_spd;
  if (b <= 0.0)
    throw std::invalid_argument(
        "mean_pairs_from_herald_prob: idler arm has zero efficiency");
  if (p_h < 0.0 || p_h > 1.0)
    throw std::invalid_argument(
        "mean_pairs_from_herald_prob: probability outside [0,1]");
  const double p_photon = 1.0 - (1.0 - p_h) / (1.0 - det.dark_prob);
  return std::max(0.0, p_photon) / b;
}

/// Herald probabilities measured at several pump levels plus the refitted
/// quadratic coefficient. Levels use independent derived seeds so their
/// statistical errors are uncorrelated.
struct PumpSweepResult {
  std::vector<std::pair<double, double>> points;  ///< (pump, herald prob)
  PumpFit fit;
};

inline PumpSweepResult run_pump_sweep(SourceParams src,
                                      const DetectorParams& det,
                                      const std::vector<double>& pump_levels,
                                      uint64_t pulses_per_level, uint64_t seed,
                                      int n_threads = 0) {
  if (pump_levels.size() < 2)
    throw std::invalid_argument("run_pump_sweep: need at least 2 pump levels");
  PumpSweepResult result;
  result.points.reserve(pump_levels.size());
  for (size_t i = 0; i < pump_levels.size(); ++i) {
    src.pump_photons = pump_levels[i];
    const CountsRecord rec = run_counting_experiment(
        src, det, pulses_per_level, derive_seed(seed, i), n_threads);
    result.points.emplace_back(
        pump_levels[i],
        static_cast<double>(rec.N_h) / static_cast<double>(rec.n_pulses));
  }
  result.fit = fit_pump_quadratic(result.points);
  return result;
}

}  // namespace hspsim
