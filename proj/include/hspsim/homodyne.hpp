#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hspsim/counting.hpp"
#include "hspsim/errors.hpp"
#include "hspsim/pair_source.hpp"
#include "hspsim/rng.hpp"

namespace hspsim {

/// Record length of a synthesized waveform in ns; covers the ~150 ns
/// response tail with margin.
inline constexpr double kRecordNs = 200.0;

/// Photon-number mixture of the heralded conditional state.
struct FockMixture {
  std::vector<double> probs;  ///< p_0 .. p_nmax

  void validate() const {
    if (probs.empty())
      throw std::invalid_argument("mixture.probs: must not be empty");
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0))
        throw std::invalid_argument("mixture.probs: negative component");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("mixture.probs: must sum to 1");
  }
};

/// Detector response and artifact model for one homodyne output pulse.
/// The double-exponential kernel is pinned to the instrument it mimics:
/// sharp rise, 50 +/- 2 ns FWHM, tail reaching about 150 ns.
struct PulseShapeParams {
  double tau_rise = 3.2;       ///< rise time constant, ns
  double tau_fall = 57.0;      ///< fall time constant, ns
  double window_ns = 50.0;     ///< peak-search window length
  double leak_amplitude = 0.0; ///< LO leak oscillation amplitude, volts
  double leak_freq_hz = 37e6;  ///< leak oscillation frequency
  double noise_sigma = 0.005;  ///< electronic noise per sample, volts
  double sample_rate = 1e9;    ///< waveform samples per second
  double gain = 1.0;           ///< volts per quadrature unit

  void validate() const;
};

/// Normalized photodiode response: k(t) = c*(exp(-t/tau_fall) -
/// exp(-t/tau_rise)) for t >= 0 (ns), zero before the trigger, peak 1.
inline double response_kernel(double t_ns, const PulseShapeParams& p) {
  if (!(p.tau_rise > 0.0) || p.tau_rise >= p.tau_fall)
    throw std::invalid_argument(
        "pulse_shape.tau_rise: must satisfy 0 < tau_rise < tau_fall");
  if (t_ns < 0.0) return 0.0;
  const double t_peak = std::log(p.tau_fall / p.tau_rise) * p.tau_rise *
                        p.tau_fall / (p.tau_fall - p.tau_rise);
  const double peak =
      std::exp(-t_peak / p.tau_fall) - std::exp(-t_peak / p.tau_rise);
  return (std::exp(-t_ns / p.tau_fall) - std::exp(-t_ns / p.tau_rise)) / peak;
}

/// Time of the kernel maximum, ns.
inline double kernel_peak_time(const PulseShapeParams& p) {
  return std::log(p.tau_fall / p.tau_rise) * p.tau_rise * p.tau_fall /
         (p.tau_fall - p.tau_rise);
}

/// Full width at half maximum of the kernel, ns, by bisection on both
/// flanks.
inline double kernel_fwhm(const PulseShapeParams& p) {
  const double t_peak = kernel_peak_time(p);
  const auto cross = [&](double lo, double hi) {
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      const bool above = response_kernel(mid, p) > 0.5;
      const bool rising = mid < t_peak;
      if (above == rising)
        hi = mid;
      else
        lo = mid;
    }
    return 0.5 * (lo + hi);
  };
  double tail = t_peak;
  while (response_kernel(tail, p) > 0.5) tail *= 2.0;
  const double left = cross(0.0, t_peak);
  const double right = cross(t_peak, tail);
  return right - left;
}

inline void PulseShapeParams::validate() const {
  if (!(tau_rise > 0.0) || tau_rise >= tau_fall)
    throw std::invalid_argument(
        "pulse_shape.tau_rise: must satisfy 0 < tau_rise < tau_fall");
  if (!(window_ns > 0.0) || window_ns > kRecordNs)
    throw std::invalid_argument(
        "pulse_shape.window_ns: must be in (0, " + std::to_string(kRecordNs) +
        "]");
  if (leak_amplitude < 0.0)
    throw std::invalid_argument("pulse_shape.leak_amplitude: must be >= 0");
  if (!(leak_freq_hz > 0.0))
    throw std::invalid_argument("pulse_shape.leak_freq_hz: must be > 0");
  if (noise_sigma < 0.0)
    throw std::invalid_argument("pulse_shape.noise_sigma: must be >= 0");
  if (!(gain > 0.0))
    throw std::invalid_argument("pulse_shape.gain: must be > 0");
  const double fwhm = kernel_fwhm(*this);
  if (fwhm < 48.0 || fwhm > 52.0)
    throw std::invalid_argument(
        "pulse_shape.tau_rise/tau_fall: kernel FWHM " + std::to_string(fwhm) +
        " ns outside the instrument's 50 +/- 2 ns");
  if (!(sample_rate > 0.0) || sample_rate * fwhm * 1e-9 < 10.0)
    throw std::invalid_argument(
        "pulse_shape.sample_rate: below 10 samples per kernel FWHM");
}

/// One synthesized detector record, sampled at fixed spacing from the
/// trigger: sample k sits at t = k * dt_ns.
struct Waveform {
  double dt_ns = 0.0;
  std::vector<double> samples;
};

/// Precomputes the kernel and leak-oscillation tables once so per-pulse
/// synthesis is table lookups plus the noise stream. The free function
/// synthesize_waveform delegates here, so both paths produce identical
/// samples.
class WaveformSynthesizer {
 public:
  explicit WaveformSynthesizer(const PulseShapeParams& p) : p_(p) {
    p.validate();
    dt_ns_ = 1e9 / p.sample_rate;
    const int n = static_cast<int>(std::floor(kRecordNs / dt_ns_)) + 1;
    kernel_.resize(n);
    leak_sin_.resize(n);
    leak_cos_.resize(n);
    const double omega = 2.0 * M_PI * p.leak_freq_hz * 1e-9;  // rad per ns
    for (int k = 0; k < n; ++k) {
      const double t = k * dt_ns_;
      kernel_[k] = response_kernel(t, p);
      leak_sin_[k] = std::sin(omega * t);
      leak_cos_[k] = std::cos(omega * t);
    }
  }

  /// Record of pulse `pulse_index` carrying quadrature value x. Waveform =
  /// gain*x*k(t) + leak*sin(2 pi f t + theta(pulse)) + per-sample Gaussian
  /// noise; theta is uniform per pulse. Zero-amplitude components draw
  /// nothing from the stream.
  void synthesize(double x, uint64_t pulse_index, uint64_t seed,
                  Waveform* out) const {
    PulseRng rng(seed, RngStream::kWaveform, pulse_index);
    double sin_theta = 0.0, cos_theta = 1.0;
    if (p_.leak_amplitude != 0.0) {
      const double theta = 2.0 * M_PI * rng.uniform();
      sin_theta = std::sin(theta);
      cos_theta = std::cos(theta);
    }
    const double amp = p_.gain * x;
    out->dt_ns = dt_ns_;
    out->samples.resize(kernel_.size());
    for (size_t k = 0; k < kernel_.size(); ++k) {
      double v = amp * kernel_[k];
      if (p_.leak_amplitude != 0.0)
        v += p_.leak_amplitude *
             (leak_sin_[k] * cos_theta + leak_cos_[k] * sin_theta);
      if (p_.noise_sigma != 0.0) v += p_.noise_sigma * rng.gaussian();
      out->samples[k] = v;
    }
  }

  double dt_ns() const { return dt_ns_; }

 private:
  PulseShapeParams p_;
  double dt_ns_ = 0.0;
  std::vector<double> kernel_;
  std::vector<double> leak_sin_;
  std::vector<double> leak_cos_;
};

inline Waveform synthesize_waveform(double x, const PulseShapeParams& p,
                                    uint64_t pulse_index, uint64_t seed) {
  const WaveformSynthesizer synth(p);
  Waveform out;
  synth.synthesize(x, pulse_index, seed, &out);
  return out;
}

/// Signed extremum of largest magnitude within [0, window_ns] after the
/// trigger. The sign carries the quadrature sign, which a plain maximum
/// would lose for negative gain*x.
inline double extract_peak(const Waveform& wf, double window_ns) {
  if (wf.samples.empty() || wf.dt_ns <= 0.0)
    throw std::invalid_argument("extract_peak: empty waveform");
  if (!(window_ns > 0.0) ||
      window_ns > wf.dt_ns * static_cast<double>(wf.samples.size() - 1))
    throw std::invalid_argument("extract_peak: window outside the record");
  const size_t last = static_cast<size_t>(window_ns / wf.dt_ns);
  double best = wf.samples[0];
  for (size_t k = 1; k <= last; ++k) {
    if (std::abs(wf.samples[k]) > std::abs(best)) best = wf.samples[k];
  }
  return best;
}

/// Photon-number distribution of the signal arm conditioned on a herald
/// click, thinned by the single overall efficiency eta_total (heralding
/// loss, transmission, HD quantum efficiency, and mode match commute into
/// one binomial loss for number-diagonal states). The signal-channel field
/// of `det` plays no role here: eta_total replaces the entire signal path.
///
/// Enumeration runs over the pair/Raman lattice up to `cutoff` photons; if
/// the conditional distribution holds less than 1 - 1e-6 of its mass inside
/// the lattice, the cutoff is rejected as too small.
inline FockMixture heralded_fock_mixture(const SourceParams& src,
                                         const DetectorParams& det,
                                         double eta_total, int cutoff) {
  if (!(eta_total >= 0.0) || eta_total > 1.0)
    throw std::invalid_argument(
        "heralded_fock_mixture: eta_total outside [0,1]");
  if (cutoff < 2)
    throw std::invalid_argument("heralded_fock_mixture: cutoff must be >= 2");
  src.validate();
  det.validate();

  const double bi = det.eta_channel_i * det.eta_spd;
  const double live = 1.0 - det.dark_prob;
  const double mu = src.mean_pairs();

  // Total-pair distribution: convolution of the per-mode geometric laws.
  std::vector<double> pair_pmf{1.0};
  for (double w : src.schmidt_weights) {
    const double m = mu * w;
    if (m <= 0.0) continue;
    const double q = m / (1.0 + m);
    std::vector<double> mode(cutoff + 1);
    mode[0] = 1.0 / (1.0 + m);
    for (int n = 1; n <= cutoff; ++n) mode[n] = mode[n - 1] * q;
    std::vector<double> next(cutoff + 1, 0.0);
    for (size_t a = 0; a < pair_pmf.size(); ++a)
      for (int b = 0; a + b <= static_cast<size_t>(cutoff); ++b)
        next[a + b] += pair_pmf[a] * mode[b];
    pair_pmf = std::move(next);
  }
  pair_pmf.resize(cutoff + 1, 0.0);

  // Herald probability given T pairs, with the idler Raman background and
  // the dark count folded in through their generating functions:
  // P(h|T) = 1 - (1-dark) * exp(-lambda_i * bi) * (1-bi)^T.
  const double raman_factor = std::exp(-src.raman_mean_i * bi);
  const auto herald_given_pairs = [&](int t) {
    return 1.0 - live * raman_factor * std::pow(1.0 - bi, t);
  };

  // Exact herald probability (closed form, no truncation) for the mass
  // check: E[(1-bi)^T] is a product over modes of 1/(1 + m_k * bi).
  double survivor_moment = 1.0;
  for (double w : src.schmidt_weights) {
    const double m = mu * w;
    if (m > 0.0) survivor_moment /= 1.0 + m * bi;
  }
  const double p_herald = 1.0 - live * raman_factor * survivor_moment;
  if (p_herald <= 0.0)
    throw EstimatorUndefined(
        "heralded_fock_mixture: herald probability is zero");

  // Signal photons = pairs + signal-arm Raman background.
  std::vector<double> raman_pmf{1.0};
  if (src.raman_mean_s > 0.0) {
    raman_pmf.resize(cutoff + 1);
    raman_pmf[0] = std::exp(-src.raman_mean_s);
    for (int k = 1; k <= cutoff; ++k)
      raman_pmf[k] = raman_pmf[k - 1] * src.raman_mean_s / k;
  }
  std::vector<double> joint(cutoff + 1, 0.0);
  for (int t = 0; t <= cutoff; ++t) {
    const double wt = pair_pmf[t] * herald_given_pairs(t);
    if (wt <= 0.0) continue;
    for (size_t r = 0; r < raman_pmf.size(); ++r) {
      if (t + r > static_cast<size_t>(cutoff)) break;
      joint[t + r] += wt * raman_pmf[r];
    }
  }
  double kept = 0.0;
  for (double v : joint) kept += v;
  if (kept / p_herald < 1.0 - 1e-6)
    throw CutoffTooSmall(
        "heralded_fock_mixture: conditional mass below 1 - 1e-6 at cutoff " +
        std::to_string(cutoff));

  // Binomial thinning by eta_total, then renormalization.
  FockMixture mix;
  mix.probs.assign(cutoff + 1, 0.0);
  std::vector<double> binom(cutoff + 1, 0.0);
  for (int m = 0; m <= cutoff; ++m) {
    // binom[k] = C(m,k) eta^k (1-eta)^(m-k), built by the Pascal step.
    if (m == 0) {
      binom[0] = 1.0;
    } else {
      for (int k = m; k >= 1; --k)
        binom[k] = binom[k] * (1.0 - eta_total) + binom[k - 1] * eta_total;
      binom[0] *= 1.0 - eta_total;
    }
    for (int k = 0; k <= m; ++k) mix.probs[k] += joint[m] * binom[k];
  }
  for (double& p : mix.probs) p /= kept;
  return mix;
}

/// Quadrature density of the n-photon Fock state, P_n(x) =
/// H_n(x)^2 exp(-x^2) / (2^n n! sqrt(pi)), evaluated through the
/// normalized-oscillator recurrence so large n stays finite.
inline double fock_quadrature_pdf(int n, double x) {
  if (n < 0)
    throw std::invalid_argument("fock_quadrature_pdf: n must be >= 0");
  const double phi0 = std::pow(M_PI, -0.25) * std::exp(-0.5 * x * x);
  if (n == 0) return phi0 * phi0;
  double prev = 0.0;
  double cur = phi0;
  for (int k = 0; k < n; ++k) {
    const double next = x * std::sqrt(2.0 / (k + 1)) * cur -
                        std::sqrt(static_cast<double>(k) / (k + 1)) * prev;
    prev = cur;
    cur = next;
  }
  return cur * cur;
}

namespace detail {

/// Rejection-envelope constants M_n = max_x P_n(x) / N(x; 0, n+1), scanned
/// once per photon number (deterministic, no RNG involved).
inline double fock_envelope_bound(int n) {
  static constexpr int kMax = 64;
  static const std::vector<double> bounds = [] {
    std::vector<double> b(kMax + 1, 0.0);
    for (int n = 0; n <= kMax; ++n) {
      const double sigma2 = n + 1.0;
      const double norm = 1.0 / std::sqrt(2.0 * M_PI * sigma2);
      double best = 0.0;
      const double span = 6.0 * std::sqrt(sigma2);
      for (int i = 0; i <= 6000; ++i) {
        const double x = -span + 2.0 * span * i / 6000.0;
        const double envelope = norm * std::exp(-0.5 * x * x / sigma2);
        best = std::max(best, fock_quadrature_pdf(n, x) / envelope);
      }
      b[n] = best * 1.05;  // headroom over the scan grid
    }
    return b;
  }();
  if (n > kMax)
    throw std::invalid_argument(
        "sample_quadrature: photon number beyond sampler table");
  return bounds[n];
}

}  // namespace detail

/// One quadrature sample of the mixture: draws the photon number, then
/// rejection-samples P_n under a N(0, n+1) envelope. Number-diagonal states
/// are phase-insensitive, so `phase` is accepted and ignored.
inline double sample_quadrature(const FockMixture& mix, double phase,
                                uint64_t pulse_index, uint64_t seed) {
  (void)phase;
  mix.validate();
  PulseRng rng(seed, RngStream::kQuadrature, pulse_index);
  double u = rng.uniform();
  int n = 0;
  for (size_t k = 0; k < mix.probs.size(); ++k) {
    if (u < mix.probs[k] || k + 1 == mix.probs.size()) {
      n = static_cast<int>(k);
      break;
    }
    u -= mix.probs[k];
  }
  const double sigma = std::sqrt(n + 1.0);
  const double bound = detail::fock_envelope_bound(n);
  const double norm = 1.0 / std::sqrt(2.0 * M_PI) / sigma;
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const double x = sigma * rng.gaussian();
    const double envelope =
        bound * norm * std::exp(-0.5 * x * x / (sigma * sigma));
    if (envelope * rng.uniform() < fock_quadrature_pdf(n, x)) return x;
  }
  throw std::logic_error("sample_quadrature: rejection sampler stalled");
}

/// Labeled set of extracted, processed peak values.
struct QuadratureDataset {
  std::vector<double> values;
  std::string label;        ///< "vacuum" or "heralded"
  uint64_t n_records = 0;
  double scale_gain = 1.0;  ///< calibration factor already applied
};

}  // namespace hspsim
