#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hspsim/counting.hpp"
#include "hspsim/errors.hpp"
#include "hspsim/homodyne.hpp"

namespace hspsim {

/// Subtracts the sample mean. Output mean is zero to within accumulation
/// roundoff (compensated summation keeps it under 1e-12 for realistic
/// datasets).
inline std::vector<double> center(std::vector<double> values) {
  if (values.size() < 2)
    throw std::invalid_argument("center: need at least 2 values");
  double sum = 0.0, comp = 0.0;
  for (double v : values) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  const double mean = sum / static_cast<double>(values.size());
  for (double& v : values) v -= mean;
  return values;
}

namespace detail {

/// Unbiased sample variance about the sample mean.
inline double sample_variance(const std::vector<double>& values) {
  if (values.size() < 2)
    throw std::invalid_argument("variance: need at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

}  // namespace detail

/// Calibration factor g = 1/sqrt(2 Var) mapping raw vacuum peaks onto the
/// convention Var(vacuum quadrature) = 1/2. The same factor must be applied
/// to the heralded dataset taken at identical settings.
inline double calibrate_scale(const std::vector<double>& vacuum) {
  const double var = detail::sample_variance(vacuum);
  if (!(var > 0.0))
    throw std::invalid_argument("calibrate_scale: zero vacuum variance");
  return 1.0 / std::sqrt(2.0 * var);
}

/// Variance of the heralded dataset relative to vacuum, in decibels.
inline double variance_db(const std::vector<double>& heralded,
                          const std::vector<double>& vacuum) {
  const double var_v = detail::sample_variance(vacuum);
  if (!(var_v > 0.0))
    throw std::invalid_argument("variance_db: zero vacuum variance");
  return 10.0 * std::log10(detail::sample_variance(heralded) / var_v);
}

/// Result of the vacuum/single-photon mixture fit.
struct MixtureFit {
  double eta = 0.0;
  double log_likelihood = 0.0;
  double stderr_eta = 0.0;
  bool converged = false;
  uint64_t n_samples = 0;
};

/// Maximum-likelihood fit of P(x) = (1-eta) P_0(x) + eta P_1(x) on
/// centered, calibrated samples. The mixture factorizes as
/// exp(-x^2)/sqrt(pi) * ((1-eta) + 2 eta x^2), so the likelihood is
/// evaluated in log space with no underflow and its derivative is strictly
/// decreasing in eta: bisection on dl/deta converges to the unique optimum
/// or a boundary. The standard error comes from observed Fisher
/// information.
inline MixtureFit fit_mixture_eta(const std::vector<double>& values) {
  if (values.size() < 100)
    throw std::invalid_argument("fit_mixture_eta: need at least 100 samples");
  for (double v : values) {
    if (!std::isfinite(v))
      throw std::invalid_argument("fit_mixture_eta: non-finite sample");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  if (*lo_it == *hi_it)
    throw std::invalid_argument(
        "fit_mixture_eta: degenerate dataset (all values equal)");

  // Per-sample weight w = 2x^2 - 1; mixture density is proportional to
  // 1 + eta * w, with the eta-free factor dropped from the derivative.
  std::vector<double> w(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    w[i] = 2.0 * values[i] * values[i] - 1.0;

  const auto dlogl = [&](double eta) {
    double d = 0.0;
    for (double wi : w) d += wi / (1.0 + eta * wi);
    return d;
  };
  const auto loglike = [&](double eta) {
    double l = 0.0;
    for (size_t i = 0; i < values.size(); ++i)
      l += -values[i] * values[i] + std::log1p(eta * w[i]);
    return l - static_cast<double>(values.size()) * 0.5 * std::log(M_PI);
  };
  const auto fisher = [&](double eta) {
    double f = 0.0;
    for (double wi : w) {
      const double r = wi / (1.0 + eta * wi);
      f += r * r;
    }
    return f;
  };

  MixtureFit fit;
  fit.n_samples = values.size();
  double lo = 0.0, hi = 1.0;
  const double d0 = dlogl(0.0);
  const double d1 = dlogl(1.0);
  if (d0 <= 0.0) {
    fit.eta = 0.0;
    fit.converged = true;
  } else if (std::isfinite(d1) && d1 >= 0.0) {
    fit.eta = 1.0;
    fit.converged = true;
  } else {
    double mid = 0.5;
    for (int iter = 0; iter < 200; ++iter) {
      mid = 0.5 * (lo + hi);
      const double d = dlogl(mid);
      if (std::abs(d) < 1e-8) break;
      if (d > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    fit.eta = mid;
    fit.converged = std::abs(dlogl(mid)) < 1e-8 || hi - lo < 1e-14;
  }
  fit.log_likelihood = loglike(fit.eta);
  const double info = fisher(fit.eta);
  fit.stderr_eta = info > 0.0 ? 1.0 / std::sqrt(info)
                              : std::numeric_limits<double>::infinity();
  return fit;
}

/// Mode-match efficiency left over once heralding, HD quantum efficiency,
/// and transmission are divided out of the overall efficiency. A result
/// above 1 is flagged as an inconsistent budget.
inline FlaggedValue efficiency_budget(double eta_total, double eta_h,
                                      double eta_hd, double eta_t) {
  const auto in_range = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_range(eta_total) || !in_range(eta_h) || !in_range(eta_hd) ||
      !in_range(eta_t))
    throw std::invalid_argument(
        "efficiency_budget: all efficiencies must be in (0,1]");
  FlaggedValue out;
  out.value = eta_total / (eta_h * eta_hd * eta_t);
  out.warning = out.value > 1.0;
  return out;
}

/// Equal-width histogram spanning [min, max].
struct Histogram {
  std::vector<double> bin_edges;  ///< ascending, counts.size() + 1 entries
  std::vector<uint64_t> counts;
  uint64_t total = 0;
};

/// Bins values into n_bins equal-width bins over their range. A value on an
/// interior edge joins the upper bin; the global maximum joins the last
/// bin. An all-equal dataset occupies a single bin of a unit-width span.
inline Histogram build_histogram(const std::vector<double>& values,
                                 int n_bins) {
  if (values.empty())
    throw std::invalid_argument("build_histogram: empty input");
  if (n_bins < 2)
    throw std::invalid_argument("build_histogram: need at least 2 bins");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.bin_edges.resize(n_bins + 1);
  const double width = (hi - lo) / n_bins;
  for (int k = 0; k <= n_bins; ++k) h.bin_edges[k] = lo + width * k;
  h.bin_edges.back() = hi;
  h.counts.assign(n_bins, 0);
  for (double v : values) {
    int idx = static_cast<int>((v - lo) / width);
    idx = std::clamp(idx, 0, n_bins - 1);
    ++h.counts[idx];
  }
  h.total = values.size();
  return h;
}

/// CDF of the vacuum quadrature density P_0.
inline double fock0_cdf(double x) { return 0.5 * (1.0 + std::erf(x)); }

/// CDF of the one-photon quadrature density P_1.
inline double fock1_cdf(double x) {
  return fock0_cdf(x) - x * std::exp(-x * x) / std::sqrt(M_PI);
}

/// CDF of the two-component mixture (1-eta) P_0 + eta P_1.
inline double mixture_cdf(double eta, double x) {
  return (1.0 - eta) * fock0_cdf(x) + eta * fock1_cdf(x);
}

/// Model probability mass per histogram bin under the fitted mixture, with
/// the open tails folded into the first and last bins so the masses sum
/// to 1.
inline std::vector<double> mixture_bin_masses(
    double eta, const std::vector<double>& edges) {
  if (edges.size() < 2)
    throw std::invalid_argument("mixture_bin_masses: need at least one bin");
  std::vector<double> masses(edges.size() - 1);
  for (size_t k = 0; k + 1 < edges.size(); ++k)
    masses[k] = mixture_cdf(eta, edges[k + 1]) - mixture_cdf(eta, edges[k]);
  masses.front() += mixture_cdf(eta, edges.front());
  masses.back() += 1.0 - mixture_cdf(eta, edges.back());
  return masses;
}

/// Regularized upper incomplete gamma Q(a, x): series for the lower part
/// when x < a + 1, Lentz continued fraction for the upper part otherwise.
/// Q(dof/2, chi2/2) is the chi-square upper tail probability.
inline double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0)
    throw std::invalid_argument("regularized_gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return 1.0 - std::exp(log_prefix) * sum;
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double f = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(log_prefix) * f;
}

/// Chi-square goodness-of-fit summary.
struct GofResult {
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Pearson chi-square of a histogram against the fitted two-component
/// mixture. Adjacent bins are merged left to right until every expected
/// count reaches 5 (the usual validity rule); degrees of freedom are the
/// merged bin count minus one minus the one fitted parameter.
inline GofResult chi_square_mixture_gof(const Histogram& hist, double eta) {
  if (hist.counts.size() + 1 != hist.bin_edges.size() || hist.total == 0)
    throw std::invalid_argument("chi_square_mixture_gof: malformed histogram");
  const std::vector<double> masses = mixture_bin_masses(eta, hist.bin_edges);
  const double n = static_cast<double>(hist.total);

  std::vector<double> expected;
  std::vector<double> observed;
  double acc_e = 0.0, acc_o = 0.0;
  for (size_t k = 0; k < hist.counts.size(); ++k) {
    acc_e += n * masses[k];
    acc_o += static_cast<double>(hist.counts[k]);
    if (acc_e >= 5.0) {
      expected.push_back(acc_e);
      observed.push_back(acc_o);
      acc_e = acc_o = 0.0;
    }
  }
  if (acc_e > 0.0 || acc_o > 0.0) {
    if (expected.empty()) {
      expected.push_back(acc_e);
      observed.push_back(acc_o);
    } else {
      expected.back() += acc_e;
      observed.back() += acc_o;
    }
  }
  if (expected.size() < 3)
    throw std::invalid_argument(
        "chi_square_mixture_gof: too few populated bins after merging");

  GofResult gof;
  for (size_t k = 0; k < expected.size(); ++k) {
    const double d = observed[k] - expected[k];
    gof.chi2 += d * d / expected[k];
  }
  gof.dof = static_cast<int>(expected.size()) - 2;
  gof.p_value = regularized_gamma_q(0.5 * gof.dof, 0.5 * gof.chi2);
  return gof;
}

}  // namespace hspsim
