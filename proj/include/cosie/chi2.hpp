#ifndef COSIE_CHI2_HPP
#define COSIE_CHI2_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cosie/error.hpp"

namespace cosie {

namespace detail {

// Regularized incomplete gamma; returns {P(a,x), Q(a,x)}.
inline std::pair<double, double> incomplete_gamma(double a, double x) {
  if (x <= 0.0) return {0.0, 1.0};
  const double log_prefix = a * std::log(x) - x - std::lgamma(a);
  constexpr double eps = 1e-16;
  if (x < a + 1.0) {
    double term = 1.0 / a;
    double sum = term;
    for (int k = 1; k < 10000; ++k) {
      term *= x / (a + k);
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    const double p = std::min(1.0, std::exp(log_prefix) * sum);
    return {p, 1.0 - p};
  }
  // Lentz continued fraction for Q.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 10000; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  const double q = std::min(1.0, std::exp(log_prefix) * h);
  return {1.0 - q, q};
}

inline void check_chi2_args(double x, double df) {
  require(std::isfinite(x) && x >= 0.0, Errc::domain, "chi-square argument must be finite and >= 0");
  require(std::isfinite(df) && df > 0.0, Errc::domain, "degrees of freedom must be positive");
}

}  // namespace detail

inline double chi2_cdf(double x, double df) {
  detail::check_chi2_args(x, df);
  return detail::incomplete_gamma(0.5 * df, 0.5 * x).first;
}

/// Upper tail 1 - cdf, computed directly so small p-values keep precision.
inline double chi2_sf(double x, double df) {
  detail::check_chi2_args(x, df);
  return detail::incomplete_gamma(0.5 * df, 0.5 * x).second;
}

inline double chi2_quantile(double p, double df) {
  require(p >= 0.0 && p < 1.0, Errc::domain, "quantile level must lie in [0,1)");
  require(std::isfinite(df) && df > 0.0, Errc::domain, "degrees of freedom must be positive");
  if (p == 0.0) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, df);
  while (chi2_cdf(hi, df) < p) hi *= 2.0;
  // Wilson-Hilferty start (normal quantile from a rational approximation), then safeguarded Newton.
  const double t = std::sqrt(-2.0 * std::log(std::min(p, 1.0 - p)));
  const double zt = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) /
                            (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
  const double z = p < 0.5 ? -zt : zt;
  const double h = 2.0 / (9.0 * df);
  double x = df * std::pow(std::max(1.0 - h + z * std::sqrt(h), 1e-3), 3.0);
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
  const double k = 0.5 * df;
  for (int it = 0; it < 200; ++it) {
    const double f = chi2_cdf(x, df) - p;
    if (f < 0.0) lo = x; else hi = x;
    if (std::abs(f) < 1e-15 || hi - lo < 1e-14 * std::max(1.0, x)) break;
    const double logpdf = (k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k);
    double next = x - f / std::exp(logpdf);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

/// Noncentral chi-square cdf as a Poisson(eta/2) mixture of central cdfs.
inline double noncentral_chi2_cdf(double x, double df, double eta) {
  detail::check_chi2_args(x, df);
  require(std::isfinite(eta) && eta >= 0.0, Errc::domain, "noncentrality must be >= 0");
  if (eta == 0.0) return chi2_cdf(x, df);
  const double lam = 0.5 * eta;
  const int center = static_cast<int>(std::floor(lam));
  auto weight = [lam](int j) { return std::exp(j * std::log(lam) - lam - std::lgamma(j + 1.0)); };
  double total = 0.0;
  for (int j = center; j < center + 100000; ++j) {
    const double w = weight(j);
    total += w * chi2_cdf(x, df + 2.0 * j);
    if (j > center && w < 1e-17) break;
  }
  for (int j = center - 1; j >= 0; --j) {
    const double w = weight(j);
    total += w * chi2_cdf(x, df + 2.0 * j);
    if (w < 1e-17) break;
  }
  return std::clamp(total, 0.0, 1.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Kolmogorov-Smirnov distance between a sample and a continuous cdf.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf&& cdf) {
  require(!sample.empty(), Errc::insufficient_samples, "KS distance needs a non-empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

}  // namespace cosie

#endif  // COSIE_CHI2_HPP
