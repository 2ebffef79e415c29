#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include <Eigen/Dense>

#include "gbn/errors.hpp"
#include "gbn/rng.hpp"

namespace gbn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Smallest value a positive draw is allowed to take. Gamma draws with tiny
// shapes can underflow to exact zero, which would break the strict-positivity
// invariants downstream (log of a zero scale, zero partition rates).
inline constexpr double kTinyPositive = 1e-300;

// ---------------------------------------------------------------------------
// Standard variates (gamma, beta, Dirichlet, Poisson, binomial, multinomial
// partition). The engine-level draws come from libstdc++ <random>; the
// wrappers enforce the domain contracts used by the sampler.
// ---------------------------------------------------------------------------

inline double sample_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw ParameterError("sample_gamma: shape and scale must be positive");
  }
  std::gamma_distribution<double> dist(shape, scale);
  double x = dist(rng);
  return x > kTinyPositive ? x : kTinyPositive;
}

inline double sample_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("sample_beta: both shapes must be positive");
  }
  double x = sample_gamma(a, 1.0, rng);
  double y = sample_gamma(b, 1.0, rng);
  double p = x / (x + y);
  if (p < kTinyPositive) p = kTinyPositive;
  if (p > 1.0 - 1e-16) p = 1.0 - 1e-16;
  return p;
}

inline Vector sample_dirichlet(const Vector& concentration, RngStream& rng) {
  if (concentration.size() == 0) {
    throw ParameterError("sample_dirichlet: empty concentration vector");
  }
  Vector draw(concentration.size());
  for (Eigen::Index k = 0; k < concentration.size(); ++k) {
    draw[k] = sample_gamma(concentration[k], 1.0, rng);
  }
  draw /= draw.sum();
  return draw;
}

inline std::int64_t sample_poisson(double lambda, RngStream& rng) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw ParameterError("sample_poisson: rate must be finite and nonnegative");
  }
  if (lambda == 0.0) return 0;
  std::poisson_distribution<std::int64_t> dist(lambda);
  return dist(rng);
}

inline std::int64_t sample_binomial(std::int64_t n, double p, RngStream& rng) {
  if (n < 0 || p < 0.0 || p > 1.0) {
    throw ParameterError("sample_binomial: need n >= 0 and p in [0,1]");
  }
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  std::binomial_distribution<std::int64_t> dist(n, p);
  return dist(rng);
}

// Splits `total` into counts proportional to `weights` (one multinomial draw,
// realized as a chain of binomials). The output sums to `total` exactly.
inline CountVector sample_multinomial_partition(std::int64_t total,
                                                const Vector& weights,
                                                RngStream& rng) {
  const Eigen::Index k_count = weights.size();
  if (total < 0) throw ParameterError("partition: total must be nonnegative");
  if (k_count == 0) throw ParameterError("partition: empty weight vector");
  CountVector out = CountVector::Zero(k_count);
  if (total == 0) return out;

  // Suffix sums keep the conditional binomial probabilities consistent.
  Vector suffix(k_count);
  double acc = 0.0;
  for (Eigen::Index k = k_count - 1; k >= 0; --k) {
    double w = weights[k];
    if (w < 0.0 || !std::isfinite(w)) {
      throw ParameterError("partition: weights must be finite and nonnegative");
    }
    acc += w;
    suffix[k] = acc;
  }
  if (!(acc > 0.0)) {
    throw DegenerateRateError("partition: all-zero weights with positive total");
  }

  std::int64_t remaining = total;
  for (Eigen::Index k = 0; k + 1 < k_count && remaining > 0; ++k) {
    if (!(suffix[k] > 0.0)) {
      throw DegenerateRateError("partition: weight mass exhausted early");
    }
    double p = weights[k] / suffix[k];
    if (p > 1.0) p = 1.0;
    std::int64_t taken = sample_binomial(remaining, p, rng);
    out[k] = taken;
    remaining -= taken;
  }
  out[k_count - 1] += remaining;
  return out;
}

// ---------------------------------------------------------------------------
// Chinese restaurant table distribution. l ~ CRT(n, r) is generated by its
// constructive definition, the sum of n Bernoulli(r/(r+i-1)) indicators.
// Stirling numbers never enter; this is exact and O(n).
// ---------------------------------------------------------------------------

inline std::int64_t sample_crt(std::int64_t n, double r, RngStream& rng) {
  if (!(r > 0.0)) throw ParameterError("sample_crt: concentration must be positive");
  if (n < 0) throw ParameterError("sample_crt: n must be nonnegative");
  if (n == 0) return 0;
  std::int64_t tables = 1;  // i = 1 succeeds with probability r/r = 1
  for (std::int64_t i = 2; i <= n; ++i) {
    if (rng.uniform() * (r + static_cast<double>(i) - 1.0) < r) ++tables;
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Logarithmic distribution, PMF p^u / (-u ln(1-p)) on u >= 1.
// Kemp's O(1) generator (the algorithm used by GSL's gsl_ran_logarithmic).
// ---------------------------------------------------------------------------

inline std::int64_t sample_log(double p, RngStream& rng) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw ParameterError("sample_log: p must lie in (0,1)");
  }
  const double c = std::log1p(-p);
  double v = rng.uniform_pos();
  if (v >= p) return 1;
  double u = rng.uniform_pos();
  double q = -std::expm1(c * u);  // 1 - (1-p)^u
  if (v <= q * q) {
    double k = 1.0 + std::log(v) / std::log(q);
    return static_cast<std::int64_t>(k);
  }
  return (v <= q) ? 2 : 1;
}

inline double log_pmf_logarithmic(std::int64_t u, double p) {
  if (u < 1) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(u) * std::log(p) - std::log(static_cast<double>(u)) -
         std::log(-std::log1p(-p));
}

// ---------------------------------------------------------------------------
// Zero-truncated Poisson, PMF (1-e^{-lambda})^{-1} lambda^k e^{-lambda}/k! on
// k >= 1. For lambda >= 1, rejection from Pois(lambda) keeps acceptance at
// 1 - e^{-lambda} >= 63.2%; below 1 the rejection rate degrades, so inversion
// on the truncated PMF takes over.
// ---------------------------------------------------------------------------

namespace detail {

inline std::int64_t sample_truncated_poisson_rejection(double lambda, RngStream& rng,
                                                       std::uint64_t* attempts) {
  for (;;) {
    if (attempts) ++*attempts;
    std::int64_t k = sample_poisson(lambda, rng);
    if (k >= 1) return k;
  }
}

inline std::int64_t sample_truncated_poisson_inversion(double lambda, RngStream& rng) {
  const double u = rng.uniform();
  double pmf = lambda / std::expm1(lambda);  // P(k=1)
  double cdf = pmf;
  std::int64_t k = 1;
  while (u >= cdf) {
    ++k;
    pmf *= lambda / static_cast<double>(k);
    cdf += pmf;
    if (pmf < kTinyPositive && cdf >= 1.0 - 1e-12) break;
  }
  return k;
}

}  // namespace detail

inline std::int64_t sample_truncated_poisson(double lambda, RngStream& rng) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ParameterError("sample_truncated_poisson: rate must be positive");
  }
  if (lambda >= 1.0) {
    return detail::sample_truncated_poisson_rejection(lambda, rng, nullptr);
  }
  return detail::sample_truncated_poisson_inversion(lambda, rng);
}

inline double log_pmf_truncated_poisson(std::int64_t k, double lambda) {
  if (k < 1) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(k) * std::log(lambda) - lambda -
         std::lgamma(static_cast<double>(k) + 1.0) - std::log(-std::expm1(-lambda));
}

// ---------------------------------------------------------------------------
// Modified Bessel function I_{-1}(alpha) = I_1(alpha), evaluated in log space:
// the power series up to alpha = 600, the large-argument asymptotic expansion
// past that (the series' linear-space terms would overflow near e^alpha).
// ---------------------------------------------------------------------------

inline double log_bessel_i1(double alpha) {
  if (!(alpha > 0.0)) throw ParameterError("log_bessel_i1: alpha must be positive");
  if (alpha <= 600.0) {
    const double half = 0.5 * alpha;
    const double ratio = half * half;
    double term = half;  // m = 0 term: (a/2) / (0! 1!)
    double sum = term;
    for (int m = 1; m < 10000; ++m) {
      term *= ratio / (static_cast<double>(m) * (static_cast<double>(m) + 1.0));
      sum += term;
      if (term < sum * 1e-17) break;
    }
    return std::log(sum);
  }
  // I_1(z) ~ e^z/sqrt(2 pi z) [1 - 3/(8z) - 15/(128 z^2) - 105/(1024 z^3)]
  const double z = alpha;
  const double corr = -3.0 / (8.0 * z) - 15.0 / (128.0 * z * z) -
                      105.0 / (1024.0 * z * z * z);
  return z - 0.5 * std::log(2.0 * M_PI * z) + std::log1p(corr);
}

// ---------------------------------------------------------------------------
// Truncated Bessel distribution on n >= 1 with
//   PMF(n; alpha) = (alpha/2)^{2n-1} / (I_{-1}(alpha) n! (n-1)!).
// Sampled by CDF inversion with on-demand tail extension; successive PMF
// values follow the recurrence pmf(n+1)/pmf(n) = (alpha/2)^2 / (n (n+1)).
// ---------------------------------------------------------------------------

inline double log_pmf_truncated_bessel(std::int64_t n, double alpha) {
  if (n < 1) return -std::numeric_limits<double>::infinity();
  const double half = 0.5 * alpha;
  const double dn = static_cast<double>(n);
  return (2.0 * dn - 1.0) * std::log(half) - log_bessel_i1(alpha) -
         std::lgamma(dn + 1.0) - std::lgamma(dn);
}

inline double pmf_truncated_bessel(std::int64_t n, double alpha) {
  return std::exp(log_pmf_truncated_bessel(n, alpha));
}

inline std::int64_t sample_truncated_bessel(double alpha, RngStream& rng) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("sample_truncated_bessel: alpha must be positive");
  }
  const double u = rng.uniform();
  const double log_ratio_base = 2.0 * std::log(0.5 * alpha);
  double log_pmf = std::log(0.5 * alpha) - log_bessel_i1(alpha);  // n = 1
  double cdf = std::exp(log_pmf);
  std::int64_t n = 1;
  while (u >= cdf) {
    ++n;
    log_pmf += log_ratio_base -
               std::log(static_cast<double>(n - 1) * static_cast<double>(n));
    const double pmf = std::exp(log_pmf);
    cdf += pmf;
    // Past the mode the tail decays superexponentially; once increments are
    // below representable resolution the accumulated mass is all there is.
    if (pmf < 1e-320 && static_cast<double>(n) > 0.5 * alpha + 1.0) break;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Poisson randomized gamma distribution: x ~ Gam(n, 1/c) with n ~ Pois(lambda)
// and Gam(0, 1/c) := 0. Point mass e^{-lambda} at x = 0; continuous density
// e^{-lambda-cx} sqrt(lambda c / x) I_{-1}(2 sqrt(lambda c x)) for x > 0.
// ---------------------------------------------------------------------------

inline double prg_logdensity(double x, double lambda, double c) {
  if (x < 0.0) throw ParameterError("prg_logdensity: x must be nonnegative");
  if (!(lambda > 0.0) || !(c > 0.0)) {
    throw ParameterError("prg_logdensity: lambda and c must be positive");
  }
  if (x == 0.0) return -lambda;
  return -lambda - c * x + 0.5 * (std::log(lambda) + std::log(c) - std::log(x)) +
         log_bessel_i1(2.0 * std::sqrt(lambda * c * x));
}

inline double sample_prg(double lambda, double c, RngStream& rng) {
  if (!(lambda > 0.0) || !(c > 0.0)) {
    throw ParameterError("sample_prg: lambda and c must be positive");
  }
  std::int64_t n = sample_poisson(lambda, rng);
  if (n == 0) return 0.0;
  return sample_gamma(static_cast<double>(n), 1.0 / c, rng);
}

// ---------------------------------------------------------------------------
// Poisson-logarithmic bivariate distribution: l ~ Pois(-r ln(1-p)), then
// n = sum of l Log(p) variables. The joint law of (n, l) equals that of
// n ~ NB(r, p) followed by l ~ CRT(n, r).
// ---------------------------------------------------------------------------

inline std::pair<std::int64_t, std::int64_t> sample_poisson_log_bivariate(
    double r, double p, RngStream& rng) {
  if (!(r > 0.0)) throw ParameterError("poisson_log_bivariate: r must be positive");
  if (!(p > 0.0) || !(p < 1.0)) {
    throw ParameterError("poisson_log_bivariate: p must lie in (0,1)");
  }
  std::int64_t l = sample_poisson(-r * std::log1p(-p), rng);
  std::int64_t n = 0;
  for (std::int64_t t = 0; t < l; ++t) n += sample_log(p, rng);
  return {n, l};
}

inline std::int64_t sample_negative_binomial(double r, double p, RngStream& rng) {
  if (!(r > 0.0)) throw ParameterError("negative_binomial: r must be positive");
  if (!(p > 0.0) || !(p < 1.0)) {
    throw ParameterError("negative_binomial: p must lie in (0,1)");
  }
  double lambda = sample_gamma(r, p / (1.0 - p), rng);
  return sample_poisson(lambda, rng);
}

inline double log_pmf_negative_binomial(std::int64_t n, double r, double p) {
  if (n < 0) return -std::numeric_limits<double>::infinity();
  const double dn = static_cast<double>(n);
  return std::lgamma(dn + r) - std::lgamma(dn + 1.0) - std::lgamma(r) +
         dn * std::log(p) + r * std::log1p(-p);
}

}  // namespace gbn
