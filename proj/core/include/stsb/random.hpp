#ifndef STSB_RANDOM_HPP
#define STSB_RANDOM_HPP

#include <cmath>
#include <limits>
#include <random>
#include <span>

#include "stsb/core.hpp"

namespace stsb::rnd {

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Strictly inside (0, 1), safe for logs.
inline double uniform_open(Rng& rng) {
  double u;
  do {
    u = std::generate_canonical<double, 53>(rng);
  } while (u <= 0.0);
  return u;
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

inline double gamma(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double inverse_gamma(Rng& rng, double shape, double rate) {
  return 1.0 / gamma(rng, shape, rate);
}

// Kept strictly inside (0,1) so log(V) and log(1-V) stay finite.
inline double beta(Rng& rng, double a, double b) {
  constexpr double eps = 1e-300;
  const double x = gamma(rng, a, 1.0);
  const double y = gamma(rng, b, 1.0);
  double v = (x + y > 0.0) ? x / (x + y) : (a >= b ? 1.0 : 0.0);
  if (v <= 0.0) v = eps;
  if (v >= 1.0) v = std::nextafter(1.0, 0.0);
  return v;
}

inline bool bernoulli(Rng& rng, double p) { return uniform(rng) < p; }

inline long poisson(Rng& rng, double mean) { return std::poisson_distribution<long>(mean)(rng); }

/// Index drawn with probability proportional to exp(log_w[k]); `u` in [0,1)
/// supplies the randomness so callers can pre-draw it. Returns -1 when every
/// weight is -inf.
inline int categorical_from_logs(std::span<const double> log_w, double u) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_w) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return -1;
  double total = 0.0;
  for (double v : log_w) total += std::exp(v - mx);
  double target = u * total;
  double acc = 0.0;
  int last = -1;
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    if (!std::isfinite(log_w[k])) continue;
    acc += std::exp(log_w[k] - mx);
    last = static_cast<int>(k);
    if (target < acc) return last;
  }
  return last;
}

inline int categorical(std::span<const double> w, double u) {
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) return -1;
  double target = u * total, acc = 0.0;
  int last = -1;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] <= 0.0) continue;
    acc += w[k];
    last = static_cast<int>(k);
    if (target < acc) return last;
  }
  return last;
}

// Log densities.
inline double log_normal_pdf(double x, double mean, double var) {
  constexpr double log_2pi = 1.8378770664093454836;
  const double d = x - mean;
  return -0.5 * (log_2pi + std::log(var) + d * d / var);
}

inline double log_inverse_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

inline double log_beta_pdf(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

/// Reflects `x` into [lo, hi] (repeatedly, for large steps).
inline double reflect(double x, double lo, double hi) {
  const double w = hi - lo;
  if (!(w > 0.0)) return lo;
  double y = std::fmod(x - lo, 2.0 * w);
  if (y < 0.0) y += 2.0 * w;
  return y <= w ? lo + y : hi - (y - w);
}

}  // namespace stsb::rnd

#endif  // STSB_RANDOM_HPP
