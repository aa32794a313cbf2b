#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "stsb/random.hpp"
#include "stsb/stickbreak.hpp"

namespace stsb {

double g_gneiting(Location s, Location s_prime, double t, double t_prime, double gamma, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidLambda, "lambda must lie in [0,1]");
  if (!(gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be nonnegative");
  const double dt = gamma * std::abs(t) + 1.0;
  const double dtp = gamma * std::abs(t_prime) + 1.0;
  const double scale_t = std::pow(dt, 0.5 * lambda);
  const double scale_tp = std::pow(dtp, 0.5 * lambda);
  const double d1 = s.s1 - s_prime.s1;
  const double d2 = s.s2 - s_prime.s2;
  return std::sqrt(scale_tp) / dtp * std::exp(-(d1 * d1 + d2 * d2) / (scale_t + scale_tp));
}

McEstimate g_mc(KernelKind kind, const KernelShape& shape, const SpaceTimeDomain& domain, Location s,
                Location s_prime, double t, double t_prime, std::size_t n_mc, Rng& rng) {
  if (n_mc < 2) throw Error(ErrorCode::InvalidArgument, "n_mc must be >= 2");
  check_shape(kind, shape);
  // Streaming moments of A = w w' and B = w.
  double ma = 0.0, mb = 0.0, caa = 0.0, cbb = 0.0, cab = 0.0;
  for (std::size_t n = 1; n <= n_mc; ++n) {
    const Knot knot = sample_knot(domain, rng);
    const double w = eval_at(kind, s.s1, s.s2, t, knot, shape);
    const double wp = eval_at(kind, s_prime.s1, s_prime.s2, t_prime, knot, shape);
    const double a = w * wp;
    const double da = a - ma, db = w - mb;
    const double inv = 1.0 / static_cast<double>(n);
    ma += da * inv;
    mb += db * inv;
    caa += da * (a - ma);
    cbb += db * (w - mb);
    cab += da * (w - mb);
  }
  if (mb < 1e-12) throw Error(ErrorCode::DegenerateDenominator, "E[w] estimate below 1e-12");
  const double nn = static_cast<double>(n_mc);
  const double ratio = ma / mb;
  const double var_a = caa / (nn - 1.0), var_b = cbb / (nn - 1.0), cov_ab = cab / (nn - 1.0);
  const double var_ratio = (var_a - 2.0 * ratio * cov_ab + ratio * ratio * var_b) / (mb * mb * nn);
  return {ratio, std::sqrt(std::max(var_ratio, 0.0))};
}

namespace {

// erf(b) - erf(a) without cancellation in the tails.
double erf_diff(double a, double b) {
  if (a > 0.0 && b > 0.0) return std::erfc(a) - std::erfc(b);
  if (a < 0.0 && b < 0.0) return std::erfc(-b) - std::erfc(-a);
  return std::erf(b) - std::erf(a);
}

// Mean over u ~ U(lo, hi) of exp(-(x-u)^2/A).
double axis_single(double x, double var_a, double lo, double hi) {
  const double r = std::sqrt(var_a);
  return 0.5 * std::sqrt(std::numbers::pi) * r * erf_diff((lo - x) / r, (hi - x) / r) / (hi - lo);
}

// Mean over u ~ U(lo, hi) of exp(-(x-u)^2/A - (y-u)^2/B).
double axis_pair(double x, double y, double var_a, double var_b, double lo, double hi) {
  const double c = 1.0 / var_a + 1.0 / var_b;
  const double m = (x / var_a + y / var_b) / c;
  const double k = (x - y) * (x - y) / (var_a + var_b);
  const double rc = std::sqrt(c);
  return std::exp(-k) * 0.5 * std::sqrt(std::numbers::pi) / rc * erf_diff(rc * (lo - m), rc * (hi - m)) / (hi - lo);
}

double integrate_time(const std::function<double(double)>& f, double lo, double hi, double t, double t_prime) {
  if (!(hi > lo)) return f(lo);
  std::vector<double> cuts{lo, hi};
  for (double c : {t, t_prime}) {
    if (c > lo && c < hi) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 15, 1e-13);
  }
  return total / (hi - lo);
}

}  // namespace

double g_quadrature(KernelKind kind, const KernelShape& shape, const SpaceTimeDomain& domain, Location s,
                    Location s_prime, double t, double t_prime) {
  check_shape(kind, shape);
  const double z_lo = 1.0, z_hi = static_cast<double>(domain.t_max);
  const Interval& r1 = domain.s1;
  const Interval& r2 = domain.s2;

  switch (kind) {
    case KernelKind::Constant:
      return 1.0;
    case KernelKind::SeparableExp: {
      const double a1 = shape.h1 * shape.h1, a2 = shape.h2 * shape.h2, at = shape.ht * shape.ht;
      const double num_s = axis_pair(s.s1, s_prime.s1, a1, a1, r1.lo, r1.hi) *
                           axis_pair(s.s2, s_prime.s2, a2, a2, r2.lo, r2.hi);
      const double den_s = axis_single(s.s1, a1, r1.lo, r1.hi) * axis_single(s.s2, a2, r2.lo, r2.hi);
      double num_t, den_t;
      if (z_hi > z_lo) {
        num_t = axis_pair(t, t_prime, at, at, z_lo, z_hi);
        den_t = axis_single(t, at, z_lo, z_hi);
      } else {
        num_t = std::exp(-((t - z_lo) * (t - z_lo) + (t_prime - z_lo) * (t_prime - z_lo)) / at);
        den_t = std::exp(-(t - z_lo) * (t - z_lo) / at);
      }
      if (den_s * den_t < 1e-300) throw Error(ErrorCode::DegenerateDenominator, "E[w] underflows");
      return (num_s / den_s) * (num_t / den_t);
    }
    case KernelKind::Gneiting: {
      auto scale = [&](double tt, double zeta) { return shape.gamma * std::abs(tt - zeta) + 1.0; };
      auto numerator = [&](double zeta) {
        const double dt = scale(t, zeta), dtp = scale(t_prime, zeta);
        const double vt = shape.lambda == 0.0 ? 1.0 : std::pow(dt, 0.5 * shape.lambda);
        const double vtp = shape.lambda == 0.0 ? 1.0 : std::pow(dtp, 0.5 * shape.lambda);
        return axis_pair(s.s1, s_prime.s1, vt, vtp, r1.lo, r1.hi) * axis_pair(s.s2, s_prime.s2, vt, vtp, r2.lo, r2.hi) /
               (dt * dtp);
      };
      auto denominator = [&](double zeta) {
        const double dt = scale(t, zeta);
        const double vt = shape.lambda == 0.0 ? 1.0 : std::pow(dt, 0.5 * shape.lambda);
        return axis_single(s.s1, vt, r1.lo, r1.hi) * axis_single(s.s2, vt, r2.lo, r2.hi) / dt;
      };
      const double num = integrate_time(numerator, z_lo, z_hi, t, t_prime);
      const double den = integrate_time(denominator, z_lo, z_hi, t, t);
      if (den < 1e-300) throw Error(ErrorCode::DegenerateDenominator, "E[w] underflows");
      return num / den;
    }
  }
  return 1.0;
}

}  // namespace stsb
