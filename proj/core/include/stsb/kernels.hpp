#ifndef STSB_KERNELS_HPP
#define STSB_KERNELS_HPP

#include <string>

#include "stsb/core.hpp"

namespace stsb {

enum class KernelKind { SeparableExp, Gneiting, Constant };

const char* to_string(KernelKind kind);
KernelKind parse_kernel_kind(const std::string& name);

/// Location of a component's kernel in space and time.
struct Knot {
  double psi1 = 0.0;
  double psi2 = 0.0;
  double zeta = 1.0;

  friend bool operator==(const Knot&, const Knot&) = default;
};

/// Kernel parameters shared by every component.
struct KernelShape {
  // Separable kernel bandwidths; zero means unset.
  double h1 = 0.0;
  double h2 = 0.0;
  double ht = 0.0;
  // Gneiting kernel.
  double gamma = 1.0;
  double lambda = 0.0;

  friend bool operator==(const KernelShape&, const KernelShape&) = default;
};

struct KernelParams {
  Knot knot;
  KernelShape shape;
};

/// Smallest weight any kernel returns.
inline constexpr double kMinKernelWeight = 1e-300;

/// exp(-(s1-psi1)^2/h1^2 - (s2-psi2)^2/h2^2) * exp(-(t-zeta)^2/ht^2).
double eval_separable(const SpaceTimePoint& p, const Knot& knot, const KernelShape& shape);

/// (gamma|t-zeta|+1)^-1 * exp(-|s-psi|^2 / (gamma|t-zeta|+1)^(lambda/2)).
double eval_gneiting(const SpaceTimePoint& p, const Knot& knot, const KernelShape& shape);

double eval(KernelKind kind, const SpaceTimePoint& p, const Knot& knot, const KernelShape& shape);

/// Same as eval() with a real-valued time coordinate. No parameter checks;
/// callers validate `shape` once with check_shape().
double eval_at(KernelKind kind, double s1, double s2, double t, const Knot& knot, const KernelShape& shape);

inline double eval(KernelKind kind, const SpaceTimePoint& p, const KernelParams& kp) {
  return eval(kind, p, kp.knot, kp.shape);
}

/// Throws when `shape` is not usable with `kind`.
void check_shape(KernelKind kind, const KernelShape& shape);

}  // namespace stsb

#endif  // STSB_KERNELS_HPP
