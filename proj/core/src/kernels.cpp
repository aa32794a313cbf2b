#include "stsb/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace stsb {

const char* to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::SeparableExp: return "separable";
    case KernelKind::Gneiting: return "gneiting";
    case KernelKind::Constant: return "constant";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(const std::string& name) {
  if (name == "separable" || name == "separable_exp") return KernelKind::SeparableExp;
  if (name == "gneiting") return KernelKind::Gneiting;
  if (name == "constant" || name == "dp") return KernelKind::Constant;
  throw Error(ErrorCode::BadValue, "unknown kernel '" + name + "'");
}

void check_shape(KernelKind kind, const KernelShape& shape) {
  switch (kind) {
    case KernelKind::SeparableExp:
      if (!(shape.h1 > 0.0) || !(shape.h2 > 0.0) || !(shape.ht > 0.0)) {
        throw Error(ErrorCode::MissingBandwidth, "separable kernel needs positive h1, h2, ht");
      }
      break;
    case KernelKind::Gneiting:
      if (!(shape.lambda >= 0.0 && shape.lambda <= 1.0)) throw Error(ErrorCode::InvalidLambda, "lambda must lie in [0,1]");
      if (!(shape.gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be nonnegative");
      break;
    case KernelKind::Constant:
      break;
  }
}

namespace {

double separable_raw(double s1, double s2, double t, const Knot& knot, const KernelShape& shape) {
  const double d1 = (s1 - knot.psi1) / shape.h1;
  const double d2 = (s2 - knot.psi2) / shape.h2;
  const double dt = (t - knot.zeta) / shape.ht;
  return std::max(std::exp(-d1 * d1 - d2 * d2) * std::exp(-dt * dt), kMinKernelWeight);
}

double gneiting_raw(double s1, double s2, double t, const Knot& knot, const KernelShape& shape) {
  const double psi_t = shape.gamma * std::abs(t - knot.zeta) + 1.0;
  const double d1 = s1 - knot.psi1;
  const double d2 = s2 - knot.psi2;
  const double spatial_scale = shape.lambda == 0.0 ? 1.0 : std::pow(psi_t, 0.5 * shape.lambda);
  return std::max(std::exp(-(d1 * d1 + d2 * d2) / spatial_scale) / psi_t, kMinKernelWeight);
}

}  // namespace

double eval_separable(const SpaceTimePoint& p, const Knot& knot, const KernelShape& shape) {
  check_shape(KernelKind::SeparableExp, shape);
  return separable_raw(p.s1, p.s2, p.t, knot, shape);
}

double eval_gneiting(const SpaceTimePoint& p, const Knot& knot, const KernelShape& shape) {
  check_shape(KernelKind::Gneiting, shape);
  return gneiting_raw(p.s1, p.s2, p.t, knot, shape);
}

double eval(KernelKind kind, const SpaceTimePoint& p, const Knot& knot, const KernelShape& shape) {
  switch (kind) {
    case KernelKind::SeparableExp: return eval_separable(p, knot, shape);
    case KernelKind::Gneiting: return eval_gneiting(p, knot, shape);
    case KernelKind::Constant: return 1.0;
  }
  return 1.0;
}

double eval_at(KernelKind kind, double s1, double s2, double t, const Knot& knot, const KernelShape& shape) {
  switch (kind) {
    case KernelKind::SeparableExp: return separable_raw(s1, s2, t, knot, shape);
    case KernelKind::Gneiting: return gneiting_raw(s1, s2, t, knot, shape);
    case KernelKind::Constant: return 1.0;
  }
  return 1.0;
}

}  // namespace stsb
