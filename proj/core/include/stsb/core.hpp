#ifndef STSB_CORE_HPP
#define STSB_CORE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stsb {

enum class ErrorCode {
  EmptyDataset,
  NonFiniteValue,
  CovariateLengthMismatch,
  ContinuousTime,
  MissingBandwidth,
  InvalidLambda,
  GOutOfRange,
  DegenerateDenominator,
  AllZeroWeights,
  NoLambdaInTrace,
  FactorizationFailure,
  SizeGuardExceeded,
  EmptyRealization,
  UnsupportedParams,
  CovariateMismatch,
  EmptyTrace,
  LengthMismatch,
  ParseError,
  MissingColumn,
  UnknownKey,
  BadValue,
  InvalidArgument,
  IoError,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. `index` carries the 1-based observation, line or
/// iteration number when the failure is tied to one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::optional<std::size_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

/// All stochastic operations take one of these explicitly.
using Rng = std::mt19937_64;

/// Derives an independent, reproducible generator for sub-task `stream`.
Rng make_substream(std::uint64_t seed, std::uint64_t stream);

struct SpaceTimePoint {
  double s1 = 0.0;
  double s2 = 0.0;
  int t = 1;

  friend bool operator==(const SpaceTimePoint&, const SpaceTimePoint&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct SpaceTimeDomain {
  Interval s1{0.0, 1.0};
  Interval s2{0.0, 1.0};
  int t_max = 1;

  bool contains(const SpaceTimePoint& p) const {
    return s1.contains(p.s1) && s2.contains(p.s2) && p.t >= 1 && p.t <= t_max;
  }
  double area() const { return s1.width() * s2.width(); }
  friend bool operator==(const SpaceTimeDomain&, const SpaceTimeDomain&) = default;
};

struct Observation {
  SpaceTimePoint point;
  double y = 0.0;
  std::vector<double> x;
  // Missing responses are kept as prediction targets and never enter a likelihood.
  bool missing = false;

  friend bool operator==(const Observation& a, const Observation& b) {
    if (a.point != b.point || a.missing != b.missing || a.x != b.x) return false;
    return a.missing || a.y == b.y;
  }
};

struct Dataset {
  std::vector<Observation> observations;
  std::optional<SpaceTimeDomain> domain;

  std::size_t size() const { return observations.size(); }
  std::size_t covariate_dim() const { return observations.empty() ? 0 : observations.front().x.size(); }
  std::size_t observed_count() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ValidationReport {
  // Pairs of 1-based indices sharing the same (s, t).
  std::vector<std::pair<std::size_t, std::size_t>> duplicates;
};

/// Rejects empty or non-finite data and covariate length mismatches, and
/// fills in the bounding-box domain when none is given. Duplicate points are
/// reported, not rejected.
Dataset validate_dataset(Dataset raw, ValidationReport* report = nullptr);

std::vector<std::pair<std::size_t, std::size_t>> find_duplicate_points(const Dataset& data);

/// Parses a time value that must be a positive integer; anything else is
/// rejected with ContinuousTime.
int parse_time_index(double t);

struct HyperPriors {
  Interval a_range{0.0, 10.0};
  Interval b_range{0.0, 10.0};
  // Normal base distribution for component means. Unset values are filled
  // from the data (mean and variance of y) when a chain starts.
  std::optional<double> base_mean;
  std::optional<double> base_variance;
  double noise_shape = 0.01;
  double noise_rate = 0.01;
  double atom_var_shape = 2.0;
  double atom_var_rate = 0.1;
  Interval gamma_range{0.0, 10.0};
  double lambda_slab_a = 1.0;
  double lambda_slab_b = 1.0;
  double omega_a = 1.0;
  double omega_b = 1.0;
  // Separable-kernel bandwidths: h ~ IG(bandwidth_shape, nu^2 / 2), nu ~ U(0, nu_max).
  double bandwidth_shape = 1.5;
  std::optional<double> nu_max;
  double regression_prior_var = 1e6;

  void validate() const;
};

struct ProposalScales {
  // Fractions of the respective prior range.
  double knot = 0.1;
  double gamma = 0.1;
  double lambda = 0.1;
  double shape = 0.1;
};

struct McmcConfig {
  std::size_t truncation = 100;
  std::size_t n_iter = 20000;
  std::size_t n_burn = 10000;
  std::size_t thin = 1;
  std::uint64_t seed = 1;
  ProposalScales proposal;
  bool adapt = true;
  bool varying_atoms = false;
  bool update_shapes = true;
  bool update_knots = true;
  bool update_kernel = true;
  // Varying-atoms Gaussian-process settings.
  double gp_decay = 0.3;
  double gp_rho = 0.5;
  std::optional<double> gp_var;
  std::size_t va_size_guard = 5000;
  double va_subsample = 1.0;

  std::size_t kept_count() const { return (n_iter - n_burn) / thin; }
  void validate() const;
};

}  // namespace stsb

#endif  // STSB_CORE_HPP
