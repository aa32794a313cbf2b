#include "stsb/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace stsb {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::CovariateLengthMismatch: return "CovariateLengthMismatch";
    case ErrorCode::ContinuousTime: return "ContinuousTime";
    case ErrorCode::MissingBandwidth: return "MissingBandwidth";
    case ErrorCode::InvalidLambda: return "InvalidLambda";
    case ErrorCode::GOutOfRange: return "GOutOfRange";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::AllZeroWeights: return "AllZeroWeights";
    case ErrorCode::NoLambdaInTrace: return "NoLambdaInTrace";
    case ErrorCode::FactorizationFailure: return "FactorizationFailure";
    case ErrorCode::SizeGuardExceeded: return "SizeGuardExceeded";
    case ErrorCode::EmptyRealization: return "EmptyRealization";
    case ErrorCode::UnsupportedParams: return "UnsupportedParams";
    case ErrorCode::CovariateMismatch: return "CovariateMismatch";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::BadValue: return "BadValue";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string format_error(ErrorCode code, const std::string& message, std::optional<std::size_t> index) {
  std::ostringstream os;
  os << to_string(code);
  if (index) os << "(" << *index << ")";
  if (!message.empty()) os << ": " << message;
  return os.str();
}

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> index)
    : std::runtime_error(format_error(code, message, index)), code_(code), index_(index) {}

Rng make_substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state)),
                    static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state))};
  return Rng(seq);
}

std::size_t Dataset::observed_count() const {
  return static_cast<std::size_t>(
      std::count_if(observations.begin(), observations.end(), [](const Observation& o) { return !o.missing; }));
}

int parse_time_index(double t) {
  if (!std::isfinite(t) || t < 1.0 || std::floor(t) != t || t > 1e9) {
    throw Error(ErrorCode::ContinuousTime, "time index must be a positive integer");
  }
  return static_cast<int>(t);
}

std::vector<std::pair<std::size_t, std::size_t>> find_duplicate_points(const Dataset& data) {
  std::map<std::tuple<double, double, int>, std::size_t> first;
  std::vector<std::pair<std::size_t, std::size_t>> dups;
  for (std::size_t i = 0; i < data.observations.size(); ++i) {
    const auto& p = data.observations[i].point;
    auto [it, inserted] = first.emplace(std::make_tuple(p.s1, p.s2, p.t), i + 1);
    if (!inserted) dups.emplace_back(it->second, i + 1);
  }
  return dups;
}

namespace {

Interval padded(double lo, double hi) {
  if (hi > lo) return {lo, hi};
  return {lo - 0.5, hi + 0.5};
}

}  // namespace

Dataset validate_dataset(Dataset raw, ValidationReport* report) {
  if (raw.observations.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no observations");

  const std::size_t p = raw.observations.front().x.size();
  double lo1 = raw.observations.front().point.s1, hi1 = lo1;
  double lo2 = raw.observations.front().point.s2, hi2 = lo2;
  int tmax = 1;

  for (std::size_t i = 0; i < raw.observations.size(); ++i) {
    const auto& o = raw.observations[i];
    if (!std::isfinite(o.point.s1) || !std::isfinite(o.point.s2)) {
      throw Error(ErrorCode::NonFiniteValue, "non-finite location", i + 1);
    }
    if (o.point.t < 1) throw Error(ErrorCode::ContinuousTime, "time index must be >= 1", i + 1);
    if (!o.missing && !std::isfinite(o.y)) throw Error(ErrorCode::NonFiniteValue, "non-finite response", i + 1);
    if (o.x.size() != p) throw Error(ErrorCode::CovariateLengthMismatch, "covariate length differs", i + 1);
    for (double v : o.x) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite covariate", i + 1);
    }
    lo1 = std::min(lo1, o.point.s1);
    hi1 = std::max(hi1, o.point.s1);
    lo2 = std::min(lo2, o.point.s2);
    hi2 = std::max(hi2, o.point.s2);
    tmax = std::max(tmax, o.point.t);
  }
  if (raw.observed_count() == 0) throw Error(ErrorCode::EmptyDataset, "every response is missing");

  if (!raw.domain) {
    raw.domain = SpaceTimeDomain{padded(lo1, hi1), padded(lo2, hi2), tmax};
  } else {
    const auto& d = *raw.domain;
    if (!(d.s1.width() > 0.0) || !(d.s2.width() > 0.0) || d.t_max < 1) {
      throw Error(ErrorCode::InvalidArgument, "domain intervals must be nondegenerate");
    }
    for (std::size_t i = 0; i < raw.observations.size(); ++i) {
      if (!d.contains(raw.observations[i].point)) {
        throw Error(ErrorCode::InvalidArgument, "observation outside domain", i + 1);
      }
    }
  }
  if (report) report->duplicates = find_duplicate_points(raw);
  return raw;
}

void HyperPriors::validate() const {
  auto positive_interval = [](const Interval& r, const char* name) {
    if (!(r.lo >= 0.0) || !(r.hi > r.lo)) throw Error(ErrorCode::BadValue, std::string(name) + " must be a nondegenerate nonnegative interval");
  };
  positive_interval(a_range, "a_range");
  positive_interval(b_range, "b_range");
  positive_interval(gamma_range, "gamma_range");
  for (double v : {noise_shape, noise_rate, atom_var_shape, atom_var_rate, lambda_slab_a, lambda_slab_b, omega_a,
                   omega_b, bandwidth_shape, regression_prior_var}) {
    if (!(v > 0.0)) throw Error(ErrorCode::BadValue, "hyperparameters must be positive");
  }
  if (base_variance && !(*base_variance > 0.0)) throw Error(ErrorCode::BadValue, "base_variance must be positive");
  if (nu_max && !(*nu_max > 0.0)) throw Error(ErrorCode::BadValue, "nu_max must be positive");
}

void McmcConfig::validate() const {
  if (truncation < 2) throw Error(ErrorCode::BadValue, "truncation must be >= 2");
  if (!(n_iter > n_burn)) throw Error(ErrorCode::BadValue, "n_iter must exceed n_burn");
  if (thin == 0) throw Error(ErrorCode::BadValue, "thin must be >= 1");
  if (!(gp_decay > 0.0) || !(std::abs(gp_rho) < 1.0)) throw Error(ErrorCode::BadValue, "invalid GP parameters");
  if (gp_var && !(*gp_var > 0.0)) throw Error(ErrorCode::BadValue, "gp_var must be positive");
  if (!(va_subsample > 0.0 && va_subsample <= 1.0)) throw Error(ErrorCode::BadValue, "va_subsample must be in (0,1]");
  for (double s : {proposal.knot, proposal.gamma, proposal.lambda, proposal.shape}) {
    if (!(s >= 0.0)) throw Error(ErrorCode::BadValue, "proposal scales must be nonnegative");
  }
}

}  // namespace stsb
