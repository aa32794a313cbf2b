#ifndef STSB_DATAGEN_HPP
#define STSB_DATAGEN_HPP

#include <span>
#include <string>
#include <vector>

#include "stsb/core.hpp"
#include "stsb/stickbreak.hpp"

namespace stsb {

struct Window {
  Interval s1{0.0, 1.0};
  Interval s2{0.0, 1.0};

  double area() const { return s1.width() * s2.width(); }
};

struct ThomasRealization {
  std::vector<Location> parents;
  // Daughters inside the window and the index of the parent of each.
  std::vector<Location> daughters;
  std::vector<std::size_t> parent_of;
};

/// Parents at intensity omega on the window dilated by `radius`, each with
/// Poisson(delta) daughters uniform in a disk of `radius`; daughters outside
/// the window are dropped, so E[count] = omega * delta * area.
ThomasRealization thomas_realization(double omega, double delta, double radius, const Window& window, Rng& rng);

/// Daughter locations only; throws EmptyRealization when there are none.
std::vector<Location> thomas_process(double omega, double delta, double radius, const Window& window, Rng& rng);

enum class CovModel { GaussianCov, ExpNuggetTrend, Stable, ZonalAnisotropyNugget, Stein, NonSeparable };

const char* to_string(CovModel model);
CovModel parse_cov_model(const std::string& name);

/// How models without temporal dependence extend over time: one spatial
/// field shared by every t, or a fresh field per t.
enum class TimeMode { Replicate, Independent };

const char* to_string(TimeMode mode);
TimeMode parse_time_mode(const std::string& name);

struct CovModelSpec {
  CovModel tag = CovModel::GaussianCov;
  double tau2 = 1.0;
  double h = 0.4;
  double alpha = 1.9;       // Stable exponent
  double nugget = 0.0;      // added at zero lag
  double trend = 0.0;       // constant mean
  double anisotropy = 5.0;  // range factor on the second axis
  double nu = 1.5;          // Stein smoothness
  double c1 = 0.9, c2 = 0.1;
  TimeMode time_mode = TimeMode::Independent;

  bool time_dependent() const { return tag == CovModel::Stein || tag == CovModel::NonSeparable; }
  void validate() const;
};

/// Defaults for each of the six models.
CovModelSpec default_cov_spec(CovModel model);

/// Covariance between two space-time points. For models without temporal
/// dependence the time mode decides whether different times correlate.
double cov_value(const CovModelSpec& spec, const SpaceTimePoint& p, const SpaceTimePoint& q);

/// One Gaussian draw over `points` with the model's mean and covariance.
std::vector<double> simulate_field(const CovModelSpec& spec, std::span<const SpaceTimePoint> points, Rng& rng);

/// Every location at every t = 1..t_max, location-major within each t.
std::vector<SpaceTimePoint> space_time_grid(std::span<const Location> locations, int t_max);

/// Locations crossed with time, responses from simulate_field.
Dataset simulate_dataset(const CovModelSpec& spec, std::span<const Location> locations, int t_max, Rng& rng);

/// cos t + 2 sin t + t/2 - min(t, 16).
double regime_mean(double t);

struct RegimeData {
  Dataset data;
  // Mixture component (0 or 1) that generated each observation.
  std::vector<int> component;
};

/// Three-regime scenario on n_per_t fixed uniform locations in the unit
/// square: one field for t < 8, a 0.3/0.7 variance mixture for 8 <= t < 16,
/// a two-centre mixture for t >= 16. Fields have squared-exponential
/// correlation exp(-d^2 / (2 rho^2)).
RegimeData scenario_regime_labeled(std::size_t n_per_t, int t_max, double rho_lengthscale, Rng& rng);
Dataset scenario_regime(std::size_t n_per_t, int t_max, double rho_lengthscale, Rng& rng);

}  // namespace stsb

#endif  // STSB_DATAGEN_HPP
