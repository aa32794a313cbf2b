#ifndef STSB_PREDICT_EVAL_HPP
#define STSB_PREDICT_EVAL_HPP

#include <span>
#include <vector>

#include "stsb/core.hpp"
#include "stsb/mcmc.hpp"

namespace stsb {

struct PredictionResult {
  std::vector<SpaceTimePoint> points;
  std::vector<double> mean;
  std::vector<double> sd;
  // Empty unless quantiles were requested.
  std::vector<double> q05, q50, q95;
};

/// Posterior predictive at new points. Each kept record contributes its
/// truncated mixture plus the remainder mass on a fresh base-measure
/// component. `covariates` must be given iff the fit used covariates.
PredictionResult posterior_predictive(const ChainTrace& trace, std::span<const SpaceTimePoint> points,
                                      std::span<const std::vector<double>> covariates, Rng& rng,
                                      bool quantiles = true);

struct Espe {
  double sum = 0.0;
  double mean = 0.0;
};

Espe espe(std::span<const double> predicted, std::span<const double> truth);
Espe espe(const PredictionResult& pred, std::span<const double> truth);

struct ResidualRow {
  double s1 = 0.0, s2 = 0.0;
  int t_first = 1, t_last = 1;
  std::size_t count = 0;
  double mean_sq_residual = 0.0;
};

/// Squared residuals averaged per location over consecutive time windows of
/// `window` steps (window 1 gives one row per point).
std::vector<ResidualRow> residual_map(std::span<const double> predicted, std::span<const double> truth,
                                      std::span<const SpaceTimePoint> points, int window = 1);

/// Posterior-mean mixture density on `y_grid` at one point.
std::vector<double> predictive_density(const ChainTrace& trace, const SpaceTimePoint& point,
                                       std::span<const double> y_grid, Rng& rng,
                                       std::span<const double> covariates = {});

}  // namespace stsb

#endif  // STSB_PREDICT_EVAL_HPP
