#ifndef STSB_GP_ATOMS_HPP
#define STSB_GP_ATOMS_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stsb/core.hpp"
#include "stsb/mcmc.hpp"

namespace stsb {

/// Gaussian-process atom paths. values(k, j) is theta_k at points[j].
struct AtomField {
  std::vector<SpaceTimePoint> points;
  Eigen::MatrixXd values;
  double decay = 0.3;
  double rho = 0.5;
  double gp_var = 1.0;
  double base_mean = 0.0;

  void validate() const;
};

/// gp_var * exp(-|s - s'| / decay) * rho^|t - t'|.
double product_covariance(const SpaceTimePoint& p, const SpaceTimePoint& q, double decay, double rho, double gp_var);

Eigen::MatrixXd product_covariance_matrix(std::span<const SpaceTimePoint> points, double decay, double rho,
                                          double gp_var);

/// M independent GP paths over `points` with constant mean `base_mean`.
AtomField sample_atom_field(std::span<const SpaceTimePoint> points, std::size_t m, double decay, double rho,
                            double gp_var, double base_mean, Rng& rng);

/// Posterior moments of one path given noisy residuals at a subset of its
/// points: theta | r_I ~ N(mean, cov) with r_I = theta_I + N(0, noise_var I).
struct AtomPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};
AtomPosterior atom_posterior_moments(const Eigen::MatrixXd& prior_cov, double prior_mean,
                                     std::span<const std::size_t> observed, std::span<const double> residuals,
                                     double noise_var);

/// Redraws every path from its full conditional given allocations. `alloc`
/// maps each of the first alloc.size() field points to its component (0-based);
/// remaining points are unobserved. `prior_lower` is the factor of the prior
/// covariance over field.points.
void update_atom_field(AtomField& field, const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& prior_lower,
                       std::span<const int> alloc, std::span<const double> residuals, double noise_var, Rng& rng);

/// Marginal density of y under a Normal(mean, gp_var) atom and Normal noise,
/// by 200-node Gauss-Hermite quadrature.
double base_marginal_density(double y, double mean, double gp_var, double noise_var);

/// Varying-atoms sampler: the stick machinery of StickSampler with
/// theta_k(s, t) paths in place of scalar atoms.
class VaryingAtomsSampler : public StickSampler {
 public:
  VaryingAtomsSampler(const Dataset& data, const HyperPriors& hyper, const McmcConfig& config, KernelKind kind,
                      KernelShape shape, std::vector<SpaceTimePoint> prediction_points = {});

  void initialize(Rng& rng);
  void update_field(Rng& rng);
  void update_noise_regression(Rng& rng);

  double log_likelihood() const override;
  void sweep(Rng& rng) override;

  const AtomField& field() const { return field_; }
  double gp_var() const { return field_.gp_var; }

  /// Mean over observations of the urn probability of a fresh atom.
  double urn_new_mass() const;

  TraceRecord record(std::size_t iter) const;

  /// Predictive mean, variance and one replicate draw at each prediction point.
  void predict(Rng& rng, std::span<const std::vector<double>> x, std::vector<double>& mean, std::vector<double>& var,
               std::vector<double>& draw) const;

 protected:
  void fill_log_density(std::size_t i, std::span<double> out) const override;

 private:
  std::size_t n_pred_ = 0;
  AtomField field_;
  Eigen::MatrixXd prior_cov_;
  Eigen::MatrixXd prior_lower_;
};

/// Varying-atoms chain. Optionally subsamples the observations, then predicts
/// at `prediction_points` alongside the fit.
ChainTrace run_chain_va(const Dataset& data, const McmcConfig& config, const HyperPriors& hyper, KernelKind kind,
                        Rng& rng, KernelShape shape = {}, std::span<const SpaceTimePoint> prediction_points = {},
                        std::span<const std::vector<double>> prediction_x = {});

}  // namespace stsb

#endif  // STSB_GP_ATOMS_HPP
