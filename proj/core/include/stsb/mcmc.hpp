#ifndef STSB_MCMC_HPP
#define STSB_MCMC_HPP

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "stsb/core.hpp"
#include "stsb/kernels.hpp"
#include "stsb/stickbreak.hpp"

namespace stsb {

/// Full sampler state. Allocations are stored 0-based (component k is c = k-1).
struct LatentState {
  std::vector<int> c;
  StickState sticks;  // also carries gamma, lambda (shape) and a, b
  std::vector<double> mu;
  std::vector<double> sigma2;
  double sigma2_eps = 1.0;
  std::vector<double> beta;
  double omega_lambda = 0.5;

  std::size_t truncation() const { return sticks.size(); }
  void validate(std::size_t n_obs) const;
};

struct TraceRecord {
  std::size_t iter = 0;
  std::vector<double> v;
  std::vector<Knot> knots;
  double gamma = 1.0;
  double lambda = 0.0;
  double omega_lambda = 0.5;
  double a = 1.0;
  double b = 1.0;
  std::vector<double> mu;
  std::vector<double> sigma2;
  double sigma2_eps = 1.0;
  std::vector<double> beta;
  std::size_t occupied = 0;
  double log_likelihood = 0.0;
  // Varying-atoms runs only: mean Polya-urn probability of a fresh atom.
  double urn_new_mass = std::numeric_limits<double>::quiet_NaN();
};

struct AcceptanceStats {
  std::size_t knot_accepted = 0, knot_proposed = 0;
  std::size_t gamma_accepted = 0, gamma_proposed = 0;
  std::size_t lambda_jump_accepted = 0, lambda_jump_proposed = 0;
  std::size_t lambda_walk_accepted = 0, lambda_walk_proposed = 0;
  std::size_t shape_accepted = 0, shape_proposed = 0;
  std::size_t stick_accepted = 0, stick_proposed = 0;
  std::size_t var_accepted = 0, var_proposed = 0;
};

/// Output of a chain: kept states plus everything prediction needs.
struct ChainTrace {
  KernelKind kind = KernelKind::Gneiting;
  KernelShape shape;  // bandwidths; gamma and lambda are per record
  std::size_t truncation = 0;
  std::size_t covariate_dim = 0;
  BaseMeasure base;
  double atom_var_shape = 2.0;
  double atom_var_rate = 0.1;
  std::uint64_t seed = 0;
  bool varying_atoms = false;
  std::vector<TraceRecord> records;

  // Varying-atoms runs predict at points fixed before the chain starts.
  std::vector<SpaceTimePoint> prediction_points;
  std::vector<std::vector<double>> prediction_x;
  std::vector<std::vector<double>> pred_mean;  // [record][point]
  std::vector<std::vector<double>> pred_var;
  std::vector<std::vector<double>> pred_draw;

  AcceptanceStats acceptance;
};

struct NormalParams {
  double mean = 0.0;
  double variance = 1.0;
};

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
};

/// Conjugate normal full conditional of a component mean given n residuals
/// summing to `sum`, each with variance `var`, under a Normal(mu0, tau2) prior.
NormalParams mu_full_conditional(std::size_t n, double sum, double var, double mu0, double tau2);

/// Inverse-gamma conditional of a variance given n centred squares summing
/// to `ss`, ignoring the other variance term of the sum convention. Used as
/// the proposal of an exactly corrected Metropolis-Hastings step.
GammaParams variance_proposal(double shape, double rate, std::size_t n, double ss);

/// Beta(a + sum of A over reaching points, b + sum of 1-A) for one stick.
BetaParams stick_full_conditional(double a, double b, std::size_t ones, std::size_t zeros);

/// Beta full conditional of the spike-and-slab mixing weight.
BetaParams omega_full_conditional(const HyperPriors& hyper, double lambda);

/// log pi_{c}(point) minus log(1 - remainder) summed over points; the
/// probability of the allocations under the truncated, renormalized weights.
double log_allocation_probability(const StickState& sticks, std::span<const SpaceTimePoint> points,
                                  std::span<const int> c);

/// Common machinery for the single-atom and varying-atoms samplers: weight
/// caches, allocation, stick augmentation, knot and kernel moves, and the
/// (a, b) update.
class StickSampler {
 public:
  StickSampler(const Dataset& data, const HyperPriors& hyper, const McmcConfig& config, KernelKind kind,
               KernelShape shape);
  virtual ~StickSampler() = default;

  std::size_t n() const { return y_.size(); }
  std::size_t truncation() const { return config_.truncation; }
  const LatentState& state() const { return state_; }
  const HyperPriors& hyper() const { return hyper_; }
  const McmcConfig& config() const { return config_; }
  const BaseMeasure& base() const { return base_; }
  const AcceptanceStats& acceptance() const { return acceptance_; }
  std::span<const double> responses() const { return y_; }

  /// Replaces the state and rebuilds every cache.
  void set_state(LatentState state);
  /// Replaces the responses (used for replicate simulation).
  void set_responses(std::span<const double> y);

  void update_allocations(Rng& rng);
  void update_sticks(Rng& rng);
  void update_knots(Rng& rng);
  void update_kernel_hyper(Rng& rng);
  void update_shape_hyper(Rng& rng);

  /// log P(c | sticks, knots, kernel) under renormalized truncated weights.
  double log_allocation_target() const;
  /// Kernel weight w_k at observation i from the cache.
  double weight(std::size_t i, std::size_t k) const { return w_[i * truncation() + k]; }

  std::size_t occupied_count() const;

  /// Residual y_i - x_i' beta.
  double residual(std::size_t i) const;

  virtual double log_likelihood() const = 0;
  virtual void sweep(Rng& rng) = 0;

  /// Tunes proposal scales from acceptance since the last call.
  void adapt_scales();

 protected:
  virtual void fill_log_density(std::size_t i, std::span<double> out) const = 0;

  void refresh_weights();
  void refresh_log_remainders();
  double alloc_target(std::span<const double> w, std::span<const double> v, std::vector<double>* log_rem) const;
  void compute_weight_matrix(const KernelShape& shape, std::vector<double>& out) const;

  std::vector<double> y_;
  Eigen::MatrixXd x_;
  std::vector<double> s1_, s2_, t_;
  SpaceTimeDomain domain_;
  HyperPriors hyper_;
  McmcConfig config_;
  BaseMeasure base_;
  LatentState state_;
  AcceptanceStats acceptance_;

  // w_[i*M + k] = w_k(s_i, t_i); log_rem_[i] = sum_k log(1 - w_ik V_k).
  std::vector<double> w_;
  std::vector<double> log_rem_;

  double knot_scale_, gamma_scale_, lambda_scale_, shape_scale_;
  AcceptanceStats last_adapt_;
};

/// Truncated blocked-Gibbs sampler for the single-atom mixture with Gaussian
/// components N(mu_k, sigma2_k + sigma2_eps).
class BlockedGibbsSampler : public StickSampler {
 public:
  BlockedGibbsSampler(const Dataset& data, const HyperPriors& hyper, const McmcConfig& config, KernelKind kind,
                      KernelShape shape = {});

  /// Quantile-binned allocations, V = 1/2, random knots, gamma = 1, lambda = 0.
  void initialize(Rng& rng);

  void update_atoms(Rng& rng);
  void update_noise_regression(Rng& rng);

  double log_likelihood() const override;
  void sweep(Rng& rng) override;

  /// Draws fresh responses from the model given the current state.
  std::vector<double> simulate_responses(Rng& rng) const;

  TraceRecord record(std::size_t iter) const;

 protected:
  void fill_log_density(std::size_t i, std::span<double> out) const override;
};

/// Joint draw of a full state and responses from the prior, used for
/// joint-distribution checks of the sampler.
struct PriorSimulation {
  LatentState state;
  std::vector<double> y;
};
PriorSimulation simulate_from_prior(std::span<const SpaceTimePoint> points, const HyperPriors& hyper,
                                    const McmcConfig& config, KernelKind kind, const KernelShape& shape,
                                    bool sample_shapes, bool sample_kernel, Rng& rng);

/// Fills unset base-measure, bandwidth and related defaults from the data.
BaseMeasure resolve_base(const HyperPriors& hyper, std::span<const double> y);
KernelShape default_shape(KernelKind kind, const SpaceTimeDomain& domain, KernelShape shape);

/// Runs the single-atom chain: fixed-order sweeps, adaptation during burn-in
/// only, thinned post-burn-in records. Deterministic given `rng`.
ChainTrace run_chain(const Dataset& data, const McmcConfig& config, const HyperPriors& hyper, KernelKind kind,
                     Rng& rng, KernelShape shape = {});

struct LambdaSummary {
  double pr_zero = 0.0;
  // Mean of lambda over kept iterations with lambda > 0; empty when none.
  std::optional<double> conditional_mean;
};

LambdaSummary pr_lambda_zero(const ChainTrace& trace);

/// Per observation, Polya-urn allocation probabilities for the varying-atoms
/// sampler: a fresh atom inside an occupied component, an existing atom, or a
/// fresh component.
struct UrnProbabilities {
  double new_atom_occupied = 0.0;
  std::vector<std::size_t> components;  // occupied components, 0-based
  std::vector<double> existing;         // parallel to components
  double new_component = 0.0;
};

/// Urn weights (w_ik0, w_ikj) = (alpha, 1) / (alpha + |S_k|).
std::pair<double, double> urn_weights(double alpha, std::size_t cluster_size);

/// `pi` holds the M weights at the subject's point, `others` the 0-based
/// allocations of every other subject, `component_density` g(y_i | theta_k)
/// per component and `g0` the base-measure marginal density of y_i. The
/// result is normalized.
UrnProbabilities urn_allocation_probs(std::span<const double> pi, std::span<const int> others,
                                      std::span<const double> component_density, double g0, double alpha);

}  // namespace stsb

#endif  // STSB_MCMC_HPP
