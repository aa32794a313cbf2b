#ifndef STSB_STICKBREAK_HPP
#define STSB_STICKBREAK_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "stsb/core.hpp"
#include "stsb/kernels.hpp"

namespace stsb {

/// Truncated set of beta sticks with their kernel knots.
struct StickState {
  std::vector<double> v;
  std::vector<Knot> knots;
  KernelKind kind = KernelKind::Constant;
  KernelShape shape;
  double a = 1.0;
  double b = 1.0;

  std::size_t size() const { return v.size(); }
  void validate() const;
};

struct Weights {
  std::vector<double> pi;
  double remainder = 1.0;
};

/// pi_k(s,t) = V_k(s,t) prod_{j<k} (1 - V_j(s,t)) with V_k(s,t) = w_k(s,t) V_k.
Weights compute_weights(const StickState& state, const SpaceTimePoint& p);

/// Allocation-free variant: writes M weights into `pi` and returns the remainder.
double compute_weights_into(const StickState& state, double s1, double s2, double t, std::span<double> pi);

struct BaseMeasure {
  double mean = 0.0;
  double variance = 1.0;
};

struct PriorConfig {
  SpaceTimeDomain domain;
  std::size_t truncation = 100;
  double a = 1.0;
  double b = 1.0;
  KernelKind kind = KernelKind::Gneiting;
  KernelShape shape;
  BaseMeasure base;
};

struct PriorDraw {
  StickState sticks;
  std::vector<double> atoms;
};

/// Knots are uniform over the spatial box and over [1, T].
Knot sample_knot(const SpaceTimeDomain& domain, Rng& rng);

PriorDraw sample_prior(const PriorConfig& config, Rng& rng);

struct CoclusteringResult {
  double probability = 0.0;
  // Upper bound on the co-clustering mass beyond the truncation.
  double tail_bound = 0.0;
};

/// Sum over k <= M of pi_k(p) pi_k(q).
CoclusteringResult cond_coclustering(const StickState& state, const SpaceTimePoint& p, const SpaceTimePoint& q);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Prior average of cond_coclustering over (V, psi, zeta).
McEstimate marginal_coclustering_mc(const PriorConfig& config, const SpaceTimePoint& p, const SpaceTimePoint& q,
                                    std::size_t n_mc, Rng& rng);

/// g / (2 (1 + b/(a+1)) - g); equals (a+1)/(a+2b+1) at g = 1.
double coclustering_closed_form(double a, double b, double g_value);

struct Location {
  double s1 = 0.0;
  double s2 = 0.0;
};

/// Closed form of the g ratio for the Gneiting kernel. The time
/// arguments enter as absolute values; the domain does not.
double g_gneiting(Location s, Location s_prime, double t, double t_prime, double gamma, double lambda);

/// E[w(s,t) w(s',t')] / E[w(s,t)] over uniform (psi, zeta), by Monte Carlo.
McEstimate g_mc(KernelKind kind, const KernelShape& shape, const SpaceTimeDomain& domain, Location s,
                Location s_prime, double t, double t_prime, std::size_t n_mc, Rng& rng);

/// The same ratio by deterministic integration: the spatial integrals in
/// closed form (error functions) and the temporal integral by adaptive
/// Gauss-Kronrod quadrature.
double g_quadrature(KernelKind kind, const KernelShape& shape, const SpaceTimeDomain& domain, Location s,
                    Location s_prime, double t, double t_prime);

/// Mean number of occupied components when `n_points` uniform space-time
/// points are allocated under one prior draw, averaged over `n_reps` draws.
double expected_cluster_count(const PriorConfig& config, std::size_t n_points, std::size_t n_reps, Rng& rng);

/// Nested version: each replicate allocates max(ns) points once and counts
/// occupied components among the first n, so the curve is nondecreasing in n
/// within every replicate.
std::vector<double> cluster_count_curve(const PriorConfig& config, std::span<const std::size_t> ns,
                                        std::size_t n_reps, Rng& rng);

struct WeightMap {
  std::vector<SpaceTimePoint> points;
  std::vector<std::size_t> components;  // 0-based
  // values[i * components.size() + j] = pi_{components[j]}(points[i])
  std::vector<double> values;
  // Full row sums over all M components, and the remainder, per point.
  std::vector<double> row_sums;
  std::vector<double> remainders;

  double at(std::size_t point, std::size_t j) const { return values[point * components.size() + j]; }
};

WeightMap weight_map(const StickState& state, std::span<const SpaceTimePoint> grid,
                     std::span<const std::size_t> components);

/// Regular grid over the spatial box at a single time.
std::vector<SpaceTimePoint> spatial_grid(const SpaceTimeDomain& domain, std::size_t n1, std::size_t n2, int t);

}  // namespace stsb

#endif  // STSB_STICKBREAK_HPP
