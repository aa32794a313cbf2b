#include "stsb/stickbreak.hpp"

#include <algorithm>
#include <cmath>

#include "stsb/random.hpp"

namespace stsb {

void StickState::validate() const {
  if (v.size() != knots.size()) throw Error(ErrorCode::InvalidArgument, "sticks and knots differ in length");
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!(v[k] >= 0.0 && v[k] <= 1.0)) throw Error(ErrorCode::InvalidArgument, "stick outside [0,1]", k + 1);
  }
  check_shape(kind, shape);
}

double compute_weights_into(const StickState& state, double s1, double s2, double t, std::span<double> pi) {
  double rest = 1.0;
  for (std::size_t k = 0; k < state.v.size(); ++k) {
    const double vk = eval_at(state.kind, s1, s2, t, state.knots[k], state.shape) * state.v[k];
    pi[k] = vk * rest;
    rest *= 1.0 - vk;
  }
  return rest;
}

Weights compute_weights(const StickState& state, const SpaceTimePoint& p) {
  check_shape(state.kind, state.shape);
  Weights w;
  w.pi.resize(state.size());
  w.remainder = compute_weights_into(state, p.s1, p.s2, p.t, w.pi);
  return w;
}

Knot sample_knot(const SpaceTimeDomain& domain, Rng& rng) {
  Knot k;
  k.psi1 = rnd::uniform(rng, domain.s1.lo, domain.s1.hi);
  k.psi2 = rnd::uniform(rng, domain.s2.lo, domain.s2.hi);
  k.zeta = domain.t_max > 1 ? rnd::uniform(rng, 1.0, static_cast<double>(domain.t_max)) : 1.0;
  return k;
}

PriorDraw sample_prior(const PriorConfig& config, Rng& rng) {
  if (config.truncation < 1) throw Error(ErrorCode::InvalidArgument, "truncation must be >= 1");
  check_shape(config.kind, config.shape);
  PriorDraw draw;
  auto& st = draw.sticks;
  st.kind = config.kind;
  st.shape = config.shape;
  st.a = config.a;
  st.b = config.b;
  st.v.resize(config.truncation);
  st.knots.resize(config.truncation);
  for (auto& v : st.v) v = rnd::beta(rng, config.a, config.b);
  for (auto& k : st.knots) k = sample_knot(config.domain, rng);
  draw.atoms.resize(config.truncation);
  const double sd = std::sqrt(config.base.variance);
  for (auto& th : draw.atoms) th = rnd::normal(rng, config.base.mean, sd);
  return draw;
}

CoclusteringResult cond_coclustering(const StickState& state, const SpaceTimePoint& p, const SpaceTimePoint& q) {
  const Weights wp = compute_weights(state, p);
  const Weights wq = compute_weights(state, q);
  CoclusteringResult r;
  for (std::size_t k = 0; k < wp.pi.size(); ++k) r.probability += wp.pi[k] * wq.pi[k];
  r.tail_bound = wp.remainder * wq.remainder;
  return r;
}

McEstimate marginal_coclustering_mc(const PriorConfig& config, const SpaceTimePoint& p, const SpaceTimePoint& q,
                                    std::size_t n_mc, Rng& rng) {
  if (n_mc < 2) throw Error(ErrorCode::InvalidArgument, "n_mc must be >= 2");
  check_shape(config.kind, config.shape);
  StickState st;
  st.kind = config.kind;
  st.shape = config.shape;
  st.a = config.a;
  st.b = config.b;
  st.v.resize(config.truncation);
  st.knots.resize(config.truncation);
  std::vector<double> pp(config.truncation), pq(config.truncation);

  double mean = 0.0, m2 = 0.0;
  for (std::size_t n = 1; n <= n_mc; ++n) {
    for (auto& v : st.v) v = rnd::beta(rng, config.a, config.b);
    if (config.kind != KernelKind::Constant) {
      for (auto& k : st.knots) k = sample_knot(config.domain, rng);
    }
    compute_weights_into(st, p.s1, p.s2, p.t, pp);
    compute_weights_into(st, q.s1, q.s2, q.t, pq);
    double c = 0.0;
    for (std::size_t k = 0; k < pp.size(); ++k) c += pp[k] * pq[k];
    const double delta = c - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (c - mean);
  }
  const double var = m2 / static_cast<double>(n_mc - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_mc))};
}

double coclustering_closed_form(double a, double b, double g_value) {
  if (!(g_value >= 0.0 && g_value <= 1.0)) throw Error(ErrorCode::GOutOfRange, "g must lie in [0,1]");
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::InvalidArgument, "a and b must be positive");
  return g_value / (2.0 * (1.0 + b / (a + 1.0)) - g_value);
}

double expected_cluster_count(const PriorConfig& config, std::size_t n_points, std::size_t n_reps, Rng& rng) {
  const std::size_t ns[] = {n_points};
  return cluster_count_curve(config, ns, n_reps, rng).front();
}

std::vector<double> cluster_count_curve(const PriorConfig& config, std::span<const std::size_t> ns,
                                        std::size_t n_reps, Rng& rng) {
  if (ns.empty() || n_reps == 0) throw Error(ErrorCode::InvalidArgument, "need at least one n and one replicate");
  for (std::size_t n : ns) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "n_points must be >= 1");
  }
  const std::size_t n_max = *std::max_element(ns.begin(), ns.end());
  const auto& dom = config.domain;
  std::vector<double> totals(ns.size(), 0.0);
  std::vector<double> pi(config.truncation);
  std::vector<char> used(config.truncation);
  std::vector<std::size_t> occupied_after(n_max);

  for (std::size_t rep = 0; rep < n_reps; ++rep) {
    const PriorDraw draw = sample_prior(config, rng);
    std::fill(used.begin(), used.end(), 0);
    std::size_t occupied = 0;
    for (std::size_t i = 0; i < n_max; ++i) {
      const double s1 = rnd::uniform(rng, dom.s1.lo, dom.s1.hi);
      const double s2 = rnd::uniform(rng, dom.s2.lo, dom.s2.hi);
      const int t = std::uniform_int_distribution<int>(1, dom.t_max)(rng);
      compute_weights_into(draw.sticks, s1, s2, t, pi);
      const int k = rnd::categorical(pi, rnd::uniform(rng));
      if (k >= 0 && !used[k]) {
        used[k] = 1;
        ++occupied;
      }
      occupied_after[i] = occupied;
    }
    for (std::size_t j = 0; j < ns.size(); ++j) totals[j] += static_cast<double>(occupied_after[ns[j] - 1]);
  }
  for (auto& t : totals) t /= static_cast<double>(n_reps);
  return totals;
}

WeightMap weight_map(const StickState& state, std::span<const SpaceTimePoint> grid,
                     std::span<const std::size_t> components) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "weight map grid is empty");
  for (std::size_t k : components) {
    if (k >= state.size()) throw Error(ErrorCode::InvalidArgument, "component index out of range", k + 1);
  }
  check_shape(state.kind, state.shape);
  WeightMap map;
  map.points.assign(grid.begin(), grid.end());
  map.components.assign(components.begin(), components.end());
  map.values.reserve(grid.size() * components.size());
  std::vector<double> pi(state.size());
  for (const auto& p : grid) {
    const double rest = compute_weights_into(state, p.s1, p.s2, p.t, pi);
    for (std::size_t k : components) map.values.push_back(pi[k]);
    double sum = 0.0;
    for (double v : pi) sum += v;
    map.row_sums.push_back(sum);
    map.remainders.push_back(rest);
  }
  return map;
}

std::vector<SpaceTimePoint> spatial_grid(const SpaceTimeDomain& domain, std::size_t n1, std::size_t n2, int t) {
  if (n1 == 0 || n2 == 0) throw Error(ErrorCode::InvalidArgument, "grid dimensions must be positive");
  std::vector<SpaceTimePoint> grid;
  grid.reserve(n1 * n2);
  auto coord = [](const Interval& r, std::size_t i, std::size_t n) {
    return n == 1 ? 0.5 * (r.lo + r.hi) : r.lo + r.width() * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) grid.push_back({coord(domain.s1, i, n1), coord(domain.s2, j, n2), t});
  }
  return grid;
}

}  // namespace stsb
