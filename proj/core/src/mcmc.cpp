#include "stsb/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stsb/random.hpp"

namespace stsb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(1 - exp(x)) for x <= 0.
double log1m_exp(double x) {
  if (x >= 0.0) return kNegInf;
  return x > -0.693147180559945 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

double sample_mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v) {
  if (v.size() < 2) return 1.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

bool accept(Rng& rng, double log_ratio) {
  if (log_ratio >= 0.0) return true;
  if (!std::isfinite(log_ratio)) return false;
  return std::log(rnd::uniform_open(rng)) < log_ratio;
}

// Fixed step of the log-scale random walk that follows each independence
// proposal for a variance. The independence proposal ignores the other
// variance term and so almost never reaches values below it; the walk does.
constexpr double kVarianceWalkScale = 0.7;

// One random-walk Metropolis step on log(x) for a variance with an
// IG(shape, rate) prior and log-likelihood `loglik`.
template <class LogLik>
bool variance_walk(Rng& rng, double& x, double shape, double rate, LogLik&& loglik) {
  const double prop = x * std::exp(kVarianceWalkScale * rnd::normal(rng, 0.0, 1.0));
  const double log_ratio = loglik(prop) - loglik(x) + rnd::log_inverse_gamma_pdf(prop, shape, rate) -
                           rnd::log_inverse_gamma_pdf(x, shape, rate) + std::log(prop / x);
  if (!accept(rng, log_ratio)) return false;
  x = prop;
  return true;
}

}  // namespace

void LatentState::validate(std::size_t n_obs) const {
  const std::size_t m = truncation();
  if (c.size() != n_obs) throw Error(ErrorCode::InvalidArgument, "allocation vector has wrong length");
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] < 0 || static_cast<std::size_t>(c[i]) >= m) {
      throw Error(ErrorCode::InvalidArgument, "allocation out of range", i + 1);
    }
  }
  sticks.validate();
  if (mu.size() != m || sigma2.size() != m) throw Error(ErrorCode::InvalidArgument, "atom vectors have wrong length");
  for (double s : sigma2) {
    if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "component variance must be positive");
  }
  if (!(sigma2_eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "noise variance must be positive");
  if (!(omega_lambda >= 0.0 && omega_lambda <= 1.0)) throw Error(ErrorCode::InvalidArgument, "omega outside [0,1]");
}

NormalParams mu_full_conditional(std::size_t n, double sum, double var, double mu0, double tau2) {
  const double precision = static_cast<double>(n) / var + 1.0 / tau2;
  return {(sum / var + mu0 / tau2) / precision, 1.0 / precision};
}

GammaParams variance_proposal(double shape, double rate, std::size_t n, double ss) {
  return {shape + 0.5 * static_cast<double>(n), rate + 0.5 * ss};
}

BetaParams stick_full_conditional(double a, double b, std::size_t ones, std::size_t zeros) {
  return {a + static_cast<double>(ones), b + static_cast<double>(zeros)};
}

BetaParams omega_full_conditional(const HyperPriors& hyper, double lambda) {
  const bool slab = lambda > 0.0;
  return {hyper.omega_a + (slab ? 1.0 : 0.0), hyper.omega_b + (slab ? 0.0 : 1.0)};
}

double log_allocation_probability(const StickState& sticks, std::span<const SpaceTimePoint> points,
                                  std::span<const int> c) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Weights w = compute_weights(sticks, points[i]);
    total += std::log(w.pi[c[i]]) - std::log1p(-w.remainder);
  }
  return total;
}

BaseMeasure resolve_base(const HyperPriors& hyper, std::span<const double> y) {
  BaseMeasure base;
  base.mean = hyper.base_mean.value_or(y.empty() ? 0.0 : sample_mean(y));
  base.variance = hyper.base_variance.value_or(std::max(sample_var(y), 1e-6));
  return base;
}

KernelShape default_shape(KernelKind kind, const SpaceTimeDomain& domain, KernelShape shape) {
  if (kind == KernelKind::SeparableExp) {
    if (!(shape.h1 > 0.0)) shape.h1 = 0.25 * domain.s1.width();
    if (!(shape.h2 > 0.0)) shape.h2 = 0.25 * domain.s2.width();
    if (!(shape.ht > 0.0)) shape.ht = std::max(1.0, 0.25 * domain.t_max);
  }
  return shape;
}

// ---------------------------------------------------------------------------
// StickSampler

StickSampler::StickSampler(const Dataset& data, const HyperPriors& hyper, const McmcConfig& config,
                           KernelKind kind, KernelShape shape)
    : hyper_(hyper), config_(config) {
  hyper_.validate();
  config_.validate();
  const Dataset valid = validate_dataset(data);
  domain_ = *valid.domain;
  const std::size_t p = valid.covariate_dim();
  std::size_t n = valid.observed_count();
  y_.reserve(n);
  x_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::size_t row = 0;
  for (const auto& o : valid.observations) {
    if (o.missing) continue;
    y_.push_back(o.y);
    s1_.push_back(o.point.s1);
    s2_.push_back(o.point.s2);
    t_.push_back(static_cast<double>(o.point.t));
    for (std::size_t j = 0; j < p; ++j) x_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = o.x[j];
    ++row;
  }
  base_ = resolve_base(hyper_, y_);

  const std::size_t m = config_.truncation;
  state_.sticks.kind = kind;
  state_.sticks.shape = default_shape(kind, domain_, shape);
  state_.sticks.v.assign(m, 0.5);
  state_.sticks.knots.assign(m, Knot{});
  state_.sticks.a = 1.0;
  state_.sticks.b = 1.0;
  state_.c.assign(n, 0);
  state_.mu.assign(m, base_.mean);
  state_.sigma2.assign(m, base_.variance);
  state_.sigma2_eps = base_.variance;
  state_.beta.assign(p, 0.0);

  knot_scale_ = config_.proposal.knot;
  gamma_scale_ = config_.proposal.gamma;
  lambda_scale_ = config_.proposal.lambda;
  shape_scale_ = config_.proposal.shape;
  check_shape(kind, state_.sticks.shape);
}

void StickSampler::set_state(LatentState state) {
  state.validate(n());
  if (state.beta.size() != static_cast<std::size_t>(x_.cols())) {
    throw Error(ErrorCode::CovariateMismatch, "beta length differs from covariate dimension");
  }
  if (state.truncation() != config_.truncation) throw Error(ErrorCode::InvalidArgument, "truncation mismatch");
  state_ = std::move(state);
  refresh_weights();
}

void StickSampler::set_responses(std::span<const double> y) {
  if (y.size() != y_.size()) throw Error(ErrorCode::LengthMismatch, "response vector has wrong length");
  y_.assign(y.begin(), y.end());
}

double StickSampler::residual(std::size_t i) const {
  double r = y_[i];
  for (Eigen::Index j = 0; j < x_.cols(); ++j) r -= x_(static_cast<Eigen::Index>(i), j) * state_.beta[j];
  return r;
}

void StickSampler::compute_weight_matrix(const KernelShape& shape, std::vector<double>& out) const {
  const std::size_t m = truncation();
  out.resize(n() * m);
  const auto& knots = state_.sticks.knots;
  const KernelKind kind = state_.sticks.kind;
  for (std::size_t i = 0; i < n(); ++i) {
    double* row = out.data() + i * m;
    for (std::size_t k = 0; k < m; ++k) row[k] = eval_at(kind, s1_[i], s2_[i], t_[i], knots[k], shape);
  }
}

void StickSampler::refresh_weights() {
  compute_weight_matrix(state_.sticks.shape, w_);
  refresh_log_remainders();
}

void StickSampler::refresh_log_remainders() {
  const std::size_t m = truncation();
  const auto& v = state_.sticks.v;
  log_rem_.resize(n());
  for (std::size_t i = 0; i < n(); ++i) {
    const double* row = w_.data() + i * m;
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) acc += std::log1p(-row[k] * v[k]);
    log_rem_[i] = acc;
  }
}

double StickSampler::alloc_target(std::span<const double> w, std::span<const double> v,
                                  std::vector<double>* log_rem) const {
  const std::size_t m = truncation();
  if (log_rem) log_rem->resize(n());
  double total = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double* row = w.data() + i * m;
    const auto ci = static_cast<std::size_t>(state_.c[i]);
    double acc = 0.0, log_pi = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double l = std::log1p(-row[k] * v[k]);
      if (k < ci) {
        log_pi += l;
      } else if (k == ci) {
        log_pi += std::log(row[k] * v[k]);
      }
      acc += l;
    }
    if (log_rem) (*log_rem)[i] = acc;
    total += log_pi - log1m_exp(acc);
  }
  return total;
}

double StickSampler::log_allocation_target() const { return alloc_target(w_, state_.sticks.v, nullptr); }

std::size_t StickSampler::occupied_count() const {
  std::vector<char> used(truncation(), 0);
  for (int c : state_.c) used[static_cast<std::size_t>(c)] = 1;
  return static_cast<std::size_t>(std::count(used.begin(), used.end(), 1));
}

void StickSampler::update_allocations(Rng& rng) {
  const std::size_t m = truncation();
  std::vector<double> u(n());
  for (auto& x : u) x = rnd::uniform(rng);
  std::vector<double> log_w(m), dens(m);
  const auto& v = state_.sticks.v;
  for (std::size_t i = 0; i < n(); ++i) {
    fill_log_density(i, dens);
    const double* row = w_.data() + i * m;
    double log_rest = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double vk = row[k] * v[k];
      log_w[k] = (vk > 0.0 ? std::log(vk) : kNegInf) + log_rest + dens[k];
      log_rest += std::log1p(-vk);
    }
    const int k = rnd::categorical_from_logs(log_w, u[i]);
    if (k < 0) throw Error(ErrorCode::AllZeroWeights, "every allocation weight is zero", i + 1);
    state_.c[i] = k;
  }
}

void StickSampler::update_sticks(Rng& rng) {
  const std::size_t m = truncation();
  auto& v = state_.sticks.v;
  std::vector<std::size_t> ones(m, 0), zeros(m, 0);
  for (std::size_t i = 0; i < n(); ++i) {
    const double* row = w_.data() + i * m;
    const auto ci = static_cast<std::size_t>(state_.c[i]);
    for (std::size_t j = 0; j < ci; ++j) {
      // (A, B) given not both one: P(A = 1) = V (1 - w) / (1 - V w).
      const double p_a = v[j] * (1.0 - row[j]) / (1.0 - v[j] * row[j]);
      if (rnd::uniform(rng) < p_a) {
        ++ones[j];
      } else {
        ++zeros[j];
      }
    }
    ++ones[ci];
  }
  std::vector<double> proposal(m);
  for (std::size_t k = 0; k < m; ++k) {
    const BetaParams bp = stick_full_conditional(state_.sticks.a, state_.sticks.b, ones[k], zeros[k]);
    proposal[k] = rnd::beta(rng, bp.a, bp.b);
  }
  // The augmentation targets prod_i pi_{c_i}; the truncated model also
  // divides by (1 - remainder_i), corrected here by one MH step.
  std::vector<double> log_rem_new(n());
  double log_ratio = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double* row = w_.data() + i * m;
    double acc = 0.0;
    for (std::size_t k = 0; k < m; ++k) acc += std::log1p(-row[k] * proposal[k]);
    log_rem_new[i] = acc;
    log_ratio += log1m_exp(log_rem_[i]) - log1m_exp(acc);
  }
  ++acceptance_.stick_proposed;
  if (accept(rng, log_ratio)) {
    ++acceptance_.stick_accepted;
    v = std::move(proposal);
    log_rem_ = std::move(log_rem_new);
  }
}

void StickSampler::update_knots(Rng& rng) {
  if (state_.sticks.kind == KernelKind::Constant) return;
  const std::size_t m = truncation();
  const auto& v = state_.sticks.v;
  const double step1 = knot_scale_ * domain_.s1.width();
  const double step2 = knot_scale_ * domain_.s2.width();
  const double step_t = knot_scale_ * std::max(0.0, domain_.t_max - 1.0);
  std::vector<double> w_new(n()), log_rem_new(n());
  for (std::size_t k = 0; k < m; ++k) {
    Knot& cur = state_.sticks.knots[k];
    Knot prop = cur;
    prop.psi1 = rnd::reflect(cur.psi1 + step1 * rnd::normal(rng), domain_.s1.lo, domain_.s1.hi);
    prop.psi2 = rnd::reflect(cur.psi2 + step2 * rnd::normal(rng), domain_.s2.lo, domain_.s2.hi);
    if (domain_.t_max > 1) prop.zeta = rnd::reflect(cur.zeta + step_t * rnd::normal(rng), 1.0, domain_.t_max);
    double log_ratio = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      const double w_old = w_[i * m + k];
      const double w_prop = eval_at(state_.sticks.kind, s1_[i], s2_[i], t_[i], prop, state_.sticks.shape);
      w_new[i] = w_prop;
      const double l_old = std::log1p(-w_old * v[k]);
      const double l_new = std::log1p(-w_prop * v[k]);
      const int ci = state_.c[i];
      if (ci == static_cast<int>(k)) {
        log_ratio += std::log(w_prop) - std::log(w_old);
      } else if (ci > static_cast<int>(k)) {
        log_ratio += l_new - l_old;
      }
      log_rem_new[i] = log_rem_[i] - l_old + l_new;
      log_ratio += log1m_exp(log_rem_[i]) - log1m_exp(log_rem_new[i]);
    }
    ++acceptance_.knot_proposed;
    if (accept(rng, log_ratio)) {
      ++acceptance_.knot_accepted;
      cur = prop;
      for (std::size_t i = 0; i < n(); ++i) w_[i * m + k] = w_new[i];
      log_rem_.swap(log_rem_new);
    }
  }
}

void StickSampler::update_kernel_hyper(Rng& rng) {
  auto& shape = state_.sticks.shape;
  if (state_.sticks.kind != KernelKind::Gneiting) return;
  std::vector<double> w_prop, rem_prop;
  double current = log_allocation_target();

  auto try_shape = [&](const KernelShape& proposal, double log_prior_ratio) {
    compute_weight_matrix(proposal, w_prop);
    const double target = alloc_target(w_prop, state_.sticks.v, &rem_prop);
    if (accept(rng, target - current + log_prior_ratio)) {
      shape = proposal;
      w_.swap(w_prop);
      log_rem_.swap(rem_prop);
      current = target;
      return true;
    }
    return false;
  };

  // gamma: reflected random walk under its uniform prior.
  {
    const Interval& r = hyper_.gamma_range;
    KernelShape prop = shape;
    prop.gamma = rnd::reflect(shape.gamma + gamma_scale_ * r.width() * rnd::normal(rng), r.lo, r.hi);
    ++acceptance_.gamma_proposed;
    if (try_shape(prop, 0.0)) ++acceptance_.gamma_accepted;
  }

  // lambda between spike and slab; the slab draw is the proposal, so only
  // the prior odds survive in the ratio.
  const double omega = state_.omega_lambda;
  {
    KernelShape prop = shape;
    double log_prior_ratio;
    if (shape.lambda == 0.0) {
      prop.lambda = rnd::beta(rng, hyper_.lambda_slab_a, hyper_.lambda_slab_b);
      log_prior_ratio = std::log(omega) - std::log1p(-omega);
    } else {
      prop.lambda = 0.0;
      log_prior_ratio = std::log1p(-omega) - std::log(omega);
    }
    ++acceptance_.lambda_jump_proposed;
    if (try_shape(prop, log_prior_ratio)) ++acceptance_.lambda_jump_accepted;
  }

  // Within-slab random walk.
  if (shape.lambda > 0.0) {
    KernelShape prop = shape;
    prop.lambda = rnd::reflect(shape.lambda + lambda_scale_ * rnd::normal(rng), 0.0, 1.0);
    if (prop.lambda > 0.0 && prop.lambda < 1.0) {
      const double log_prior_ratio = rnd::log_beta_pdf(prop.lambda, hyper_.lambda_slab_a, hyper_.lambda_slab_b) -
                                     rnd::log_beta_pdf(shape.lambda, hyper_.lambda_slab_a, hyper_.lambda_slab_b);
      ++acceptance_.lambda_walk_proposed;
      if (try_shape(prop, log_prior_ratio)) ++acceptance_.lambda_walk_accepted;
    }
  }

  const BetaParams om = omega_full_conditional(hyper_, shape.lambda);
  state_.omega_lambda = rnd::beta(rng, om.a, om.b);
}

void StickSampler::update_shape_hyper(Rng& rng) {
  const auto& v = state_.sticks.v;
  double sum_log_v = 0.0, sum_log_1mv = 0.0;
  for (double x : v) {
    sum_log_v += std::log(x);
    sum_log_1mv += std::log1p(-x);
  }
  const double m = static_cast<double>(v.size());
  auto log_target = [&](double a, double b) {
    return m * (std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b)) + (a - 1.0) * sum_log_v +
           (b - 1.0) * sum_log_1mv;
  };
  const Interval& ra = hyper_.a_range;
  const Interval& rb = hyper_.b_range;
  double& a = state_.sticks.a;
  double& b = state_.sticks.b;
  const double a_new = rnd::reflect(a + shape_scale_ * ra.width() * rnd::normal(rng), ra.lo, ra.hi);
  const double b_new = rnd::reflect(b + shape_scale_ * rb.width() * rnd::normal(rng), rb.lo, rb.hi);
  ++acceptance_.shape_proposed;
  if (!(a_new > 0.0) || !(b_new > 0.0)) return;
  if (accept(rng, log_target(a_new, b_new) - log_target(a, b))) {
    ++acceptance_.shape_accepted;
    a = a_new;
    b = b_new;
  }
}

void StickSampler::adapt_scales() {
  // Multiplicative tuning towards moderate acceptance, burn-in only.
  auto tune = [](double& scale, std::size_t acc, std::size_t prop, double target, double cap) {
    if (prop == 0 || scale <= 0.0) return;
    const double rate = static_cast<double>(acc) / static_cast<double>(prop);
    scale *= std::exp(rate - target);
    scale = std::clamp(scale, 1e-4, cap);
  };
  const auto& a = acceptance_;
  const auto& l = last_adapt_;
  tune(knot_scale_, a.knot_accepted - l.knot_accepted, a.knot_proposed - l.knot_proposed, 0.3, 1.0);
  tune(gamma_scale_, a.gamma_accepted - l.gamma_accepted, a.gamma_proposed - l.gamma_proposed, 0.3, 1.0);
  tune(lambda_scale_, a.lambda_walk_accepted - l.lambda_walk_accepted, a.lambda_walk_proposed - l.lambda_walk_proposed,
       0.3, 1.0);
  tune(shape_scale_, a.shape_accepted - l.shape_accepted, a.shape_proposed - l.shape_proposed, 0.3, 1.0);
  last_adapt_ = acceptance_;
}

// ---------------------------------------------------------------------------
// BlockedGibbsSampler

BlockedGibbsSampler::BlockedGibbsSampler(const Dataset& data, const HyperPriors& hyper, const McmcConfig& config,
                                         KernelKind kind, KernelShape shape)
    : StickSampler(data, hyper, config, kind, shape) {}

void BlockedGibbsSampler::initialize(Rng& rng) {
  const std::size_t m = truncation();
  LatentState st = state_;
  const std::size_t groups = std::min<std::size_t>(10, m);
  std::vector<std::size_t> order(n());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return y_[i] < y_[j]; });
  for (std::size_t r = 0; r < n(); ++r) st.c[order[r]] = static_cast<int>(r * groups / n());

  st.sticks.v.assign(m, 0.5);
  for (auto& k : st.sticks.knots) k = sample_knot(domain_, rng);
  st.sticks.shape.gamma = std::clamp(1.0, hyper_.gamma_range.lo, hyper_.gamma_range.hi);
  st.sticks.shape.lambda = 0.0;
  st.sticks.a = std::clamp(1.0, std::max(hyper_.a_range.lo, 1e-3), hyper_.a_range.hi);
  st.sticks.b = std::clamp(1.0, std::max(hyper_.b_range.lo, 1e-3), hyper_.b_range.hi);
  st.omega_lambda = 0.5;
  st.beta.assign(static_cast<std::size_t>(x_.cols()), 0.0);

  const double var_y = std::max(sample_var(y_), 1e-8);
  st.sigma2_eps = 0.5 * var_y;
  std::vector<double> sum(m, 0.0), sq(m, 0.0);
  std::vector<std::size_t> cnt(m, 0);
  for (std::size_t i = 0; i < n(); ++i) {
    const auto k = static_cast<std::size_t>(st.c[i]);
    sum[k] += y_[i];
    sq[k] += y_[i] * y_[i];
    ++cnt[k];
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (cnt[k] == 0) {
      st.mu[k] = base_.mean;
      st.sigma2[k] = 0.5 * var_y;
      continue;
    }
    const double mean = sum[k] / static_cast<double>(cnt[k]);
    st.mu[k] = mean;
    st.sigma2[k] = std::max(sq[k] / static_cast<double>(cnt[k]) - mean * mean, 1e-3 * var_y);
  }
  set_state(std::move(st));
}

void BlockedGibbsSampler::fill_log_density(std::size_t i, std::span<double> out) const {
  const double r = residual(i);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = rnd::log_normal_pdf(r, state_.mu[k], state_.sigma2[k] + state_.sigma2_eps);
  }
}

double BlockedGibbsSampler::log_likelihood() const {
  double total = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const auto k = static_cast<std::size_t>(state_.c[i]);
    total += rnd::log_normal_pdf(residual(i), state_.mu[k], state_.sigma2[k] + state_.sigma2_eps);
  }
  return total;
}

void BlockedGibbsSampler::update_atoms(Rng& rng) {
  const std::size_t m = truncation();
  std::vector<std::vector<double>> members(m);
  for (std::size_t i = 0; i < n(); ++i) members[static_cast<std::size_t>(state_.c[i])].push_back(residual(i));
  const double eps = state_.sigma2_eps;

  for (std::size_t k = 0; k < m; ++k) {
    const auto& r = members[k];
    const double sum = std::accumulate(r.begin(), r.end(), 0.0);
    const NormalParams np = mu_full_conditional(r.size(), sum, state_.sigma2[k] + eps, base_.mean, base_.variance);
    state_.mu[k] = rnd::normal(rng, np.mean, std::sqrt(np.variance));

    double ss = 0.0;
    for (double x : r) ss += (x - state_.mu[k]) * (x - state_.mu[k]);
    const GammaParams gp = variance_proposal(hyper_.atom_var_shape, hyper_.atom_var_rate, r.size(), ss);
    const double prop = rnd::inverse_gamma(rng, gp.shape, gp.rate);
    if (r.empty()) {
      state_.sigma2[k] = prop;
      continue;
    }
    // Proposal ignores eps; correct for the sum-of-variances likelihood.
    const double cur = state_.sigma2[k];
    double log_ratio = 0.0;
    for (double x : r) {
      log_ratio += rnd::log_normal_pdf(x, state_.mu[k], prop + eps) - rnd::log_normal_pdf(x, state_.mu[k], prop) -
                   rnd::log_normal_pdf(x, state_.mu[k], cur + eps) + rnd::log_normal_pdf(x, state_.mu[k], cur);
    }
    ++acceptance_.var_proposed;
    if (accept(rng, log_ratio)) {
      ++acceptance_.var_accepted;
      state_.sigma2[k] = prop;
    }
    const double mu = state_.mu[k];
    variance_walk(rng, state_.sigma2[k], hyper_.atom_var_shape, hyper_.atom_var_rate, [&](double v) {
      double ll = 0.0;
      for (double x : r) ll += rnd::log_normal_pdf(x, mu, v + eps);
      return ll;
    });
  }
}

void BlockedGibbsSampler::update_noise_regression(Rng& rng) {
  std::vector<double> centred(n());
  double ss = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    centred[i] = residual(i) - state_.mu[static_cast<std::size_t>(state_.c[i])];
    ss += centred[i] * centred[i];
  }
  const GammaParams gp = variance_proposal(hyper_.noise_shape, hyper_.noise_rate, n(), ss);
  const double prop = rnd::inverse_gamma(rng, gp.shape, gp.rate);
  const double cur = state_.sigma2_eps;
  double log_ratio = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double s2 = state_.sigma2[static_cast<std::size_t>(state_.c[i])];
    const double e = centred[i];
    log_ratio += rnd::log_normal_pdf(e, 0.0, s2 + prop) - rnd::log_normal_pdf(e, 0.0, prop) -
                 rnd::log_normal_pdf(e, 0.0, s2 + cur) + rnd::log_normal_pdf(e, 0.0, cur);
  }
  ++acceptance_.var_proposed;
  if (accept(rng, log_ratio)) {
    ++acceptance_.var_accepted;
    state_.sigma2_eps = prop;
  }
  variance_walk(rng, state_.sigma2_eps, hyper_.noise_shape, hyper_.noise_rate, [&](double v) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n(); ++i) {
      ll += rnd::log_normal_pdf(centred[i], 0.0, state_.sigma2[static_cast<std::size_t>(state_.c[i])] + v);
    }
    return ll;
  });

  const Eigen::Index p = x_.cols();
  if (p == 0) return;
  Eigen::VectorXd weight(static_cast<Eigen::Index>(n()));
  Eigen::VectorXd target(static_cast<Eigen::Index>(n()));
  for (std::size_t i = 0; i < n(); ++i) {
    const auto k = static_cast<std::size_t>(state_.c[i]);
    weight[static_cast<Eigen::Index>(i)] = 1.0 / (state_.sigma2[k] + state_.sigma2_eps);
    target[static_cast<Eigen::Index>(i)] = y_[i] - state_.mu[k];
  }
  Eigen::MatrixXd precision = x_.transpose() * weight.asDiagonal() * x_;
  precision.diagonal().array() += 1.0 / hyper_.regression_prior_var;
  const Eigen::VectorXd rhs = x_.transpose() * weight.cwiseProduct(target);
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::FactorizationFailure, "regression precision");
  const Eigen::VectorXd mean = llt.solve(rhs);
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = rnd::normal(rng);
  const Eigen::VectorXd draw = mean + llt.matrixU().solve(z);
  for (Eigen::Index j = 0; j < p; ++j) state_.beta[static_cast<std::size_t>(j)] = draw[j];
}

void BlockedGibbsSampler::sweep(Rng& rng) {
  update_allocations(rng);
  update_sticks(rng);
  if (config_.update_knots) update_knots(rng);
  if (config_.update_kernel) update_kernel_hyper(rng);
  update_atoms(rng);
  update_noise_regression(rng);
  if (config_.update_shapes) update_shape_hyper(rng);
}

std::vector<double> BlockedGibbsSampler::simulate_responses(Rng& rng) const {
  std::vector<double> y(n());
  for (std::size_t i = 0; i < n(); ++i) {
    const auto k = static_cast<std::size_t>(state_.c[i]);
    double mean = state_.mu[k];
    for (Eigen::Index j = 0; j < x_.cols(); ++j) mean += x_(static_cast<Eigen::Index>(i), j) * state_.beta[j];
    y[i] = rnd::normal(rng, mean, std::sqrt(state_.sigma2[k] + state_.sigma2_eps));
  }
  return y;
}

TraceRecord BlockedGibbsSampler::record(std::size_t iter) const {
  TraceRecord r;
  r.iter = iter;
  r.v = state_.sticks.v;
  r.knots = state_.sticks.knots;
  r.gamma = state_.sticks.shape.gamma;
  r.lambda = state_.sticks.shape.lambda;
  r.omega_lambda = state_.omega_lambda;
  r.a = state_.sticks.a;
  r.b = state_.sticks.b;
  r.mu = state_.mu;
  r.sigma2 = state_.sigma2;
  r.sigma2_eps = state_.sigma2_eps;
  r.beta = state_.beta;
  r.occupied = occupied_count();
  r.log_likelihood = log_likelihood();
  return r;
}

PriorSimulation simulate_from_prior(std::span<const SpaceTimePoint> points, const HyperPriors& hyper,
                                    const McmcConfig& config, KernelKind kind, const KernelShape& shape,
                                    bool sample_shapes, bool sample_kernel, Rng& rng) {
  if (!hyper.base_mean || !hyper.base_variance) {
    throw Error(ErrorCode::InvalidArgument, "prior simulation needs an explicit base measure");
  }
  if (points.empty()) throw Error(ErrorCode::EmptyDataset, "no points to simulate at");
  const std::size_t m = config.truncation;
  SpaceTimeDomain domain;
  {
    Dataset d;
    for (const auto& p : points) d.observations.push_back({p, 0.0, {}, false});
    domain = *validate_dataset(std::move(d)).domain;
  }
  PriorSimulation sim;
  LatentState& st = sim.state;
  st.sticks.kind = kind;
  st.sticks.shape = default_shape(kind, domain, shape);
  st.sticks.a = sample_shapes ? rnd::uniform(rng, hyper.a_range.lo, hyper.a_range.hi) : 1.0;
  st.sticks.b = sample_shapes ? rnd::uniform(rng, hyper.b_range.lo, hyper.b_range.hi) : 1.0;
  st.sticks.v.resize(m);
  st.sticks.knots.resize(m);
  for (auto& v : st.sticks.v) v = rnd::beta(rng, st.sticks.a, st.sticks.b);
  for (auto& k : st.sticks.knots) k = sample_knot(domain, rng);
  st.omega_lambda = rnd::beta(rng, hyper.omega_a, hyper.omega_b);
  if (sample_kernel && kind == KernelKind::Gneiting) {
    st.sticks.shape.gamma = rnd::uniform(rng, hyper.gamma_range.lo, hyper.gamma_range.hi);
    st.sticks.shape.lambda =
        rnd::bernoulli(rng, st.omega_lambda) ? rnd::beta(rng, hyper.lambda_slab_a, hyper.lambda_slab_b) : 0.0;
  }
  st.mu.resize(m);
  st.sigma2.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    st.mu[k] = rnd::normal(rng, *hyper.base_mean, std::sqrt(*hyper.base_variance));
    st.sigma2[k] = rnd::inverse_gamma(rng, hyper.atom_var_shape, hyper.atom_var_rate);
  }
  st.sigma2_eps = rnd::inverse_gamma(rng, hyper.noise_shape, hyper.noise_rate);
  std::vector<double> pi(m);
  st.c.resize(points.size());
  sim.y.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    compute_weights_into(st.sticks, points[i].s1, points[i].s2, points[i].t, pi);
    const int k = rnd::categorical(pi, rnd::uniform(rng));
    if (k < 0) throw Error(ErrorCode::AllZeroWeights, "every allocation weight is zero", i + 1);
    st.c[i] = k;
    const auto ku = static_cast<std::size_t>(k);
    sim.y[i] = rnd::normal(rng, st.mu[ku], std::sqrt(st.sigma2[ku] + st.sigma2_eps));
  }
  return sim;
}

ChainTrace run_chain(const Dataset& data, const McmcConfig& config, const HyperPriors& hyper, KernelKind kind,
                     Rng& rng, KernelShape shape) {
  BlockedGibbsSampler sampler(data, hyper, config, kind, shape);
  sampler.initialize(rng);
  ChainTrace trace;
  trace.kind = kind;
  trace.shape = sampler.state().sticks.shape;
  trace.truncation = config.truncation;
  trace.covariate_dim = sampler.state().beta.size();
  trace.base = sampler.base();
  trace.atom_var_shape = hyper.atom_var_shape;
  trace.atom_var_rate = hyper.atom_var_rate;
  trace.seed = config.seed;
  trace.records.reserve(config.kept_count());
  for (std::size_t iter = 0; iter < config.n_iter; ++iter) {
    try {
      sampler.sweep(rng);
    } catch (const Error& e) {
      throw Error(e.code(), std::string("sweep failed: ") + e.what(), iter + 1);
    }
    if (config.adapt && iter < config.n_burn && (iter + 1) % 50 == 0) sampler.adapt_scales();
    if (iter >= config.n_burn && (iter - config.n_burn + 1) % config.thin == 0) {
      trace.records.push_back(sampler.record(iter));
    }
  }
  trace.acceptance = sampler.acceptance();
  return trace;
}

LambdaSummary pr_lambda_zero(const ChainTrace& trace) {
  if (trace.kind != KernelKind::Gneiting) throw Error(ErrorCode::NoLambdaInTrace, "trace kernel has no lambda");
  if (trace.records.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no kept records");
  std::size_t zeros = 0, slab = 0;
  double slab_sum = 0.0;
  for (const auto& r : trace.records) {
    if (r.lambda == 0.0) {
      ++zeros;
    } else {
      ++slab;
      slab_sum += r.lambda;
    }
  }
  LambdaSummary s;
  s.pr_zero = static_cast<double>(zeros) / static_cast<double>(trace.records.size());
  if (slab > 0) s.conditional_mean = slab_sum / static_cast<double>(slab);
  return s;
}

std::pair<double, double> urn_weights(double alpha, std::size_t cluster_size) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be positive");
  const double denom = alpha + static_cast<double>(cluster_size);
  return {alpha / denom, 1.0 / denom};
}

UrnProbabilities urn_allocation_probs(std::span<const double> pi, std::span<const int> others,
                                      std::span<const double> component_density, double g0, double alpha) {
  const std::size_t m = pi.size();
  if (component_density.size() != m) throw Error(ErrorCode::LengthMismatch, "density and weight lengths differ");
  std::vector<std::size_t> sizes(m, 0);
  for (int c : others) {
    if (c < 0 || static_cast<std::size_t>(c) >= m) throw Error(ErrorCode::InvalidArgument, "allocation out of range");
    ++sizes[static_cast<std::size_t>(c)];
  }
  UrnProbabilities out;
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    if (sizes[k] == 0) {
      out.new_component += pi[k] * g0;
      continue;
    }
    const auto [w0, w1] = urn_weights(alpha, sizes[k]);
    out.new_atom_occupied += pi[k] * w0 * g0;
    out.components.push_back(k);
    out.existing.push_back(pi[k] * static_cast<double>(sizes[k]) * w1 * component_density[k]);
  }
  total = out.new_atom_occupied + out.new_component;
  for (double e : out.existing) total += e;
  if (!(total > 0.0)) throw Error(ErrorCode::AllZeroWeights, "urn probabilities are all zero");
  out.new_atom_occupied /= total;
  out.new_component /= total;
  for (double& e : out.existing) e /= total;
  return out;
}

}  // namespace stsb
