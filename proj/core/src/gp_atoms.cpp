#include "stsb/gp_atoms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "stsb/linalg.hpp"
#include "stsb/random.hpp"

namespace stsb {

void AtomField::validate() const {
  if (!(decay > 0.0)) throw Error(ErrorCode::InvalidArgument, "decay must be positive");
  if (!(std::abs(rho) < 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (-1, 1)");
  if (!(gp_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "gp_var must be positive");
}

double product_covariance(const SpaceTimePoint& p, const SpaceTimePoint& q, double decay, double rho, double gp_var) {
  const double d = std::hypot(p.s1 - q.s1, p.s2 - q.s2);
  const int lag = std::abs(p.t - q.t);
  const double temporal = lag == 0 ? 1.0 : std::pow(rho, lag);
  return gp_var * std::exp(-d / decay) * temporal;
}

Eigen::MatrixXd product_covariance_matrix(std::span<const SpaceTimePoint> points, double decay, double rho,
                                          double gp_var) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = gp_var;
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = k(j, i) = product_covariance(points[i], points[j], decay, rho, gp_var);
    }
  }
  return k;
}

AtomField sample_atom_field(std::span<const SpaceTimePoint> points, std::size_t m, double decay, double rho,
                            double gp_var, double base_mean, Rng& rng) {
  AtomField field;
  field.decay = decay;
  field.rho = rho;
  field.gp_var = gp_var;
  field.base_mean = base_mean;
  field.validate();
  field.points.assign(points.begin(), points.end());
  const Eigen::MatrixXd lower =
      cholesky_with_jitter(product_covariance_matrix(points, decay, rho, gp_var), 1e-8 * gp_var);
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(n, base_mean);
  field.values.resize(static_cast<Eigen::Index>(m), n);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(m); ++k) field.values.row(k) = draw_mvn(mean, lower, rng);
  return field;
}

AtomPosterior atom_posterior_moments(const Eigen::MatrixXd& prior_cov, double prior_mean,
                                     std::span<const std::size_t> observed, std::span<const double> residuals,
                                     double noise_var) {
  if (observed.size() != residuals.size()) throw Error(ErrorCode::LengthMismatch, "observed and residuals differ");
  const Eigen::Index n = prior_cov.rows();
  const auto m = static_cast<Eigen::Index>(observed.size());
  AtomPosterior post;
  post.mean = Eigen::VectorXd::Constant(n, prior_mean);
  post.cov = prior_cov;
  if (m == 0) return post;
  Eigen::MatrixXd cross(n, m);
  Eigen::MatrixXd inner(m, m);
  Eigen::VectorXd centred(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto ia = static_cast<Eigen::Index>(observed[a]);
    cross.col(a) = prior_cov.col(ia);
    centred[a] = residuals[a] - prior_mean;
    for (Eigen::Index b = 0; b < m; ++b) inner(a, b) = prior_cov(ia, static_cast<Eigen::Index>(observed[b]));
  }
  inner.diagonal().array() += noise_var;
  Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::FactorizationFailure, "observed block");
  post.mean += cross * llt.solve(centred);
  post.cov -= cross * llt.solve(cross.transpose());
  return post;
}

void update_atom_field(AtomField& field, const Eigen::MatrixXd& prior_cov, const Eigen::MatrixXd& prior_lower,
                       std::span<const int> alloc, std::span<const double> residuals, double noise_var, Rng& rng) {
  const Eigen::Index n = prior_cov.rows();
  const Eigen::Index m = field.values.rows();
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    members[static_cast<std::size_t>(alloc[i])].push_back(static_cast<Eigen::Index>(i));
  }
  const double noise_sd = std::sqrt(noise_var);
  for (Eigen::Index k = 0; k < m; ++k) {
    // Matheron's rule: a prior path conditioned on noisy observations.
    Eigen::VectorXd z(n);
    for (Eigen::Index j = 0; j < n; ++j) z[j] = rnd::normal(rng);
    Eigen::VectorXd path = (prior_lower.triangularView<Eigen::Lower>() * z).array() + field.base_mean;
    const auto& idx = members[static_cast<std::size_t>(k)];
    const auto nk = static_cast<Eigen::Index>(idx.size());
    if (nk > 0) {
      Eigen::MatrixXd inner(nk, nk);
      Eigen::VectorXd gap(nk);
      for (Eigen::Index a = 0; a < nk; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) inner(a, b) = inner(b, a) = prior_cov(idx[a], idx[b]);
        inner(a, a) += noise_var;
        gap[a] = residuals[static_cast<std::size_t>(idx[a])] - path[idx[a]] - noise_sd * rnd::normal(rng);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(inner);
      if (llt.info() != Eigen::Success) throw Error(ErrorCode::FactorizationFailure, "atom field update");
      const Eigen::VectorXd coef = llt.solve(gap);
      for (Eigen::Index a = 0; a < nk; ++a) path += prior_cov.col(idx[a]) * coef[a];
    }
    field.values.row(k) = path.transpose();
  }
}

namespace {

struct HermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Golub-Welsch for the weight exp(-x^2).
const HermiteRule& hermite_rule() {
  static const HermiteRule rule = [] {
    constexpr Eigen::Index n = 200;
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(0.5 * static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    HermiteRule r;
    r.nodes = eig.eigenvalues();
    r.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).transpose().array().square();
    return r;
  }();
  return rule;
}

}  // namespace

double base_marginal_density(double y, double mean, double gp_var, double noise_var) {
  const HermiteRule& rule = hermite_rule();
  const double scale = std::sqrt(2.0 * gp_var);
  double total = 0.0;
  for (Eigen::Index j = 0; j < rule.nodes.size(); ++j) {
    total += rule.weights[j] * std::exp(rnd::log_normal_pdf(y, mean + scale * rule.nodes[j], noise_var));
  }
  return total / std::sqrt(std::numbers::pi);
}

// ---------------------------------------------------------------------------

VaryingAtomsSampler::VaryingAtomsSampler(const Dataset& data, const HyperPriors& hyper, const McmcConfig& config,
                                         KernelKind kind, KernelShape shape,
                                         std::vector<SpaceTimePoint> prediction_points)
    : StickSampler(data, hyper, config, kind, shape), n_pred_(prediction_points.size()) {
  field_.decay = config_.gp_decay;
  field_.rho = config_.gp_rho;
  field_.gp_var = config_.gp_var.value_or(base_.variance);
  field_.base_mean = base_.mean;
  field_.validate();
  field_.points.reserve(n() + n_pred_);
  for (std::size_t i = 0; i < n(); ++i) {
    field_.points.push_back({s1_[i], s2_[i], static_cast<int>(t_[i])});
  }
  field_.points.insert(field_.points.end(), prediction_points.begin(), prediction_points.end());
  prior_cov_ = product_covariance_matrix(field_.points, field_.decay, field_.rho, field_.gp_var);
  prior_lower_ = cholesky_with_jitter(prior_cov_, 1e-8 * field_.gp_var);
}

void VaryingAtomsSampler::initialize(Rng& rng) {
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
  st.sticks.a = 1.0;
  st.sticks.b = 1.0;
  st.omega_lambda = 0.5;

  std::vector<double> sum(m, 0.0);
  std::vector<std::size_t> cnt(m, 0);
  for (std::size_t i = 0; i < n(); ++i) {
    sum[static_cast<std::size_t>(st.c[i])] += y_[i];
    ++cnt[static_cast<std::size_t>(st.c[i])];
  }
  field_.values.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(field_.points.size()));
  for (std::size_t k = 0; k < m; ++k) {
    st.mu[k] = cnt[k] ? sum[k] / static_cast<double>(cnt[k]) : base_.mean;
    st.sigma2[k] = field_.gp_var;
    field_.values.row(static_cast<Eigen::Index>(k)).setConstant(st.mu[k]);
  }
  st.sigma2_eps = 0.5 * base_.variance;
  set_state(std::move(st));
}

void VaryingAtomsSampler::fill_log_density(std::size_t i, std::span<double> out) const {
  const double r = residual(i);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = rnd::log_normal_pdf(r, field_.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)),
                                 state_.sigma2_eps);
  }
}

double VaryingAtomsSampler::log_likelihood() const {
  double total = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    total += rnd::log_normal_pdf(residual(i), field_.values(state_.c[i], static_cast<Eigen::Index>(i)),
                                 state_.sigma2_eps);
  }
  return total;
}

void VaryingAtomsSampler::update_field(Rng& rng) {
  std::vector<double> r(n());
  for (std::size_t i = 0; i < n(); ++i) r[i] = residual(i);
  update_atom_field(field_, prior_cov_, prior_lower_, state_.c, r, state_.sigma2_eps, rng);
  const auto n_obs = static_cast<Eigen::Index>(n());
  for (std::size_t k = 0; k < truncation(); ++k) {
    state_.mu[k] = n_obs > 0 ? field_.values.row(static_cast<Eigen::Index>(k)).head(n_obs).mean() : field_.base_mean;
  }
}

void VaryingAtomsSampler::update_noise_regression(Rng& rng) {
  double ss = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double e = residual(i) - field_.values(state_.c[i], static_cast<Eigen::Index>(i));
    ss += e * e;
  }
  const GammaParams gp = variance_proposal(hyper_.noise_shape, hyper_.noise_rate, n(), ss);
  state_.sigma2_eps = rnd::inverse_gamma(rng, gp.shape, gp.rate);

  const Eigen::Index p = x_.cols();
  if (p == 0) return;
  Eigen::VectorXd target(static_cast<Eigen::Index>(n()));
  for (std::size_t i = 0; i < n(); ++i) {
    target[static_cast<Eigen::Index>(i)] = y_[i] - field_.values(state_.c[i], static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd precision = x_.transpose() * x_ / state_.sigma2_eps;
  precision.diagonal().array() += 1.0 / hyper_.regression_prior_var;
  const Eigen::VectorXd rhs = x_.transpose() * target / state_.sigma2_eps;
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::FactorizationFailure, "regression precision");
  Eigen::VectorXd z(p);
  for (Eigen::Index j = 0; j < p; ++j) z[j] = rnd::normal(rng);
  const Eigen::VectorXd draw = llt.solve(rhs) + llt.matrixU().solve(z);
  for (Eigen::Index j = 0; j < p; ++j) state_.beta[static_cast<std::size_t>(j)] = draw[j];
}

void VaryingAtomsSampler::sweep(Rng& rng) {
  update_allocations(rng);
  update_sticks(rng);
  if (config_.update_knots) update_knots(rng);
  if (config_.update_kernel) update_kernel_hyper(rng);
  update_field(rng);
  update_noise_regression(rng);
  if (config_.update_shapes) update_shape_hyper(rng);
}

double VaryingAtomsSampler::urn_new_mass() const {
  const std::size_t m = truncation();
  const double alpha = state_.sticks.b / state_.sticks.a;
  std::vector<double> pi(m), dens(m);
  std::vector<int> others(n() > 0 ? n() - 1 : 0);
  double total = 0.0;
  for (std::size_t i = 0; i < n(); ++i) {
    const double* row = w_.data() + i * m;
    double rest = 1.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double vk = row[k] * state_.sticks.v[k];
      pi[k] = vk * rest;
      rest *= 1.0 - vk;
    }
    std::copy(state_.c.begin(), state_.c.begin() + static_cast<std::ptrdiff_t>(i), others.begin());
    std::copy(state_.c.begin() + static_cast<std::ptrdiff_t>(i) + 1, state_.c.end(),
              others.begin() + static_cast<std::ptrdiff_t>(i));
    const double r = residual(i);
    for (std::size_t k = 0; k < m; ++k) {
      dens[k] = std::exp(rnd::log_normal_pdf(r, field_.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)),
                                             state_.sigma2_eps));
    }
    const double g0 = base_marginal_density(r, field_.base_mean, field_.gp_var, state_.sigma2_eps);
    try {
      const UrnProbabilities u = urn_allocation_probs(pi, others, dens, g0, alpha);
      total += u.new_atom_occupied + u.new_component;
    } catch (const Error&) {
      // Every term underflowed; the point contributes nothing informative.
    }
  }
  return n() > 0 ? total / static_cast<double>(n()) : 0.0;
}

TraceRecord VaryingAtomsSampler::record(std::size_t iter) const {
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
  r.sigma2.assign(truncation(), 0.0);
  r.sigma2_eps = state_.sigma2_eps;
  r.beta = state_.beta;
  r.occupied = occupied_count();
  r.log_likelihood = log_likelihood();
  r.urn_new_mass = urn_new_mass();
  return r;
}

void VaryingAtomsSampler::predict(Rng& rng, std::span<const std::vector<double>> x, std::vector<double>& mean,
                                  std::vector<double>& var, std::vector<double>& draw) const {
  const std::size_t m = truncation();
  mean.assign(n_pred_, 0.0);
  var.assign(n_pred_, 0.0);
  draw.assign(n_pred_, 0.0);
  std::vector<double> pi(m + 1);
  const double eps = state_.sigma2_eps;
  const double m0 = field_.base_mean;
  for (std::size_t j = 0; j < n_pred_; ++j) {
    const auto col = static_cast<Eigen::Index>(n() + j);
    const SpaceTimePoint& p = field_.points[static_cast<std::size_t>(col)];
    const double rest = compute_weights_into(state_.sticks, p.s1, p.s2, p.t, std::span<double>(pi).first(m));
    pi[m] = rest;
    double shift = 0.0;
    if (!x.empty()) {
      for (std::size_t q = 0; q < state_.beta.size(); ++q) shift += x[j][q] * state_.beta[q];
    }
    double mix_mean = rest * m0, second = rest * (m0 * m0 + field_.gp_var);
    for (std::size_t k = 0; k < m; ++k) {
      const double th = field_.values(static_cast<Eigen::Index>(k), col);
      mix_mean += pi[k] * th;
      second += pi[k] * th * th;
    }
    mean[j] = mix_mean + shift;
    var[j] = std::max(second - mix_mean * mix_mean, 0.0) + eps;
    const int k = rnd::categorical(pi, rnd::uniform(rng));
    const double centre = (k >= 0 && static_cast<std::size_t>(k) < m)
                              ? field_.values(k, col)
                              : rnd::normal(rng, m0, std::sqrt(field_.gp_var));
    draw[j] = rnd::normal(rng, centre + shift, std::sqrt(eps));
  }
}

ChainTrace run_chain_va(const Dataset& data, const McmcConfig& config, const HyperPriors& hyper, KernelKind kind,
                        Rng& rng, KernelShape shape, std::span<const SpaceTimePoint> prediction_points,
                        std::span<const std::vector<double>> prediction_x) {
  config.validate();
  Dataset fit_data;
  fit_data.domain = data.domain;
  for (const auto& o : data.observations) {
    if (!o.missing) fit_data.observations.push_back(o);
  }
  if (config.va_subsample < 1.0 && !fit_data.observations.empty()) {
    const std::size_t total = fit_data.observations.size();
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(config.va_subsample * static_cast<double>(total))));
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    std::vector<Observation> chosen;
    chosen.reserve(keep);
    for (std::size_t i : idx) chosen.push_back(fit_data.observations[i]);
    fit_data.observations = std::move(chosen);
  }
  const std::size_t field_size = fit_data.observations.size() + prediction_points.size();
  if (field_size > config.va_size_guard) {
    throw Error(ErrorCode::SizeGuardExceeded, "varying-atoms field of size " + std::to_string(field_size) +
                                                  " exceeds the guard of " + std::to_string(config.va_size_guard));
  }
  const std::size_t p = data.covariate_dim();
  if (!prediction_x.empty() || p > 0) {
    if (prediction_x.size() != prediction_points.size()) {
      throw Error(ErrorCode::CovariateMismatch, "prediction covariates must accompany every prediction point");
    }
    for (const auto& xs : prediction_x) {
      if (xs.size() != p) throw Error(ErrorCode::CovariateMismatch, "prediction covariate length differs from fit");
    }
  }

  VaryingAtomsSampler sampler(fit_data, hyper, config, kind, shape,
                              std::vector<SpaceTimePoint>(prediction_points.begin(), prediction_points.end()));
  sampler.initialize(rng);
  ChainTrace trace;
  trace.kind = kind;
  trace.shape = sampler.state().sticks.shape;
  trace.truncation = config.truncation;
  trace.covariate_dim = p;
  trace.base = {sampler.base().mean, sampler.gp_var()};
  trace.atom_var_shape = hyper.atom_var_shape;
  trace.atom_var_rate = hyper.atom_var_rate;
  trace.seed = config.seed;
  trace.varying_atoms = true;
  trace.prediction_points.assign(prediction_points.begin(), prediction_points.end());
  trace.prediction_x.assign(prediction_x.begin(), prediction_x.end());
  std::vector<double> mean, var, draw;
  for (std::size_t iter = 0; iter < config.n_iter; ++iter) {
    try {
      sampler.sweep(rng);
    } catch (const Error& e) {
      throw Error(e.code(), std::string("sweep failed: ") + e.what(), iter + 1);
    }
    if (config.adapt && iter < config.n_burn && (iter + 1) % 50 == 0) sampler.adapt_scales();
    if (iter >= config.n_burn && (iter - config.n_burn + 1) % config.thin == 0) {
      trace.records.push_back(sampler.record(iter));
      sampler.predict(rng, prediction_x, mean, var, draw);
      trace.pred_mean.push_back(mean);
      trace.pred_var.push_back(var);
      trace.pred_draw.push_back(draw);
    }
  }
  trace.acceptance = sampler.acceptance();
  return trace;
}

}  // namespace stsb
