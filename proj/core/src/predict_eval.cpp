#include "stsb/predict_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "stsb/random.hpp"

namespace stsb {

namespace {

struct Component {
  double weight;
  double mean;
  double var;
};

struct FreshAtom {
  double mu;
  double sigma2;
};

std::vector<FreshAtom> draw_fresh_atoms(const ChainTrace& trace, Rng& rng) {
  std::vector<FreshAtom> fresh(trace.records.size());
  const double sd = std::sqrt(trace.base.variance);
  for (auto& f : fresh) {
    f.mu = rnd::normal(rng, trace.base.mean, sd);
    f.sigma2 = rnd::inverse_gamma(rng, trace.atom_var_shape, trace.atom_var_rate);
  }
  return fresh;
}

StickState sticks_of(const ChainTrace& trace, const TraceRecord& r) {
  StickState st;
  st.v = r.v;
  st.knots = r.knots;
  st.kind = trace.kind;
  st.shape = trace.shape;
  st.shape.gamma = r.gamma;
  st.shape.lambda = r.lambda;
  st.a = r.a;
  st.b = r.b;
  return st;
}

// Mixture components of one record at one point, remainder included.
void record_mixture(const ChainTrace& trace, const TraceRecord& r, const FreshAtom& fresh, const SpaceTimePoint& p,
                    std::span<const double> x, std::vector<double>& pi, std::vector<Component>& out) {
  const StickState st = sticks_of(trace, r);
  pi.resize(st.size());
  const double rest = compute_weights_into(st, p.s1, p.s2, p.t, pi);
  double shift = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) shift += x[j] * r.beta[j];
  out.clear();
  for (std::size_t k = 0; k < pi.size(); ++k) {
    if (pi[k] > 0.0) out.push_back({pi[k], r.mu[k] + shift, r.sigma2[k] + r.sigma2_eps});
  }
  if (rest > 0.0) out.push_back({rest, fresh.mu + shift, fresh.sigma2 + r.sigma2_eps});
}

void check_covariates(const ChainTrace& trace, std::size_t n_points, std::span<const std::vector<double>> x) {
  if (trace.covariate_dim == 0) {
    if (!x.empty()) {
      for (const auto& row : x) {
        if (!row.empty()) throw Error(ErrorCode::CovariateMismatch, "fit used no covariates");
      }
    }
    return;
  }
  if (x.size() != n_points) throw Error(ErrorCode::CovariateMismatch, "covariates required for every point");
  for (const auto& row : x) {
    if (row.size() != trace.covariate_dim) throw Error(ErrorCode::CovariateMismatch, "covariate length differs from fit");
  }
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double mixture_quantile(const std::vector<Component>& comps, double total_weight, double q) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : comps) {
    const double sd = std::sqrt(c.var);
    lo = std::min(lo, c.mean - 10.0 * sd);
    hi = std::max(hi, c.mean + 10.0 * sd);
  }
  for (int it = 0; it < 100 && hi - lo > 1e-10 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    double cdf = 0.0;
    for (const auto& c : comps) cdf += c.weight * normal_cdf((mid - c.mean) / std::sqrt(c.var));
    if (cdf / total_weight < q) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double empirical_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
}

std::size_t va_point_index(const ChainTrace& trace, const SpaceTimePoint& p) {
  for (std::size_t j = 0; j < trace.prediction_points.size(); ++j) {
    if (trace.prediction_points[j] == p) return j;
  }
  throw Error(ErrorCode::InvalidArgument, "varying-atoms traces predict only at points fixed when fitting");
}

PredictionResult va_predictive(const ChainTrace& trace, std::span<const SpaceTimePoint> points, bool quantiles) {
  PredictionResult res;
  res.points.assign(points.begin(), points.end());
  const double n_rec = static_cast<double>(trace.records.size());
  for (const auto& p : points) {
    const std::size_t j = va_point_index(trace, p);
    double m = 0.0, m2 = 0.0, v = 0.0;
    std::vector<double> draws;
    draws.reserve(trace.records.size());
    for (std::size_t r = 0; r < trace.records.size(); ++r) {
      m += trace.pred_mean[r][j];
      m2 += trace.pred_mean[r][j] * trace.pred_mean[r][j];
      v += trace.pred_var[r][j];
      draws.push_back(trace.pred_draw[r][j]);
    }
    m /= n_rec;
    res.mean.push_back(m);
    res.sd.push_back(std::sqrt(std::max(v / n_rec + m2 / n_rec - m * m, 0.0)));
    if (quantiles) {
      res.q05.push_back(empirical_quantile(draws, 0.05));
      res.q50.push_back(empirical_quantile(draws, 0.50));
      res.q95.push_back(empirical_quantile(draws, 0.95));
    }
  }
  return res;
}

}  // namespace

PredictionResult posterior_predictive(const ChainTrace& trace, std::span<const SpaceTimePoint> points,
                                      std::span<const std::vector<double>> covariates, Rng& rng, bool quantiles) {
  if (trace.records.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no kept records");
  check_covariates(trace, points.size(), covariates);
  if (trace.varying_atoms) return va_predictive(trace, points, quantiles);

  const std::vector<FreshAtom> fresh = draw_fresh_atoms(trace, rng);
  PredictionResult res;
  res.points.assign(points.begin(), points.end());
  const double n_rec = static_cast<double>(trace.records.size());
  std::vector<double> pi;
  std::vector<Component> comps, pooled;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::span<const double> x =
        covariates.empty() ? std::span<const double>{} : std::span<const double>(covariates[i]);
    double mean = 0.0, second = 0.0;
    pooled.clear();
    for (std::size_t r = 0; r < trace.records.size(); ++r) {
      record_mixture(trace, trace.records[r], fresh[r], points[i], x, pi, comps);
      for (const auto& c : comps) {
        mean += c.weight * c.mean;
        second += c.weight * (c.var + c.mean * c.mean);
        // Negligible components cannot move a 5% quantile.
        if (quantiles && c.weight > 1e-12) pooled.push_back(c);
      }
    }
    mean /= n_rec;
    second /= n_rec;
    res.mean.push_back(mean);
    res.sd.push_back(std::sqrt(std::max(second - mean * mean, 0.0)));
    if (quantiles) {
      double total = 0.0;
      for (const auto& c : pooled) total += c.weight;
      res.q05.push_back(mixture_quantile(pooled, total, 0.05));
      res.q50.push_back(mixture_quantile(pooled, total, 0.50));
      res.q95.push_back(mixture_quantile(pooled, total, 0.95));
    }
  }
  return res;
}

Espe espe(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "prediction and truth lengths differ");
  if (truth.empty()) throw Error(ErrorCode::LengthMismatch, "no points to score");
  Espe e;
  for (std::size_t i = 0; i < truth.size(); ++i) e.sum += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
  e.mean = e.sum / static_cast<double>(truth.size());
  return e;
}

Espe espe(const PredictionResult& pred, std::span<const double> truth) { return espe(pred.mean, truth); }

std::vector<ResidualRow> residual_map(std::span<const double> predicted, std::span<const double> truth,
                                      std::span<const SpaceTimePoint> points, int window) {
  if (predicted.size() != truth.size() || points.size() != truth.size()) {
    throw Error(ErrorCode::LengthMismatch, "residual inputs are not aligned");
  }
  if (window < 1) throw Error(ErrorCode::InvalidArgument, "window must be >= 1");
  // Groups keyed by (s1, s2, window index) in first-appearance order.
  std::map<std::tuple<double, double, int>, std::size_t> index;
  std::vector<ResidualRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const int w = (p.t - 1) / window;
    auto [it, fresh] = index.emplace(std::make_tuple(p.s1, p.s2, w), rows.size());
    if (fresh) rows.push_back({p.s1, p.s2, w * window + 1, (w + 1) * window, 0, 0.0});
    ResidualRow& row = rows[it->second];
    const double e = truth[i] - predicted[i];
    row.mean_sq_residual += e * e;
    ++row.count;
  }
  for (auto& r : rows) r.mean_sq_residual /= static_cast<double>(r.count);
  return rows;
}

std::vector<double> predictive_density(const ChainTrace& trace, const SpaceTimePoint& point,
                                       std::span<const double> y_grid, Rng& rng, std::span<const double> covariates) {
  if (trace.records.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no kept records");
  if (covariates.size() != trace.covariate_dim) throw Error(ErrorCode::CovariateMismatch, "covariate length");
  if (!std::is_sorted(y_grid.begin(), y_grid.end())) throw Error(ErrorCode::InvalidArgument, "grid must be sorted");
  std::vector<double> dens(y_grid.size(), 0.0);
  const double n_rec = static_cast<double>(trace.records.size());
  if (trace.varying_atoms) {
    // Gaussian moment match per record at a fit-time prediction point.
    const std::size_t j = va_point_index(trace, point);
    for (std::size_t r = 0; r < trace.records.size(); ++r) {
      for (std::size_t g = 0; g < y_grid.size(); ++g) {
        dens[g] += std::exp(rnd::log_normal_pdf(y_grid[g], trace.pred_mean[r][j], trace.pred_var[r][j]));
      }
    }
  } else {
    const std::vector<FreshAtom> fresh = draw_fresh_atoms(trace, rng);
    std::vector<double> pi;
    std::vector<Component> comps;
    for (std::size_t r = 0; r < trace.records.size(); ++r) {
      record_mixture(trace, trace.records[r], fresh[r], point, covariates, pi, comps);
      for (const auto& c : comps) {
        for (std::size_t g = 0; g < y_grid.size(); ++g) {
          dens[g] += c.weight * std::exp(rnd::log_normal_pdf(y_grid[g], c.mean, c.var));
        }
      }
    }
  }
  for (double& d : dens) d /= n_rec;
  return dens;
}

}  // namespace stsb
