#include "stsb/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "stsb/linalg.hpp"
#include "stsb/random.hpp"

namespace stsb {

ThomasRealization thomas_realization(double omega, double delta, double radius, const Window& window, Rng& rng) {
  if (!(omega > 0.0) || !(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "omega and delta must be positive");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "radius must be positive");
  if (!(window.area() > 0.0)) throw Error(ErrorCode::InvalidArgument, "window has no area");
  ThomasRealization out;
  // Parents live on the window dilated by the radius so that the clipped
  // pattern is the stationary process restricted to the window (no edge loss).
  const Window outer{{window.s1.lo - radius, window.s1.hi + radius}, {window.s2.lo - radius, window.s2.hi + radius}};
  const long n_parents = rnd::poisson(rng, omega * outer.area());
  for (long j = 0; j < n_parents; ++j) {
    out.parents.push_back(
        {rnd::uniform(rng, outer.s1.lo, outer.s1.hi), rnd::uniform(rng, outer.s2.lo, outer.s2.hi)});
  }
  for (std::size_t j = 0; j < out.parents.size(); ++j) {
    const long n_daughters = rnd::poisson(rng, delta);
    for (long d = 0; d < n_daughters; ++d) {
      const double r = radius * std::sqrt(rnd::uniform(rng));
      const double angle = 2.0 * std::numbers::pi * rnd::uniform(rng);
      const Location p{out.parents[j].s1 + r * std::cos(angle), out.parents[j].s2 + r * std::sin(angle)};
      if (window.s1.contains(p.s1) && window.s2.contains(p.s2)) {
        out.daughters.push_back(p);
        out.parent_of.push_back(j);
      }
    }
  }
  return out;
}

std::vector<Location> thomas_process(double omega, double delta, double radius, const Window& window, Rng& rng) {
  ThomasRealization r = thomas_realization(omega, delta, radius, window, rng);
  if (r.daughters.empty()) throw Error(ErrorCode::EmptyRealization, "Thomas process produced no points");
  return std::move(r.daughters);
}

namespace {

constexpr std::pair<CovModel, const char*> kModelNames[] = {
    {CovModel::GaussianCov, "gaussian"},
    {CovModel::ExpNuggetTrend, "exp_nugget_trend"},
    {CovModel::Stable, "stable"},
    {CovModel::ZonalAnisotropyNugget, "zonal_anisotropy"},
    {CovModel::Stein, "stein"},
    {CovModel::NonSeparable, "nonseparable"},
};

}  // namespace

const char* to_string(CovModel model) {
  for (const auto& [m, name] : kModelNames) {
    if (m == model) return name;
  }
  return "unknown";
}

CovModel parse_cov_model(const std::string& name) {
  for (const auto& [m, n] : kModelNames) {
    if (name == n) return m;
  }
  // Numbered aliases 1..6 in list order.
  if (name.size() == 1 && name[0] >= '1' && name[0] <= '6') return kModelNames[name[0] - '1'].first;
  throw Error(ErrorCode::BadValue, "unknown covariance model '" + name + "'");
}

const char* to_string(TimeMode mode) { return mode == TimeMode::Replicate ? "replicate" : "independent"; }

TimeMode parse_time_mode(const std::string& name) {
  if (name == "replicate") return TimeMode::Replicate;
  if (name == "independent") return TimeMode::Independent;
  throw Error(ErrorCode::BadValue, "unknown time mode '" + name + "'");
}

void CovModelSpec::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorCode::UnsupportedParams, msg); };
  if (!(tau2 > 0.0)) bad("tau2 must be positive");
  if (!(nugget >= 0.0)) bad("nugget must be nonnegative");
  if (!std::isfinite(trend)) bad("trend must be finite");
  switch (tag) {
    case CovModel::GaussianCov:
    case CovModel::ExpNuggetTrend:
      if (!(h > 0.0)) bad("h must be positive");
      break;
    case CovModel::Stable:
      if (!(h > 0.0)) bad("h must be positive");
      if (!(alpha > 0.0 && alpha <= 2.0)) bad("stable exponent must lie in (0, 2]");
      break;
    case CovModel::ZonalAnisotropyNugget:
      if (!(h > 0.0)) bad("h must be positive");
      if (!(anisotropy > 0.0)) bad("anisotropy factor must be positive");
      break;
    case CovModel::Stein:
      if (nu != 1.5) bad("Stein model is available for nu = 1.5 only");
      break;
    case CovModel::NonSeparable:
      break;
  }
}

CovModelSpec default_cov_spec(CovModel model) {
  CovModelSpec s;
  s.tag = model;
  switch (model) {
    case CovModel::GaussianCov:
      s.tau2 = 1.0;
      s.h = 0.4;
      break;
    case CovModel::ExpNuggetTrend:
      s.tau2 = 4.0;
      s.h = 10.0;
      s.nugget = 1.0;
      s.trend = 0.5;
      break;
    case CovModel::Stable:
      s.tau2 = 1.0;
      s.h = 0.4;
      s.alpha = 1.9;
      break;
    case CovModel::ZonalAnisotropyNugget:
      s.tau2 = 1.0;
      s.h = 0.4;
      s.anisotropy = 5.0;
      s.nugget = 0.1;
      break;
    case CovModel::Stein:
    case CovModel::NonSeparable:
      s.tau2 = 1.0;
      break;
  }
  return s;
}

namespace {

// Covariance without the nugget.
double smooth_cov(const CovModelSpec& s, const SpaceTimePoint& p, const SpaceTimePoint& q) {
  const double d1 = p.s1 - q.s1, d2 = p.s2 - q.s2;
  const double d2sum = d1 * d1 + d2 * d2;
  const double dist = std::sqrt(d2sum);
  if (!s.time_dependent() && s.time_mode == TimeMode::Independent && p.t != q.t) return 0.0;
  const double dt = std::abs(static_cast<double>(p.t - q.t));
  switch (s.tag) {
    case CovModel::GaussianCov:
      return s.tau2 * std::exp(-d2sum / s.h);
    case CovModel::ExpNuggetTrend:
      return s.tau2 * std::exp(-dist / s.h);
    case CovModel::Stable:
      return s.tau2 * std::exp(-std::pow(dist, s.alpha) / s.h);
    case CovModel::ZonalAnisotropyNugget: {
      const double e2 = d2 / s.anisotropy;
      return s.tau2 * std::exp(-(d1 * d1 + e2 * e2) / s.h);
    }
    case CovModel::Stein: {
      // W_1.5(z) - <ds, c> dt / ((nu - 1)(2 nu + d)) * W_0.5(z), d = 2.
      const double z = std::hypot(dist, dt);
      const double lag = static_cast<double>(p.t - q.t);
      const double inner = (d1 * s.c1 + d2 * s.c2) * lag;
      const double denom = (s.nu - 1.0) * (2.0 * s.nu + 2.0);
      return s.tau2 * ((1.0 + z) * std::exp(-z) - inner / denom * std::exp(-z));
    }
    case CovModel::NonSeparable: {
      const double psi = dt + 1.0;
      return s.tau2 / psi * std::exp(-d2sum / psi);
    }
  }
  return 0.0;
}

}  // namespace

double cov_value(const CovModelSpec& spec, const SpaceTimePoint& p, const SpaceTimePoint& q) {
  spec.validate();
  double c = smooth_cov(spec, p, q);
  if (p == q) c += spec.nugget;
  return c;
}

std::vector<double> simulate_field(const CovModelSpec& spec, std::span<const SpaceTimePoint> points, Rng& rng) {
  spec.validate();
  if (points.empty()) return {};
  // Draw the smooth part on groups of points that can correlate, then add
  // the nugget per point.
  std::vector<std::vector<std::size_t>> groups;
  if (!spec.time_dependent() && spec.time_mode == TimeMode::Independent) {
    std::map<int, std::size_t> by_t;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto [it, fresh] = by_t.emplace(points[i].t, groups.size());
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  } else {
    groups.emplace_back(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) groups[0][i] = i;
  }

  std::vector<double> y(points.size(), spec.trend);
  for (const auto& g : groups) {
    // Coincident points (including replicated locations) share one value.
    std::vector<std::size_t> unique;
    std::vector<std::size_t> slot(g.size());
    for (std::size_t a = 0; a < g.size(); ++a) {
      const SpaceTimePoint& pa = points[g[a]];
      std::size_t found = unique.size();
      for (std::size_t u = 0; u < unique.size(); ++u) {
        const SpaceTimePoint& pu = points[unique[u]];
        const bool replicated = !spec.time_dependent() && spec.time_mode == TimeMode::Replicate;
        const bool same_t = replicated || pu.t == pa.t;
        if (pu.s1 == pa.s1 && pu.s2 == pa.s2 && same_t) {
          found = u;
          break;
        }
      }
      if (found == unique.size()) unique.push_back(g[a]);
      slot[a] = found;
    }
    const auto m = static_cast<Eigen::Index>(unique.size());
    Eigen::MatrixXd cov(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b <= a; ++b) {
        cov(a, b) = cov(b, a) = smooth_cov(spec, points[unique[a]], points[unique[b]]);
      }
    }
    const Eigen::MatrixXd lower = cholesky_with_jitter(cov, 1e-8 * spec.tau2);
    const Eigen::VectorXd draw = draw_mvn(Eigen::VectorXd::Zero(m), lower, rng);
    for (std::size_t a = 0; a < g.size(); ++a) y[g[a]] += draw[static_cast<Eigen::Index>(slot[a])];
  }
  if (spec.nugget > 0.0) {
    const double sd = std::sqrt(spec.nugget);
    for (double& v : y) v += rnd::normal(rng, 0.0, sd);
  }
  return y;
}

std::vector<SpaceTimePoint> space_time_grid(std::span<const Location> locations, int t_max) {
  std::vector<SpaceTimePoint> pts;
  pts.reserve(locations.size() * static_cast<std::size_t>(std::max(t_max, 0)));
  for (int t = 1; t <= t_max; ++t) {
    for (const auto& l : locations) pts.push_back({l.s1, l.s2, t});
  }
  return pts;
}

Dataset simulate_dataset(const CovModelSpec& spec, std::span<const Location> locations, int t_max, Rng& rng) {
  if (t_max < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  const auto pts = space_time_grid(locations, t_max);
  const auto y = simulate_field(spec, pts, rng);
  Dataset d;
  d.observations.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) d.observations.push_back({pts[i], y[i], {}, false});
  return d;
}

double regime_mean(double t) { return std::cos(t) + 2.0 * std::sin(t) + 0.5 * t - std::min(t, 16.0); }

RegimeData scenario_regime_labeled(std::size_t n_per_t, int t_max, double rho_lengthscale, Rng& rng) {
  if (t_max < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  if (n_per_t < 1) throw Error(ErrorCode::InvalidArgument, "n_per_t must be >= 1");
  if (!(rho_lengthscale > 0.0)) throw Error(ErrorCode::InvalidArgument, "lengthscale must be positive");
  constexpr double var1 = 0.04, var2 = 1.0, var3 = 0.09;

  std::vector<Location> locs(n_per_t);
  for (auto& l : locs) l = {rnd::uniform(rng), rnd::uniform(rng)};
  const auto n = static_cast<Eigen::Index>(n_per_t);
  Eigen::MatrixXd corr(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double d1 = locs[i].s1 - locs[j].s1, d2 = locs[i].s2 - locs[j].s2;
      corr(i, j) = corr(j, i) = std::exp(-(d1 * d1 + d2 * d2) / (2.0 * rho_lengthscale * rho_lengthscale));
    }
  }
  const Eigen::MatrixXd lower = cholesky_with_jitter(corr, 1e-8);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);

  RegimeData out;
  out.data.domain = SpaceTimeDomain{{0.0, 1.0}, {0.0, 1.0}, t_max};
  out.data.observations.reserve(n_per_t * static_cast<std::size_t>(t_max));
  out.component.reserve(out.data.observations.capacity());
  for (int t = 1; t <= t_max; ++t) {
    const double f = regime_mean(t);
    const Eigen::VectorXd z0 = draw_mvn(zero, lower, rng);
    const Eigen::VectorXd z1 = draw_mvn(zero, lower, rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      int comp = 0;
      double y;
      if (t < 8) {
        y = f + std::sqrt(var1) * z0[i];
      } else if (t < 16) {
        comp = rnd::uniform(rng) < 0.3 ? 0 : 1;
        y = comp == 0 ? f + std::sqrt(var1) * z0[i] : f + std::sqrt(var2) * z1[i];
      } else {
        comp = rnd::uniform(rng) < 0.5 ? 0 : 1;
        y = (comp == 0 ? f : 0.1 * t + f) + std::sqrt(var3) * (comp == 0 ? z0[i] : z1[i]);
      }
      out.data.observations.push_back({{locs[i].s1, locs[i].s2, t}, y, {}, false});
      out.component.push_back(comp);
    }
  }
  return out;
}

Dataset scenario_regime(std::size_t n_per_t, int t_max, double rho_lengthscale, Rng& rng) {
  return scenario_regime_labeled(n_per_t, t_max, rho_lengthscale, rng).data;
}

}  // namespace stsb
