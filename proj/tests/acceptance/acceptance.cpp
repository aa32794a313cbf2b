// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stsb/cli_io.hpp"
#include "stsb/datagen.hpp"
#include "stsb/gp_atoms.hpp"
#include "stsb/kernels.hpp"
#include "stsb/mcmc.hpp"
#include "stsb/predict_eval.hpp"
#include "stsb/random.hpp"
#include "stsb/stickbreak.hpp"

using namespace stsb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double unif(Rng& rng, double lo = 0.0, double hi = 1.0) { return rnd::uniform(rng, lo, hi); }

Dataset to_dataset(const std::vector<SpaceTimePoint>& pts, const std::vector<double>& y) {
  Dataset d;
  for (std::size_t i = 0; i < pts.size(); ++i) d.observations.push_back({pts[i], y[i], {}, false});
  return d;
}

// Random 70/30 split of the observed rows.
std::pair<Dataset, Dataset> split(const Dataset& all, double test_frac, Rng& rng) {
  Dataset train, test;
  for (const auto& o : all.observations) (unif(rng) < test_frac ? test : train).observations.push_back(o);
  train.domain = all.domain;
  return {train, test};
}

std::vector<SpaceTimePoint> points_of(const Dataset& d) {
  std::vector<SpaceTimePoint> p;
  for (const auto& o : d.observations) p.push_back(o.point);
  return p;
}

std::vector<double> responses_of(const Dataset& d) {
  std::vector<double> y;
  for (const auto& o : d.observations) y.push_back(o.y);
  return y;
}

// ---------------------------------------------------------------------------

Outcome c1_kernels() {
  Rng rng(101);
  double worst = 0.0, worst_rank1 = 0.0;
  for (int i = 0; i < 100; ++i) {
    const SpaceTimePoint p{unif(rng), unif(rng), 1 + static_cast<int>(unif(rng, 0, 20))};
    const SpaceTimePoint q{unif(rng), unif(rng), 1 + static_cast<int>(unif(rng, 0, 20))};
    const Knot k{unif(rng), unif(rng), unif(rng, 1, 20)};
    KernelShape sh;
    sh.gamma = unif(rng, 0.0, 5.0);
    sh.lambda = 0.0;
    const double d2 = (p.s1 - k.psi1) * (p.s1 - k.psi1) + (p.s2 - k.psi2) * (p.s2 - k.psi2);
    const double spatial = std::exp(-d2);
    const double temporal = 1.0 / (sh.gamma * std::abs(p.t - k.zeta) + 1.0);
    worst = std::max(worst, std::abs(eval_gneiting(p, k, sh) - spatial * temporal));
    // Rank one in (space, time): w(s,t) w(s',t') = w(s,t') w(s',t).
    const SpaceTimePoint pq{p.s1, p.s2, q.t}, qp{q.s1, q.s2, p.t};
    const double lhs = eval_gneiting(p, k, sh) * eval_gneiting(q, k, sh);
    const double rhs = eval_gneiting(pq, k, sh) * eval_gneiting(qp, k, sh);
    worst_rank1 = std::max(worst_rank1, std::abs(lhs - rhs));
  }
  bool bounded = true;
  std::size_t evals = 0;
  for (KernelKind kind : {KernelKind::SeparableExp, KernelKind::Gneiting, KernelKind::Constant}) {
    for (int i = 0; i < 10000; ++i) {
      const SpaceTimePoint p{unif(rng, -1, 2), unif(rng, -1, 2), 1 + static_cast<int>(unif(rng, 0, 50))};
      const Knot k{unif(rng), unif(rng), unif(rng, 1, 50)};
      KernelShape sh;
      sh.h1 = unif(rng, 0.01, 2);
      sh.h2 = unif(rng, 0.01, 2);
      sh.ht = unif(rng, 0.5, 10);
      sh.gamma = unif(rng, 0, 10);
      sh.lambda = unif(rng) < 0.3 ? 0.0 : unif(rng);
      const double w = eval(kind, p, k, sh);
      bounded = bounded && w > 0.0 && w <= 1.0 && std::isfinite(w);
      ++evals;
    }
  }
  return {worst <= 1e-12 && worst_rank1 <= 1e-12 && bounded,
          fmt("max |w - spatial*temporal| = %.2e, max rank-one defect = %.2e, %zu evals in (0,1]: %s", worst,
              worst_rank1, evals, bounded ? "yes" : "no")};
}

Outcome c2_normalization() {
  Rng rng(202);
  double worst = 0.0;
  const KernelKind kinds[] = {KernelKind::SeparableExp, KernelKind::Gneiting, KernelKind::Constant};
  for (int i = 0; i < 10000; ++i) {
    StickState st;
    st.kind = kinds[i % 3];
    st.shape.h1 = unif(rng, 0.05, 1);
    st.shape.h2 = unif(rng, 0.05, 1);
    st.shape.ht = unif(rng, 0.5, 5);
    st.shape.gamma = unif(rng, 0, 10);
    st.shape.lambda = unif(rng);
    const auto m = static_cast<std::size_t>(unif(rng, 1, 201));
    const double a = unif(rng, 0.1, 5), b = unif(rng, 0.1, 10);
    for (std::size_t k = 0; k < m; ++k) {
      st.v.push_back(rnd::beta(rng, a, b));
      st.knots.push_back({unif(rng), unif(rng), unif(rng, 1, 24)});
    }
    const SpaceTimePoint p{unif(rng), unif(rng), 1 + static_cast<int>(unif(rng, 0, 24))};
    const Weights w = compute_weights(st, p);
    long double total = w.remainder;
    for (double x : w.pi) total += x;
    worst = std::max(worst, static_cast<double>(std::abs(total - 1.0L)));
  }
  return {worst <= 1e-12, fmt("max |sum pi + remainder - 1| = %.2e over 10^4 pairs", worst)};
}

Outcome c3_exchangeable() {
  Rng rng(303);
  bool ok = true;
  std::string detail;
  for (auto [a, b] : {std::pair{1.0, 1.0}, {1.0, 9.0}, {2.0, 5.0}}) {
    PriorConfig cfg;
    cfg.domain = {{0, 1}, {0, 1}, 10};
    cfg.truncation = 200;
    cfg.a = a;
    cfg.b = b;
    cfg.kind = KernelKind::Constant;
    const McEstimate est = marginal_coclustering_mc(cfg, {0.2, 0.3, 2}, {0.7, 0.9, 8}, 100000, rng);
    const double truth = (a + 1.0) / (a + 2.0 * b + 1.0);
    const double z = std::abs(est.estimate - truth) / est.std_error;
    ok = ok && z < 3.0;
    detail += fmt("(a,b)=(%g,%g): %.4f vs %.4f, z=%.2f; ", a, b, est.estimate, truth, z);
  }
  return {ok, detail};
}

Outcome c4_g_function() {
  Rng rng(404);
  const SpaceTimeDomain dom{{0, 1}, {0, 1}, 10};
  const fs::path log_path = fs::current_path() / "g_discrepancy.csv";
  std::ofstream log(log_path);
  log << "s1,s2,s1p,s2p,t,tp,gamma,lambda,g_closed,g_mc,g_mc_se,g_quadrature,z_closed,z_quadrature\n";
  std::size_t disagree = 0;
  double worst_quad = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Location s{unif(rng), unif(rng)}, sp{unif(rng), unif(rng)};
    const int t = 1 + static_cast<int>(unif(rng, 0, 10)), tp = 1 + static_cast<int>(unif(rng, 0, 10));
    KernelShape sh;
    sh.gamma = unif(rng, 0.1, 3.0);
    sh.lambda = i % 4 == 0 ? 0.0 : unif(rng);
    const double closed = g_gneiting(s, sp, t, tp, sh.gamma, sh.lambda);
    const McEstimate mc = g_mc(KernelKind::Gneiting, sh, dom, s, sp, t, tp, 200000, rng);
    const double quad = g_quadrature(KernelKind::Gneiting, sh, dom, s, sp, t, tp);
    const double z = std::abs(closed - mc.estimate) / mc.std_error;
    const double zq = std::abs(quad - mc.estimate) / mc.std_error;
    worst_quad = std::max(worst_quad, zq);
    if (z >= 2.0) ++disagree;
    log << fmt("%.6f,%.6f,%.6f,%.6f,%d,%d,%.6f,%.6f,%.8g,%.8g,%.3g,%.8g,%.3f,%.3f\n", s.s1, s.s2, sp.s1, sp.s2, t, tp,
               sh.gamma, sh.lambda, closed, mc.estimate, mc.std_error, quad, z, zq);
  }
  log.close();
  // The flag only counts when the Monte Carlo reference is itself confirmed
  // by the independent quadrature.
  const bool reference_ok = worst_quad < 4.0;
  const bool logged = fs::exists(log_path) && fs::file_size(log_path) > 0;
  if (disagree == 0) return {reference_ok, fmt("closed-form g agrees at 20/20 tuples; max quadrature z = %.2f", worst_quad)};
  return {reference_ok && logged,
          fmt("discrepancy flagged: closed-form g off by >= 2 SE at %zu/20 tuples; g_mc confirmed by quadrature "
              "(max z = %.2f); log: %s",
              disagree, worst_quad, log_path.string().c_str())};
}

// Five points, three components, fixed allocations.
struct SmallInstance {
  std::vector<double> y{0.8, 1.4, 1.1, -0.6, 2.3};
  std::vector<int> c{0, 0, 0, 1, 2};
  Dataset data() const {
    Dataset d;
    for (std::size_t i = 0; i < y.size(); ++i) {
      d.observations.push_back({{0.1 + 0.2 * static_cast<double>(i), 0.5, 1}, y[i], {}, false});
    }
    return d;
  }
};

Outcome c5_conjugacy() {
  const SmallInstance inst;
  HyperPriors hyper;
  hyper.base_mean = 0.5;
  hyper.base_variance = 2.0;
  McmcConfig cfg;
  cfg.truncation = 3;
  BlockedGibbsSampler s(inst.data(), hyper, cfg, KernelKind::Constant);
  Rng rng(505);
  s.initialize(rng);
  LatentState st = s.state();
  st.c = inst.c;
  st.mu = {1.0, -0.5, 2.0};
  st.sigma2 = {0.3, 0.3, 0.3};
  st.sigma2_eps = 0.2;

  // mu_1 given three residuals: the sampler restarts from the same state each draw.
  std::vector<double> mu_draws;
  for (int i = 0; i < 10000; ++i) {
    s.set_state(st);
    s.update_atoms(rng);
    mu_draws.push_back(s.state().mu[0]);
  }
  const double var = st.sigma2[0] + st.sigma2_eps;
  const oracle::GridCdf mu_cdf(
      [&](double m) {
        double lp = oracle::normal_log_density(m, *hyper.base_mean, *hyper.base_variance);
        for (int i = 0; i < 3; ++i) lp += oracle::normal_log_density(inst.y[i], m, var);
        return lp;
      },
      -6.0, 8.0, 40001);
  const double ks_mu = oracle::ks_distance(mu_draws, mu_cdf);

  // sigma2_eps is a Metropolis-Hastings update; run it as a chain with
  // everything else fixed and thin the output.
  s.set_state(st);
  const std::size_t before = s.acceptance().var_accepted, proposed0 = s.acceptance().var_proposed;
  std::vector<double> log_eps;
  for (int i = 0; i < 10000; ++i) {
    for (int j = 0; j < 5; ++j) s.update_noise_regression(rng);
    log_eps.push_back(std::log(s.state().sigma2_eps));
  }
  const double acc = static_cast<double>(s.acceptance().var_accepted - before) /
                     static_cast<double>(s.acceptance().var_proposed - proposed0);
  const oracle::GridCdf eps_cdf(
      [&](double u) {
        const double e = std::exp(u);
        // Inverse-gamma prior on e, written in u = log e (Jacobian e).
        double lp = -hyper.noise_shape * u - hyper.noise_rate / e;
        for (std::size_t i = 0; i < inst.y.size(); ++i) {
          const auto k = static_cast<std::size_t>(inst.c[i]);
          lp += oracle::normal_log_density(inst.y[i], st.mu[k], st.sigma2[k] + e);
        }
        return lp;
      },
      std::log(1e-6), std::log(1e5), 200001);
  const double ks_eps = oracle::ks_distance(log_eps, eps_cdf);
  return {ks_mu < 0.02 && ks_eps < 0.02,
          fmt("KS(mu_1) = %.4f, KS(sigma2_eps) = %.4f (MH acceptance %.3f)", ks_mu, ks_eps, acc)};
}

Outcome c6_geweke() {
  HyperPriors hyper;
  hyper.base_mean = 0.0;
  hyper.base_variance = 1.0;
  hyper.a_range = {0.5, 5.0};
  hyper.b_range = {0.5, 5.0};
  hyper.noise_shape = 6.0;
  hyper.noise_rate = 5.0;
  hyper.atom_var_shape = 6.0;
  hyper.atom_var_rate = 0.5;
  hyper.gamma_range = {0.0, 5.0};
  McmcConfig cfg;
  cfg.truncation = 8;
  const std::vector<SpaceTimePoint> pts{{0.1, 0.2, 1}, {0.8, 0.3, 2}, {0.4, 0.9, 3}, {0.6, 0.5, 4}, {0.3, 0.6, 5}};
  const KernelKind kind = KernelKind::Gneiting;

  Rng rng(606);
  constexpr int n_stats = 6;
  const char* names[n_stats] = {"V1", "V1^2", "mu1", "mu1^2", "s2eps", "s2eps^2"};
  auto stats = [](const LatentState& st) {
    const double v = st.sticks.v[0], m = st.mu[0], e = st.sigma2_eps;
    return std::array<double, n_stats>{v, v * v, m, m * m, e, e * e};
  };
  std::vector<std::vector<double>> fwd(n_stats), gibbs(n_stats);
  for (int i = 0; i < 100000; ++i) {
    const auto x = stats(simulate_from_prior(pts, hyper, cfg, kind, {}, true, true, rng).state);
    for (int j = 0; j < n_stats; ++j) fwd[j].push_back(x[j]);
  }

  const PriorSimulation init = simulate_from_prior(pts, hyper, cfg, kind, {}, true, true, rng);
  BlockedGibbsSampler s(to_dataset(pts, init.y), hyper, cfg, kind);
  s.set_state(init.state);
  for (int it = 0; it < 10000; ++it) {
    s.sweep(rng);
    const auto x = stats(s.state());
    for (int j = 0; j < n_stats; ++j) gibbs[j].push_back(x[j]);
    s.set_responses(s.simulate_responses(rng));
  }
  bool ok = true;
  std::string detail;
  for (int j = 0; j < n_stats; ++j) {
    const oracle::Moments f = oracle::moments(fwd[j]);
    const double gm = oracle::moments(gibbs[j]).mean;
    const double gse = oracle::batch_means_se(gibbs[j]);
    const double z = std::abs(f.mean - gm) / std::sqrt(f.se * f.se + gse * gse);
    ok = ok && z < 4.0;
    detail += fmt("%s %.3f/%.3f z=%.2f; ", names[j], f.mean, gm, z);
  }
  return {ok, detail};
}

struct RecoveryRun {
  double worst_z = 0.0;
  double mean_pred = 0.0;
  std::size_t mode = 0;
  double mean_a = 0.0, mean_b = 0.0;
};

RecoveryRun recovery_run(const std::vector<SpaceTimePoint>& pts, const std::vector<double>& y, KernelKind kind,
                         Rng& rng) {
  McmcConfig cfg;
  cfg.truncation = 30;
  cfg.n_iter = 4000;
  cfg.n_burn = 2000;
  cfg.thin = 2;
  const ChainTrace trace = run_chain(to_dataset(pts, y), cfg, HyperPriors{}, kind, rng);
  const PredictionResult pred = posterior_predictive(trace, pts, {}, rng, false);
  RecoveryRun out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.worst_z = std::max(out.worst_z, std::abs(pred.mean[i] - 2.0) / pred.sd[i]);
  }
  out.mean_pred = std::accumulate(pred.mean.begin(), pred.mean.end(), 0.0) / static_cast<double>(pts.size());
  std::map<std::size_t, std::size_t> counts;
  for (const auto& r : trace.records) {
    ++counts[r.occupied];
    out.mean_a += r.a / static_cast<double>(trace.records.size());
    out.mean_b += r.b / static_cast<double>(trace.records.size());
  }
  out.mode = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  return out;
}

Outcome c7_recovery() {
  Rng rng(707);
  std::vector<SpaceTimePoint> pts;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    pts.push_back({unif(rng), unif(rng), 1 + i % 5});
    y.push_back(rnd::normal(rng, 2.0, 1.0));
  }
  const RecoveryRun st = recovery_run(pts, y, KernelKind::Gneiting, rng);
  // Context only: the plain DP special case, and the number of occupied
  // components the stSB prior alone implies at the posterior-mean (a, b).
  const RecoveryRun dp = recovery_run(pts, y, KernelKind::Constant, rng);
  PriorConfig prior;
  prior.domain = {{0, 1}, {0, 1}, 5};
  prior.truncation = 30;
  prior.a = st.mean_a;
  prior.b = st.mean_b;
  const double prior_count = expected_cluster_count(prior, 200, 200, rng);
  return {st.worst_z < 3.0 && st.mode <= 3,
          fmt("stSB: max |mean - 2|/sd = %.3f (avg predictive mean %.3f), occupied mode = %zu; prior alone implies "
              "%.1f occupied at (a,b)=(%.2f,%.2f); Constant DP for reference: max z = %.3f, occupied mode = %zu",
              st.worst_z, st.mean_pred, st.mode, prior_count, st.mean_a, st.mean_b, dp.worst_z, dp.mode)};
}

McmcConfig desk_config(std::size_t m, std::size_t iters, std::size_t burn) {
  McmcConfig cfg;
  cfg.truncation = m;
  cfg.n_iter = iters;
  cfg.n_burn = burn;
  cfg.thin = 2;
  return cfg;
}

Outcome c8_baseline() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng = make_substream(800, seed);
    const Dataset all = scenario_regime(200, 24, 0.2, rng);
    const auto [train, test] = split(all, 0.3, rng);
    const auto test_pts = points_of(test);
    const auto truth = responses_of(test);
    double e[2];
    int j = 0;
    for (KernelKind kind : {KernelKind::Gneiting, KernelKind::Constant}) {
      Rng chain_rng = make_substream(seed, 8 + j);
      const ChainTrace tr = run_chain(train, desk_config(30, 1500, 750), HyperPriors{}, kind, chain_rng);
      e[j++] = espe(posterior_predictive(tr, test_pts, {}, chain_rng, false), truth).mean;
    }
    if (e[0] < e[1]) ++wins;
    detail += fmt("%.2f/%.2f ", e[0], e[1]);
  }
  return {wins >= 8, fmt("stSB beats Constant DP in %d/10 runs; ESPE (stSB/DP): %s", wins, detail.c_str())};
}

Outcome c9_separability() {
  int hits = 0;
  std::string detail;
  const CovModelSpec spec = default_cov_spec(CovModel::GaussianCov);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng = make_substream(900, seed);
    const auto locs = thomas_process(10, 10, 0.1, Window{}, rng);
    const Dataset d = simulate_dataset(spec, locs, 10, rng);
    const ChainTrace tr = run_chain(d, desk_config(30, 1500, 750), HyperPriors{}, KernelKind::Gneiting, rng);
    const double pr = pr_lambda_zero(tr).pr_zero;
    if (pr > 0.5) ++hits;
    detail += fmt("%.3f ", pr);
  }
  Rng rng(999);
  const Dataset reg = scenario_regime(200, 24, 0.2, rng);
  const LambdaSummary sr = pr_lambda_zero(run_chain(reg, desk_config(30, 1500, 750), HyperPriors{},
                                                    KernelKind::Gneiting, rng));
  return {hits >= 8, fmt("Pr(lambda=0|y) > 0.5 in %d/10 runs [%s]; regime scenario Pr(lambda=0|y) = %.3f (reported)",
                         hits, detail.c_str(), sr.pr_zero)};
}

Outcome c10_cluster_curve() {
  const std::vector<std::size_t> ns{10, 100, 1000};
  bool monotone = true;
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    double at_1000[2];
    int j = 0;
    for (KernelKind kind : {KernelKind::Gneiting, KernelKind::Constant}) {
      PriorConfig cfg;
      cfg.domain = {{0, 1}, {0, 1}, 10};
      cfg.truncation = 100;
      cfg.kind = kind;
      // Same seed for both kernels: paired draws of sticks and points.
      Rng rng = make_substream(1000, seed);
      const auto curve = cluster_count_curve(cfg, ns, 20, rng);
      monotone = monotone && std::is_sorted(curve.begin(), curve.end());
      at_1000[j++] = curve.back();
    }
    if (at_1000[0] >= at_1000[1]) ++wins;
    detail += fmt("%.1f/%.1f ", at_1000[0], at_1000[1]);
  }
  return {monotone && wins >= 8,
          fmt("nondecreasing: %s; stSB >= DP at n=1000 in %d/10 seeds (%s)", monotone ? "yes" : "no", wins,
              detail.c_str())};
}

Outcome c11_gp_atoms() {
  Rng rng(1111);
  const std::vector<SpaceTimePoint> pts{{0.2, 0.3, 1}, {0.5, 0.4, 2}, {0.9, 0.1, 4}};
  const double decay = 0.3, rho = 0.5, gp_var = 1.5;
  const AtomField f = sample_atom_field(pts, 10000, decay, rho, gp_var, 0.7, rng);
  double worst = 0.0;
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      std::vector<double> xa(10000), xb(10000);
      for (int k = 0; k < 10000; ++k) {
        xa[k] = f.values(k, a);
        xb[k] = f.values(k, b);
      }
      const oracle::CovEntry c = oracle::sample_cov(xa, xb);
      worst = std::max(worst, std::abs(c.value - product_covariance(pts[a], pts[b], decay, rho, gp_var)) / c.se);
    }
  }

  Rng drng(1112);
  const Dataset d = scenario_regime(10, 6, 0.2, drng);
  McmcConfig cfg = desk_config(10, 200, 100);
  const std::vector<SpaceTimePoint> pred{{0.5, 0.5, 3}, {0.1, 0.9, 6}};
  Rng r1(5), r2(5);
  const ChainTrace t1 = run_chain_va(d, cfg, HyperPriors{}, KernelKind::Gneiting, r1, {}, pred);
  const ChainTrace t2 = run_chain_va(d, cfg, HyperPriors{}, KernelKind::Gneiting, r2, {}, pred);
  bool same = t1.records.size() == t2.records.size() && t1.pred_mean == t2.pred_mean;
  bool finite = !t1.records.empty();
  for (std::size_t i = 0; i < t1.records.size() && same; ++i) {
    const auto &a = t1.records[i], &b = t2.records[i];
    same = a.v == b.v && a.knots == b.knots && a.sigma2_eps == b.sigma2_eps && a.log_likelihood == b.log_likelihood;
  }
  for (const auto& r : t1.records) {
    finite = finite && std::isfinite(r.log_likelihood) && std::isfinite(r.sigma2_eps) && std::isfinite(r.urn_new_mass);
    for (double v : r.v) finite = finite && std::isfinite(v);
  }
  for (const auto& row : t1.pred_mean) {
    for (double v : row) finite = finite && std::isfinite(v);
  }
  return {worst < 3.0 && same && finite,
          fmt("max covariance z = %.2f over 6 entries; VA chain deterministic: %s, finite: %s", worst,
              same ? "yes" : "no", finite ? "yes" : "no")};
}

Outcome c12_thomas() {
  Rng rng(1212);
  const double omega = 10, delta = 10;
  const Window win{{0, 2}, {0, 1}};
  std::vector<double> counts;
  for (int i = 0; i < 1000; ++i) {
    counts.push_back(static_cast<double>(thomas_realization(omega, delta, 0.1, win, rng).daughters.size()));
  }
  const oracle::Moments m = oracle::moments(counts);
  const double target = omega * win.area() * delta;
  const double z = std::abs(m.mean - target) / m.se;
  return {z < 3.0, fmt("mean count %.2f vs %.0f, SE %.2f, z = %.2f", m.mean, target, m.se, z)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool cli_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto run = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--seed", "2024", "--out-dir", dir.string()});
    return run_cli(args) == 0;
  };
  {
    std::ofstream cfg(dir / "fit.cfg");
    cfg << "truncation=20\nn_iter=300\nn_burn=150\n";
  }
  const std::string cfg = (dir / "fit.cfg").string();
  bool ok = run({"simulate", "--model", "scenario41", "--n", "40", "--T", "8", "--holdout", "0.3"});
  ok = ok && run({"simulate", "--model", "1", "--locations", "thomas", "--omega", "10", "--delta", "5", "--T", "5",
                  "--out", "model1.csv"});
  ok = ok && run({"--config", cfg, "fit", "--data", (dir / "data.csv").string()});
  ok = ok && run({"--config", cfg, "fit", "--data", (dir / "data.csv").string(), "--kernel", "constant", "--trace",
                  "trace_dp.csv"});
  ok = ok && run({"--config", cfg, "fit", "--data", (dir / "model1.csv").string(), "--kernel", "separable",
                  "--trace", "trace_sep.csv"});
  ok = ok && run({"--config", cfg, "fit", "--data", (dir / "data.csv").string(), "--varying-atoms", "--predict-at",
                  (dir / "test.csv").string(), "--trace", "trace_va.csv"});
  ok = ok && run({"predict", "--trace", (dir / "trace.csv").string(), "--points", (dir / "test.csv").string(),
                  "--density-at", "0.5,0.5,3", "--grid", "40"});
  ok = ok && run({"score", "--predictions", (dir / "predictions.csv").string(), "--truth",
                  (dir / "test.csv").string(), "--window", "2"});
  ok = ok && run({"covariance", "--kernel", "gneiting", "--gamma", "0.5", "--lambda", "0.5", "--T", "8"});
  ok = ok && run({"clusters", "--ns", "10,100", "--reps", "5"});
  ok = ok && run({"weights", "--components", "1,2,3", "--grid", "8"});
  return ok;
}

Outcome c13_reproducibility() {
  const fs::path base = fs::current_path() / "acceptance_cli";
  const fs::path a = base / "run_a", b = base / "run_b";
  if (!cli_pipeline(a) || !cli_pipeline(b)) return {false, "a CLI command failed"};
  std::size_t compared = 0, differing = 0;
  std::string which;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path name = entry.path().filename();
    // Manifests record wall-clock duration; their [outputs] digests are
    // covered by comparing the files themselves.
    if (name.extension() == ".manifest") continue;
    ++compared;
    if (!fs::exists(b / name) || slurp(entry.path()) != slurp(b / name)) {
      ++differing;
      which += name.string() + " ";
    }
  }
  return {differing == 0 && compared >= 10,
          fmt("%zu output files compared, %zu differ %s", compared, differing, which.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "kernel correctness", c1_kernels},
      {2, "stick normalization", c2_normalization},
      {3, "exchangeable co-clustering oracle", c3_exchangeable},
      {4, "g-function oracle", c4_g_function},
      {5, "conditional-conjugacy oracles", c5_conjugacy},
      {6, "Geweke joint-distribution test", c6_geweke},
      {7, "parameter recovery", c7_recovery},
      {8, "internal baseline dominance", c8_baseline},
      {9, "separability test behaviour", c9_separability},
      {10, "cluster-count curve", c10_cluster_curve},
      {11, "GP-atoms sanity", c11_gp_atoms},
      {12, "Thomas process mean count", c12_thomas},
      {13, "CLI reproducibility", c13_reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s C%d %s [%.1f s] %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
