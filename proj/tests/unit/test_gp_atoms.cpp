#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "oracles.hpp"
#include "stsb/gp_atoms.hpp"
#include "stsb/random.hpp"

using namespace stsb;

namespace {

std::vector<SpaceTimePoint> random_points(Rng& rng, std::size_t n, int t_max) {
  std::vector<SpaceTimePoint> pts;
  for (std::size_t i = 0; i < n; ++i) {
    pts.push_back({rnd::uniform(rng), rnd::uniform(rng), 1 + static_cast<int>(rnd::uniform(rng, 0, t_max))});
  }
  return pts;
}

Dataset small_dataset(Rng& rng, std::size_t n) {
  Dataset d;
  for (const auto& p : random_points(rng, n, 3)) d.observations.push_back({p, rnd::normal(rng, p.s1 * 2, 0.3), {}});
  d.domain = SpaceTimeDomain{{0, 1}, {0, 1}, 3};
  return d;
}

}  // namespace

TEST_CASE("product covariance values") {
  const SpaceTimePoint p{0.2, 0.3, 4};
  CHECK(product_covariance(p, p, 0.3, 0.5, 2.0) == 2.0);
  CHECK(product_covariance(p, {0.2, 0.3, 5}, 0.3, 0.0, 2.0) == 0.0);
  CHECK(product_covariance(p, {0.2, 0.3, 6}, 0.3, 0.5, 2.0) == doctest::Approx(0.5));
  CHECK(product_covariance(p, {0.5, 0.7, 4}, 0.5, 0.5, 1.0) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("product covariance is symmetric positive semidefinite") {
  Rng rng(1);
  for (int rep = 0; rep < 10; ++rep) {
    const auto pts = random_points(rng, 40, 6);
    const Eigen::MatrixXd k = product_covariance_matrix(pts, 0.3, 0.7, 1.5);
    CHECK((k - k.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * 1.5);
  }
}

TEST_CASE("atom field draws") {
  Rng rng(2);
  const SpaceTimePoint one[] = {{0.5, 0.5, 1}};
  const AtomField f1 = sample_atom_field(one, 10000, 0.3, 0.5, 2.0, 1.0, rng);
  std::vector<double> col(f1.values.col(0).data(), f1.values.col(0).data() + 10000);
  const auto m = oracle::moments(col);
  CHECK(m.var == doctest::Approx(2.0).epsilon(0.05));
  CHECK(std::abs(m.mean - 1.0) < 4 * m.se);

  const SpaceTimePoint twin[] = {{0.5, 0.5, 1}, {0.5, 0.5, 1}};
  const AtomField f2 = sample_atom_field(twin, 100, 0.3, 0.5, 2.0, 0.0, rng);
  CHECK((f2.values.col(0) - f2.values.col(1)).cwiseAbs().maxCoeff() < 1e-3);

  CHECK_THROWS_AS(sample_atom_field(one, 1, 0.3, 1.0, 1.0, 0.0, rng), Error);
}

TEST_CASE("empirical field covariance matches the kernel") {
  Rng rng(3);
  const SpaceTimePoint pts[] = {{0.2, 0.2, 1}, {0.3, 0.25, 2}, {0.6, 0.1, 2}};
  const std::size_t n = 10000;
  const AtomField f = sample_atom_field(pts, n, 0.3, 0.6, 1.3, 0.0, rng);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      std::vector<double> a(n), b(n);
      for (std::size_t k = 0; k < n; ++k) {
        a[k] = f.values(static_cast<Eigen::Index>(k), i);
        b[k] = f.values(static_cast<Eigen::Index>(k), j);
      }
      const auto c = oracle::sample_cov(a, b);
      CHECK(std::abs(c.value - product_covariance(pts[i], pts[j], 0.3, 0.6, 1.3)) < 3 * c.se);
    }
  }
}

TEST_CASE("posterior moments match the information-form algebra") {
  Rng rng(4);
  const auto pts = random_points(rng, 3, 3);
  const Eigen::MatrixXd k = product_covariance_matrix(pts, 0.4, 0.5, 1.2);
  const std::size_t obs[] = {0, 2};
  const double res[] = {0.7, -0.4};
  const double noise = 0.3, mu0 = 0.1;
  const AtomPosterior post = atom_posterior_moments(k, mu0, obs, res, noise);

  // (K^-1 + H' H / noise)^-1 and the matching mean.
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2, 3);
  h(0, 0) = 1;
  h(1, 2) = 1;
  const Eigen::MatrixXd kinv = k.inverse();
  const Eigen::MatrixXd cov = (kinv + h.transpose() * h / noise).inverse();
  Eigen::Vector2d r(res[0], res[1]);
  const Eigen::VectorXd mean = cov * (kinv * Eigen::VectorXd::Constant(3, mu0) + h.transpose() * r / noise);
  CHECK((post.mean - mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((post.cov - cov).cwiseAbs().maxCoeff() < 1e-8);

  // Flat prior: the mean at a lone observed point is its residual.
  const SpaceTimePoint lone[] = {{0.5, 0.5, 1}};
  const Eigen::MatrixXd wide = product_covariance_matrix(lone, 0.4, 0.5, 1e10);
  const std::size_t i0[] = {0};
  const double r0[] = {2.5};
  CHECK(atom_posterior_moments(wide, 0.0, i0, r0, 1.0).mean[0] == doctest::Approx(2.5).epsilon(1e-8));
}

TEST_CASE("field update draws from the conditional") {
  Rng rng(5);
  const auto pts = random_points(rng, 3, 3);
  const Eigen::MatrixXd k = product_covariance_matrix(pts, 0.4, 0.5, 1.0);
  const Eigen::MatrixXd l = k.llt().matrixL();
  const int alloc[] = {0, 0};  // first two points observed, third unobserved
  const double res[] = {1.0, -0.5};

  for (double noise : {0.2, 1e12}) {
    AtomField field;
    field.points = pts;
    field.values = Eigen::MatrixXd::Zero(1, 3);
    field.base_mean = 0.3;
    const std::size_t obs[] = {0, 1};
    const AtomPosterior post = atom_posterior_moments(k, 0.3, obs, res, noise);
    const std::size_t n = 20000;
    std::vector<std::vector<double>> draws(3);
    for (std::size_t it = 0; it < n; ++it) {
      update_atom_field(field, k, l, alloc, res, noise, rng);
      for (int j = 0; j < 3; ++j) draws[j].push_back(field.values(0, j));
    }
    for (int i = 0; i < 3; ++i) {
      const auto m = oracle::moments(draws[i]);
      CHECK(std::abs(m.mean - post.mean[i]) < 4 * m.se);
      for (int j = 0; j <= i; ++j) {
        const auto c = oracle::sample_cov(draws[i], draws[j]);
        CHECK(std::abs(c.value - post.cov(i, j)) < 4 * c.se);
      }
    }
  }
}

TEST_CASE("base marginal density is a normal convolution") {
  for (double y : {-3.0, 0.0, 0.4, 5.0}) {
    const double exact = std::exp(oracle::normal_log_density(y, 0.5, 2.0 + 0.3));
    CHECK(base_marginal_density(y, 0.5, 2.0, 0.3) == doctest::Approx(exact).epsilon(1e-10));
  }
}

TEST_CASE("varying-atoms chains") {
  Rng data_rng(6);
  const Dataset d = small_dataset(data_rng, 25);
  McmcConfig cfg;
  cfg.truncation = 8;
  cfg.n_iter = 60;
  cfg.n_burn = 20;
  const SpaceTimePoint targets[] = {{0.5, 0.5, 2}, {0.1, 0.9, 3}};
  Rng r1(7), r2(7);
  const ChainTrace t1 = run_chain_va(d, cfg, HyperPriors{}, KernelKind::Gneiting, r1, {}, targets);
  const ChainTrace t2 = run_chain_va(d, cfg, HyperPriors{}, KernelKind::Gneiting, r2, {}, targets);
  CHECK(t1.varying_atoms);
  REQUIRE(t1.records.size() == 40);
  for (std::size_t i = 0; i < t1.records.size(); ++i) {
    CHECK(t1.records[i].v == t2.records[i].v);
    CHECK(t1.pred_draw[i] == t2.pred_draw[i]);
    CHECK(t1.records[i].occupied > 0);
    CHECK(std::isfinite(t1.records[i].log_likelihood));
    CHECK(std::isfinite(t1.records[i].urn_new_mass));
    for (double v : t1.pred_mean[i]) CHECK(std::isfinite(v));
    for (double v : t1.pred_var[i]) CHECK(v > 0.0);
  }

  cfg.va_size_guard = 10;
  try {
    run_chain_va(d, cfg, HyperPriors{}, KernelKind::Gneiting, r1, {}, targets);
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SizeGuardExceeded);
  }
  cfg.va_subsample = 0.2;
  CHECK_NOTHROW(run_chain_va(d, cfg, HyperPriors{}, KernelKind::Gneiting, r1, {}, targets));
}
