#include <cmath>
#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "stsb/random.hpp"
#include "stsb/stickbreak.hpp"

using namespace stsb;

namespace {

StickState constant_state(std::vector<double> v) {
  StickState st;
  st.kind = KernelKind::Constant;
  st.v = std::move(v);
  st.knots.assign(st.v.size(), Knot{});
  return st;
}

StickState random_gneiting(Rng& rng, std::size_t m) {
  PriorConfig cfg;
  cfg.domain = {{0, 1}, {0, 1}, 10};
  cfg.truncation = m;
  cfg.a = rnd::uniform(rng, 0.2, 5);
  cfg.b = rnd::uniform(rng, 0.2, 5);
  cfg.shape.gamma = rnd::uniform(rng, 0, 3);
  cfg.shape.lambda = rnd::uniform(rng, 0, 1);
  return sample_prior(cfg, rng).sticks;
}

// Exchangeable co-clustering sum over k of E[V^2] (1 - 2E[V] + E[V^2])^(k-1),
// evaluated in closed form.
double exchangeable_oracle(double a, double b) {
  const double ev = a / (a + b);
  const double ev2 = a * (a + 1) / ((a + b) * (a + b + 1));
  return ev2 / (1.0 - (1.0 - 2.0 * ev + ev2));
}

}  // namespace

TEST_CASE("textbook stick-breaking") {
  const Weights w = compute_weights(constant_state({0.5, 0.5, 0.5}), {0, 0, 1});
  CHECK(w.pi[0] == 0.5);
  CHECK(w.pi[1] == 0.25);
  CHECK(w.pi[2] == 0.125);
  CHECK(w.remainder == 0.125);
}

TEST_CASE("vanishing kernel breaks nothing") {
  StickState st;
  st.kind = KernelKind::Gneiting;
  st.v = {0.9, 0.9};
  st.knots = {{50, 50, 1}, {60, 60, 1}};
  const Weights w = compute_weights(st, {0, 0, 1});
  CHECK(w.pi[0] < 1e-200);
  CHECK(w.remainder == doctest::Approx(1.0));
}

TEST_CASE("first weight equals its stick at its own knot") {
  Rng rng(3);
  StickState st = random_gneiting(rng, 5);
  const Knot k = st.knots[0];
  st.knots[0].zeta = 4.0;
  const Weights w = compute_weights(st, {k.psi1, k.psi2, 4});
  CHECK(w.pi[0] == st.v[0]);
}

TEST_CASE("normalization on random states") {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const StickState st = random_gneiting(rng, 30);
    const SpaceTimePoint p{rnd::uniform(rng), rnd::uniform(rng), 1 + static_cast<int>(rnd::uniform(rng, 0, 10))};
    const Weights w = compute_weights(st, p);
    const double total = std::accumulate(w.pi.begin(), w.pi.end(), w.remainder);
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("weights are continuous in space") {
  Rng rng(5);
  const StickState st = random_gneiting(rng, 10);
  const Weights base = compute_weights(st, {0.4, 0.4, 3});
  double prev = INFINITY;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const Weights w = compute_weights(st, {0.4 + eps, 0.4 - eps, 3});
    double diff = 0.0;
    for (std::size_t k = 0; k < w.pi.size(); ++k) diff = std::max(diff, std::abs(w.pi[k] - base.pi[k]));
    CHECK(diff <= prev);
    prev = diff;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("prior draws") {
  PriorConfig cfg;
  cfg.domain = {{-1, 2}, {3, 4}, 5};
  cfg.truncation = 50;
  Rng r1(9), r2(9);
  const PriorDraw d1 = sample_prior(cfg, r1), d2 = sample_prior(cfg, r2);
  CHECK(d1.sticks.v == d2.sticks.v);
  CHECK(d1.atoms == d2.atoms);

  Rng rng(10);
  double sum = 0.0;
  std::size_t count = 0;
  cfg.truncation = 100;
  for (int rep = 0; rep < 1000; ++rep) {
    const PriorDraw d = sample_prior(cfg, rng);
    for (std::size_t k = 0; k < d.sticks.size(); ++k) {
      sum += d.sticks.v[k];
      ++count;
      const Knot& kn = d.sticks.knots[k];
      CHECK(cfg.domain.s1.contains(kn.psi1));
      CHECK(cfg.domain.s2.contains(kn.psi2));
      CHECK((kn.zeta >= 1.0 && kn.zeta <= 5.0));
    }
  }
  CHECK(sum / static_cast<double>(count) == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("conditional co-clustering") {
  const StickState st = constant_state({0.5, 0.3, 0.8});
  const Weights w = compute_weights(st, {0, 0, 1});
  const double direct = w.pi[0] * w.pi[0] + w.pi[1] * w.pi[1] + w.pi[2] * w.pi[2];
  CHECK(cond_coclustering(st, {0, 0, 1}, {0, 0, 1}).probability == doctest::Approx(direct).epsilon(1e-14));

  const StickState near_one = constant_state({1.0 - 1e-9, 0.5});
  CHECK(cond_coclustering(near_one, {0, 0, 1}, {0, 0, 1}).probability == doctest::Approx(1.0));
}

TEST_CASE("conditional co-clustering against paired categorical draws") {
  Rng rng(21);
  const StickState st = random_gneiting(rng, 8);
  const SpaceTimePoint p{0.3, 0.3, 2}, q{0.5, 0.4, 4};
  const Weights wp = compute_weights(st, p), wq = compute_weights(st, q);
  // Remainder mass goes to a category that never matches.
  std::vector<double> cp = wp.pi, cq = wq.pi;
  cp.push_back(wp.remainder);
  cq.push_back(wq.remainder);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const int a = rnd::categorical(cp, rnd::uniform(rng));
    const int b = rnd::categorical(cq, rnd::uniform(rng));
    if (a == b && a < 8) ++hits;
  }
  const double rate = static_cast<double>(hits) / n;
  const double se = std::sqrt(rate * (1 - rate) / n);
  CHECK(std::abs(rate - cond_coclustering(st, p, q).probability) < 3 * se);
}

TEST_CASE("co-clustering satisfies Cauchy-Schwarz") {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    const StickState st = random_gneiting(rng, 20);
    const SpaceTimePoint p{rnd::uniform(rng), rnd::uniform(rng), 1 + i % 10};
    const SpaceTimePoint q{rnd::uniform(rng), rnd::uniform(rng), 1 + (i * 7) % 10};
    const double pq = cond_coclustering(st, p, q).probability;
    const double pp = cond_coclustering(st, p, p).probability;
    const double qq = cond_coclustering(st, q, q).probability;
    CHECK(pq <= std::sqrt(pp * qq) + 1e-15);
  }
}

TEST_CASE("closed-form co-clustering") {
  CHECK(coclustering_closed_form(1, 1, 1) == doctest::Approx(0.5));
  CHECK(coclustering_closed_form(1, 9, 1) == doctest::Approx(0.1));
  CHECK(coclustering_closed_form(1, 1, 0) == 0.0);
  for (auto [a, b] : {std::pair{1.0, 1.0}, {1.0, 9.0}, {2.0, 5.0}, {0.3, 7.0}}) {
    CHECK(coclustering_closed_form(a, b, 1) == doctest::Approx(exchangeable_oracle(a, b)).epsilon(1e-12));
    CHECK(coclustering_closed_form(a, b, 1) == doctest::Approx((a + 1) / (a + 2 * b + 1)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(coclustering_closed_form(1, 1, 1.5), Error);
}

TEST_CASE("exchangeable marginal co-clustering") {
  PriorConfig cfg;
  cfg.kind = KernelKind::Constant;
  Rng rng(31);
  cfg.a = 1;
  cfg.b = 1;
  const McEstimate e11 = marginal_coclustering_mc(cfg, {0.1, 0.1, 1}, {0.9, 0.9, 1}, 20000, rng);
  CHECK(std::abs(e11.estimate - 0.5) < 0.01);
  cfg.b = 9;
  const McEstimate e19 = marginal_coclustering_mc(cfg, {0.1, 0.1, 1}, {0.1, 0.1, 1}, 20000, rng);
  CHECK(std::abs(e19.estimate - 0.1) < 0.01);
  // Independent of the pair of points.
  const McEstimate far = marginal_coclustering_mc(cfg, {0.0, 0.0, 1}, {1.0, 1.0, 1}, 20000, rng);
  CHECK(std::abs(far.estimate - e19.estimate) < 3 * std::hypot(far.std_error, e19.std_error));
}

TEST_CASE("kernel decay lowers co-clustering") {
  PriorConfig cfg;
  cfg.kind = KernelKind::Gneiting;
  cfg.domain = {{0, 1}, {0, 1}, 5};
  cfg.shape.gamma = 1;
  Rng rng(32);
  const McEstimate same = marginal_coclustering_mc(cfg, {0.5, 0.5, 3}, {0.5, 0.5, 3}, 5000, rng);
  const McEstimate far = marginal_coclustering_mc(cfg, {0.0, 0.0, 3}, {1.0, 1.0, 3}, 5000, rng);
  CHECK(far.estimate < same.estimate);
}

TEST_CASE("cluster counts") {
  PriorConfig cfg;
  cfg.domain = {{0, 1}, {0, 1}, 10};
  cfg.truncation = 50;
  Rng rng(41);
  CHECK(expected_cluster_count(cfg, 1, 20, rng) == 1.0);
  const std::size_t ns[] = {10, 100, 1000};
  const std::vector<double> curve = cluster_count_curve(cfg, ns, 5, rng);
  CHECK(curve[0] <= curve[1]);
  CHECK(curve[1] <= curve[2]);
}

TEST_CASE("weight maps") {
  Rng rng(51);
  StickState st = random_gneiting(rng, 6);
  st.knots[0] = {0.5, 0.5, 1.0};
  st.v[0] = 0.9;
  const SpaceTimeDomain dom{{0, 1}, {0, 1}, 1};
  const auto grid = spatial_grid(dom, 11, 11, 1);
  const std::size_t comps[] = {0, 1};
  const WeightMap map = weight_map(st, grid, comps);
  REQUIRE(map.values.size() == grid.size() * 2);
  std::size_t arg = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (map.at(i, 0) > map.at(arg, 0)) arg = i;
    CHECK(std::abs(map.row_sums[i] + map.remainders[i] - 1.0) <= 1e-12);
  }
  CHECK(grid[arg].s1 == doctest::Approx(0.5));
  CHECK(grid[arg].s2 == doctest::Approx(0.5));

  const SpaceTimePoint single[] = {{0.2, 0.7, 1}};
  const WeightMap one = weight_map(st, single, comps);
  const Weights w = compute_weights(st, single[0]);
  CHECK(one.at(0, 0) == w.pi[0]);
  CHECK(one.at(0, 1) == w.pi[1]);
}
