// SPDX-License-Identifier: Apache-2.0

#include "mdlab/concentration.hpp"
#include "mdlab/fit.hpp"

#include <doctest.h>

#include <cmath>

using namespace mdlab;
using namespace mdlab::concentration;

namespace {

geometry::EmbeddedManifold circle(int D, double r = 0.5) {
  geometry::ManifoldSpec s;
  s.kind = geometry::Kind::circle;
  s.radius = r;
  return geometry::make_manifold(s, D, 7);
}

geometry::EmbeddedManifold sphere(int D) {
  geometry::ManifoldSpec s;
  s.kind = geometry::Kind::sphere;
  s.d = 2;
  s.radius = 1;
  return geometry::make_manifold(s, D, 7);
}

FiniteMeasure two_points(int D) {
  Cloud pts = Cloud::Zero(2, D);
  pts(0, 0) = 0.5;
  pts(1, 0) = -0.5;
  return FiniteMeasure::uniform(pts);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("scalar Gaussian tail for a fixed pair") {
  const double delta = 0.05;
  Vec v(6);
  v << 0.3, -0.2, 0.1, 0.5, 0, 0.05;
  const int n = 20000;
  int out = 0;
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(1, static_cast<std::uint64_t>(i));
    out += std::abs(std_normal(rng, 6).dot(v)) > v.norm() * std::sqrt(2 * std::log(2 / delta));
  }
  double rate = static_cast<double>(out) / n;
  CHECK(rate <= delta + 3 * std::sqrt(delta * (1 - delta) / n));
}

TEST_CASE("check_inner_product_sup: violation rate and D-independence") {
  auto lo = check_inner_product_sup(circle(8), 0.05, 0.05, 2000, 3);
  auto hi = check_inner_product_sup(circle(512), 0.05, 0.05, 2000, 3);
  CHECK(lo.within_delta());
  CHECK(hi.within_delta());
  CHECK(lo.violation_rate >= 0);
  CHECK(lo.violation_rate <= 1);
  double ratio = hi.q50 / lo.q50;
  CHECK(ratio > 0.85);
  CHECK(ratio < 1 / 0.85);
  CHECK(ratio >= 0.8);
  CHECK(ratio <= 1.25);
  auto m = circle(8);
  CHECK_THROWS_AS(check_inner_product_sup(m, 2 * m.r0(), 0.05, 10, 1), Error);
}

TEST_CASE("check_tangent_projection: single-point chi-square mean and D sweep") {
  // At one point the squared projection is chi^2_d with mean d.
  auto m = sphere(16);
  Vec y = m.point(Vec::Unit(3, 0));
  Mat P = geometry::tangent_projector(m, y);
  double mean = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    Rng rng = substream(2, static_cast<std::uint64_t>(i));
    mean += (P * std_normal(rng, 16)).squaredNorm() / n;
  }
  CHECK(mean == doctest::Approx(2).epsilon(0.03));
  auto lo = check_tangent_projection(sphere(16), 0.05, 1000, 4);
  auto hi = check_tangent_projection(sphere(256), 0.05, 1000, 4);
  CHECK(lo.within_delta());
  CHECK(hi.within_delta());
  CHECK(std::abs(hi.q50 / lo.q50 - 1) < 0.15);
}

TEST_CASE("check_posterior_band: single atom and circle measure") {
  auto m = circle(8);
  auto k = constants_for(m);
  FiniteMeasure one = FiniteMeasure::uniform(m.point(Vec::Constant(1, 0.3)).transpose());
  auto r1 = check_posterior_band(one, k, -std::log(m.volume), 0.01, 0.05, 100, 1);
  CHECK(r1.violations == 0);
  auto mu = geometry::sample_measure(m, {}, 500, 5);
  auto r = check_posterior_band(mu, k, -std::log(m.volume), 0.01, 0.05, 2000, 5);
  CHECK(r.within_delta());
  // Edges -b - 3/4 q and b - 1/4 q are ordered for every q >= 0 when b >= 0.
  CHECK(r.bound >= 0);
}

TEST_CASE("check_denoiser_variance: point mass, D sweep, bound") {
  auto k = constants_for(circle(8));
  FiniteMeasure pm = FiniteMeasure::uniform(Cloud::Zero(1, 8));
  auto zero = check_denoiser_variance(pm, k, 0.05, 0.05, 200, 1);
  CHECK(zero.extra.at("mean") < 1e-20);
  std::vector<BoundReport> rs;
  for (int D : {8, 64, 512}) {
    auto m = circle(D);
    auto mu = geometry::sample_measure(m, {}, 500, 9);
    auto r = check_denoiser_variance(mu, constants_for(m), 0.05, 0.05, 2000, 9);
    CHECK(r.within_delta());
    CHECK(r.extra.at("mean") <= r.extra.at("mean_bound"));
    // Control: the noise itself grows like D.
    CHECK(r.extra.at("mean_noise_norm2") == doctest::Approx(D).epsilon(0.05));
    rs.push_back(r);
  }
  double lo = std::min({rs[0].extra["mean"], rs[1].extra["mean"], rs[2].extra["mean"]});
  double hi = std::max({rs[0].extra["mean"], rs[1].extra["mean"], rs[2].extra["mean"]});
  CHECK(hi / lo < 1.2);
  double ratio = rs[2].q50 / rs[0].q50;
  CHECK(ratio >= 0.8);
  CHECK(ratio <= 1.25);
}

TEST_CASE("check_weight_radius: single net point and circle config") {
  auto m = circle(8);
  auto k = constants_for(m);
  auto mu = geometry::sample_measure(m, {}, 500, 2);
  Cloud single = m.point(Vec::Constant(1, 0.0)).transpose();
  auto r1 = check_weight_radius(mu, single, 2 * m.spec.radius, k, 0.05, 0.05, 200, 2);
  // Gap 0: the sandwich reduces to -K <= |X0 - G|^2 <= 9 eps^2 + K.
  CHECK(r1.violations == 0);
  CHECK(r1.trials == 200);
  auto net = manifold_net(m, 0.05);
  auto r = check_weight_radius(mu, net.centers, net.epsilon, k, 0.05, 0.05, 2000, 2);
  CHECK(r.within_delta());
  // Lower edge never exceeds the upper edge: 2/3 g - K <= 9 eps^2 + 2 g + K for g >= 0.
  CHECK(r.bound >= 0);
}

TEST_CASE("check_drift_freeze: point mass, slope, continuity") {
  auto k = constants_for(circle(4));
  FiniteMeasure pm = FiniteMeasure::uniform(Cloud::Zero(1, 4));
  auto zero = check_drift_freeze(pm, k, 0.2, {1e-3, 1e-2}, 200, 1);
  for (double s : zero.statistic) CHECK(s < 1e-20);
  std::vector<double> gammas{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  auto r = check_drift_freeze(two_points(4), k, 0.2, gammas, 4000, 3);
  CHECK(r.extra.at("slope") >= 0.8);
  CHECK(r.extra.at("slope") <= 1.3);
  auto tiny = check_drift_freeze(two_points(4), k, 0.2, {1e-5, 2e-5}, 4000, 3);
  CHECK(tiny.statistic[0] < 1e-2 * r.statistic.back());
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    double b = r.extra.at("bound_gamma_" + std::to_string(g));
    if (b < 1) CHECK(r.statistic[g] <= b);
  }
}

TEST_CASE("check_surface_gp: exact flat surface, circle fit, displacement correlation") {
  geometry::ManifoldSpec ls;
  ls.kind = geometry::Kind::poly_graph;
  ls.d = 1;
  geometry::PolyTerm t;
  t.exps = {2};
  t.coef = Vec::Zero(1);
  ls.terms = {t};
  auto line = geometry::make_manifold(ls, 6, 3);
  auto lm = geometry::sample_measure(line, {}, 80, 3);
  auto lsurf = fit::fit_surface(lm.support, 1, 2);
  auto flat = check_surface_gp(lsurf, lm, constants_for(line), 0.05, 200, 3);
  CHECK(flat.q95 < 1e-10);
  auto m = circle(8);
  auto k = constants_for(m);
  std::vector<double> stat, disp;
  for (int n : {100, 200, 400, 800, 1600}) {
    auto mu = geometry::sample_measure(m, {}, n, 4);
    auto surf = fit::fit_surface(mu.support, 1, 2);
    auto r = check_surface_gp(surf, mu, k, 0.05, 500, 4);
    CHECK(r.within_delta());
    stat.push_back(r.q50);
    disp.push_back(r.extra.at("max_displacement"));
  }
  CHECK(pearson(stat, disp) > 0.5);
}

TEST_CASE("reports are reproducible bit for bit") {
  auto m = circle(16);
  auto a = check_inner_product_sup(m, 0.05, 0.05, 64, 11);
  auto b = check_inner_product_sup(m, 0.05, 0.05, 64, 11);
  CHECK(a.statistic == b.statistic);
  CHECK(a.excess == b.excess);
  auto mu = geometry::sample_measure(m, {}, 100, 1);
  auto c1 = check_denoiser_variance(mu, constants_for(m), 0.05, 0.05, 64, 2);
  auto c2 = check_denoiser_variance(mu, constants_for(m), 0.05, 0.05, 64, 2);
  CHECK(c1.statistic == c2.statistic);
}
