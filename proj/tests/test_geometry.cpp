// SPDX-License-Identifier: Apache-2.0

#include "mdlab/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace mdlab;
using namespace mdlab::geometry;

namespace {

EmbeddedManifold circle(double r, int D, bool identity = false, std::uint64_t seed = 3) {
  ManifoldSpec s;
  s.kind = Kind::circle;
  s.radius = r;
  s.identity_frame = identity;
  return make_manifold(s, D, seed);
}

EmbeddedManifold sphere(int d, double r, int D, std::uint64_t seed = 3) {
  ManifoldSpec s;
  s.kind = Kind::sphere;
  s.d = d;
  s.radius = r;
  return make_manifold(s, D, seed);
}

EmbeddedManifold parabola(int D, std::uint64_t seed = 3) {
  ManifoldSpec s;
  s.kind = Kind::poly_graph;
  s.d = 1;
  s.codim = 1;
  s.chart_radius = 0.3;
  PolyTerm t;
  t.exps = {2};
  t.coef = Vec::Ones(1);
  s.terms = {t};
  return make_manifold(s, D, seed);
}

}  // namespace

TEST_CASE("make_manifold: unit circle in the plane with identity frame") {
  auto m = circle(1.0, 2, true);
  CHECK(m.tau == doctest::Approx(1.0));
  CHECK((m.frame - Mat::Identity(2, 2)).norm() < 1e-15);
  Vec p(1);
  p << 0.3;
  Vec y = m.point(p);
  CHECK(y[0] == doctest::Approx(std::cos(0.3)));
  CHECK(y[1] == doctest::Approx(std::sin(0.3)));
  CHECK(m.volume == doctest::Approx(2 * std::numbers::pi));
}

TEST_CASE("make_manifold: sphere reach equals radius regardless of D") {
  for (int D : {3, 64}) {
    auto m = sphere(2, 1.0, D);
    CHECK(m.tau == doctest::Approx(1.0));
    CHECK((m.frame.transpose() * m.frame - Mat::Identity(3, 3)).norm() < 1e-12);
  }
}

TEST_CASE("make_manifold: parabola reach from a dense curvature scan") {
  auto m = parabola(8);
  // Curvature of z -> (z, z^2) is 2 / (1 + 4 z^2)^(3/2), maximal at z = 0.
  double kmax = 0;
  for (int i = 0; i <= 200000; ++i) {
    double z = -0.3 + 0.6 * i / 200000.0;
    kmax = std::max(kmax, 2 / std::pow(1 + 4 * z * z, 1.5));
  }
  CHECK(m.tau == doctest::Approx(1 / (2 * kmax)).epsilon(1e-6));
  CHECK(m.tau > 0);
}

TEST_CASE("make_manifold: D below model dimension is rejected") {
  CHECK_THROWS_AS(circle(1.0, 1), Error);
  CHECK_THROWS_AS(sphere(2, 1.0, 2), Error);
}

TEST_CASE("sample_measure: uniform circle moments") {
  auto m = circle(1.0, 2, true);
  auto mu = sample_measure(m, {}, 400000, 11);
  Vec mean = mu.support.colwise().mean();
  CHECK(mean.norm() < 5e-3);
  for (int j = 0; j < 2; ++j) {
    double var = (mu.support.col(j).array() - mean[j]).square().mean();
    CHECK(var == doctest::Approx(0.5).epsilon(0.02));
  }
}

TEST_CASE("sample_measure: single point lies on the manifold") {
  auto m = sphere(2, 0.7, 10);
  auto mu = sample_measure(m, {}, 1, 5);
  CHECK(mu.size() == 1);
  CHECK(m.distance(mu.support.row(0).transpose()) < 1e-10);
}

TEST_CASE("sample_measure: cosine density matches its inverse-CDF histogram") {
  auto m = circle(1.0, 2, true);
  DensitySpec dens;
  dens.kind = DensitySpec::Kind::cosine;
  dens.amplitude = 0.9;
  const int n = 40000, bins = 20;
  auto mu = sample_measure(m, dens, n, 21);
  // Bin edges at equal probability under F(a) = (a + 0.9 sin a) / (2 pi) on [0, 2 pi).
  auto F = [](double a) { return (a + 0.9 * std::sin(a)) / (2 * std::numbers::pi); };
  std::vector<double> edges{0};
  for (int b = 1; b < bins; ++b) {
    double lo = 0, hi = 2 * std::numbers::pi, target = static_cast<double>(b) / bins;
    for (int it = 0; it < 100; ++it) {
      double mid = 0.5 * (lo + hi);
      (F(mid) < target ? lo : hi) = mid;
    }
    edges.push_back(lo);
  }
  edges.push_back(2 * std::numbers::pi);
  std::vector<int> counts(bins, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double a = std::atan2(mu.support(i, 1), mu.support(i, 0));
    if (a < 0) a += 2 * std::numbers::pi;
    int b = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), a) - edges.begin()) - 1;
    ++counts[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))];
  }
  double chi2 = 0, expect = static_cast<double>(n) / bins;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 99th percentile of chi^2 with 19 degrees of freedom.
  CHECK(chi2 < 36.19);
}

TEST_CASE("eps_net: identical points collapse to one center") {
  Cloud pts = Cloud::Ones(3, 4);
  auto net = eps_net(pts, 0.1);
  CHECK(net.centers.rows() == 1);
}

TEST_CASE("eps_net: equispaced circle points") {
  const int n = 100;
  Cloud pts(n, 2);
  for (int i = 0; i < n; ++i) pts.row(i) << std::cos(2 * std::numbers::pi * i / n), std::sin(2 * std::numbers::pi * i / n);
  auto net = eps_net(pts, 0.5);
  CHECK(net.centers.rows() >= 13);
  CHECK(net.centers.rows() <= 26);
  CHECK(is_dense(net, pts));
  CHECK(is_sparse(net));
}

TEST_CASE("eps_net: predicates hold on random clouds (property)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = substream(seed, 0);
    Cloud pts(60, 3);
    for (int i = 0; i < 60; ++i) pts.row(i) = std_normal(rng, 3).transpose();
    double eps = 0.2 + uniform01(rng);
    auto net = eps_net(pts, eps);
    // Brute-force checks of both predicates.
    for (int i = 0; i < 60; ++i) {
      double best = 1e300;
      for (Eigen::Index j = 0; j < net.centers.rows(); ++j) best = std::min(best, (pts.row(i) - net.centers.row(j)).norm());
      CHECK(best <= eps);
    }
    for (Eigen::Index a = 0; a < net.centers.rows(); ++a)
      for (Eigen::Index b = a + 1; b < net.centers.rows(); ++b) CHECK((net.centers.row(a) - net.centers.row(b)).norm() > eps / 2);
  }
}

TEST_CASE("tangent_projector: circle at (1, 0)") {
  auto m = circle(1.0, 2, true);
  Vec y(2);
  y << 1, 0;
  Mat P = tangent_projector(m, y);
  Mat expect(2, 2);
  expect << 0, 0, 0, 1;
  CHECK((P - expect).norm() < 1e-12);
}

TEST_CASE("tangent_projector: sphere north pole kills the radial direction") {
  auto m = sphere(2, 1.0, 3);
  Vec y = m.embed(Vec::Unit(3, 2));
  Mat P = tangent_projector(m, y);
  Eigen::SelfAdjointEigenSolver<Mat> es(P);
  CHECK(es.eigenvalues()[0] == doctest::Approx(0).epsilon(1e-12));
  CHECK((P * y).norm() < 1e-12);
  CHECK(P.trace() == doctest::Approx(2));
}

TEST_CASE("tangent_projector: parabola against finite-difference tangent") {
  auto m = parabola(8);
  for (double z0 : {-0.2, 0.05, 0.17}) {
    Vec z(1);
    z << z0;
    Vec y = m.point(z);
    Mat P = tangent_projector(m, y);
    CHECK((P * P - P).norm() < 1e-12);
    CHECK((P - P.transpose()).norm() < 1e-12);
    CHECK(P.trace() == doctest::Approx(1));
    const double h = 1e-6;
    Vec zp = z, zm = z;
    zp[0] += h;
    zm[0] -= h;
    Vec tv = (m.point(zp) - m.point(zm)) / (2 * h);
    CHECK((P * tv - tv).norm() < 1e-6 * tv.norm());
  }
}

TEST_CASE("tangent_projector: off-manifold point throws") {
  auto m = circle(1.0, 4);
  Vec y = Vec::Zero(4);
  CHECK_THROWS_AS(tangent_projector(m, y), Error);
}

TEST_CASE("chart: bi-Lipschitz bounds for |z| <= tau / 8 (property)") {
  std::vector<EmbeddedManifold> ms{circle(0.5, 6), sphere(2, 1.0, 9), parabola(5)};
  for (const auto& m : ms) {
    Rng rng = substream(42, static_cast<std::uint64_t>(m.D));
    for (int k = 0; k < 50; ++k) {
      Vec param;
      if (m.spec.kind == Kind::circle) param = Vec::Constant(1, 2 * std::numbers::pi * uniform01(rng));
      else if (m.spec.kind == Kind::sphere) param = std_normal(rng, m.d + 1);
      else param = Vec::Constant(1, 0.2 * (2 * uniform01(rng) - 1));
      Vec y = m.point(param);
      Vec z = std_normal(rng, m.d);
      z *= (m.tau / 8) * uniform01(rng) / z.norm();
      double len = (m.chart(y, z) - y).norm();
      CHECK(len >= z.norm() * (1 - 1e-12));
      CHECK(len <= 2 * z.norm());
    }
  }
}

TEST_CASE("ball volume sandwich on the sphere (Monte Carlo)") {
  auto m = sphere(2, 1.0, 3);
  const double eps = 0.9 * m.r0();
  const int n = 400000;
  auto mu = sample_measure(m, {}, n, 9);
  Vec y = m.point(Vec::Unit(3, 0));
  int hit = 0;
  for (int i = 0; i < n; ++i) hit += (mu.support.row(i).transpose() - y).norm() < eps;
  const double vol = m.volume * hit / n;
  const double cd = unit_ball_volume(2) * eps * eps;
  CHECK(vol >= cd / 4);
  CHECK(vol <= 4 * cd);
}

TEST_CASE("complexity_constant satisfies its defining inequalities") {
  for (const auto& m : {circle(0.5, 8), sphere(2, 2.0, 8), parabola(4)}) {
    auto [pmin, pmax] = density_bounds(m, {});
    double C = complexity_constant(m, pmin, pmax);
    CHECK(C > m.d);
    CHECK(C >= 4);
    CHECK(C > -std::log(pmin));
    CHECK(C > std::log(pmax));
    CHECK(C > std::log(std::max(1.0, std::log(m.volume))));
    CHECK(C > -std::log(std::min(m.tau, 1 / m.L_M)));
    CHECK(pmin <= pmax);
    CHECK(pmin > 0);
  }
}
