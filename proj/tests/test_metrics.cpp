// SPDX-License-Identifier: Apache-2.0

#include "mdlab/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace mdlab;
using namespace mdlab::metrics;

namespace {

Cloud random_cloud(int n, int D, Rng& rng) {
  Cloud X(n, D);
  for (int i = 0; i < n; ++i) X.row(i) = std_normal(rng, D).transpose();
  return X;
}

double brute_force_wp(const Cloud& A, const Cloud& B, int p) {
  std::vector<int> perm(static_cast<std::size_t>(A.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double c = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) c += std::pow((A.row(static_cast<Eigen::Index>(i)) - B.row(perm[i])).norm(), p);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  best /= static_cast<double>(A.rows());
  return p == 2 ? std::sqrt(best) : best;
}

// Gauss-Hermite nodes and weights for the weight exp(-x^2 / 2), normalized
// to a probability measure (Golub-Welsch on the Hermite Jacobi matrix).
std::pair<Vec, Vec> gauss_hermite(int n) {
  Mat J = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  Vec w = es.eigenvectors().row(0).transpose().array().square();
  return {es.eigenvalues(), w};
}

double log_normal_pdf(const Vec& x, const Vec& m, const Mat& S) {
  Eigen::LLT<Mat> llt(S);
  Vec r = llt.matrixL().solve(x - m);
  double logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * r.squaredNorm() - 0.5 * logdet - 0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi);
}

}  // namespace

TEST_CASE("w_p: identical clouds and unit displacement") {
  Rng rng = substream(1, 0);
  Cloud A = random_cloud(10, 3, rng);
  CHECK(w_p(A, A, 1) == 0);
  CHECK(w_p(A, A, 2) == 0);
  Cloud o = Cloud::Zero(1, 3), e = Cloud::Zero(1, 3);
  e(0, 0) = 1;
  CHECK(w_p(o, e, 1) == doctest::Approx(1));
  CHECK(w_p(o, e, 2) == doctest::Approx(1));
}

TEST_CASE("w_p: n=6 matches brute force over all 720 permutations") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = substream(seed, 1);
    Cloud A = random_cloud(6, 3, rng), B = random_cloud(6, 3, rng);
    for (int p : {1, 2}) {
      TransportPlan plan;
      double w = w_p(A, B, p, &plan);
      CHECK(w == doctest::Approx(brute_force_wp(A, B, p)).epsilon(1e-12));
      CHECK(plan.coupling.rowwise().sum().isApprox(Vec::Constant(6, 1.0 / 6), 1e-10));
      CHECK(plan.coupling.colwise().sum().transpose().isApprox(Vec::Constant(6, 1.0 / 6), 1e-10));
    }
  }
}

TEST_CASE("w_p: weighted measures by mass splitting") {
  Cloud a(2, 1), b(1, 1);
  a << 0, 1;
  b << 0;
  FiniteMeasure P{a, Vec(2)}, Q = FiniteMeasure::uniform(b);
  P.weights << 0.25, 0.75;
  TransportPlan plan;
  CHECK(w_p(P, Q, 1, &plan) == doctest::Approx(0.75));
  CHECK(w_p(P, Q, 2) == doctest::Approx(std::sqrt(0.75)));
  CHECK(plan.coupling.rowwise().sum().isApprox(P.weights, 1e-10));
  CHECK(std::abs(plan.coupling.sum() - 1) < 1e-10);
}

// Quantile-coupling oracle on the line: W_p^p = int_0^1 |F^-1(u) - G^-1(u)|^p du.
double quantile_wp_1d(const FiniteMeasure& P, const FiniteMeasure& Q, int p) {
  auto sorted = [](const FiniteMeasure& M) {
    std::vector<std::pair<double, double>> v;
    for (Eigen::Index i = 0; i < M.size(); ++i) v.emplace_back(M.support(i, 0), M.weights[i]);
    std::sort(v.begin(), v.end());
    return v;
  };
  auto a = sorted(P), b = sorted(Q);
  std::size_t i = 0, j = 0;
  double ra = a[0].second, rb = b[0].second, total = 0;
  while (i < a.size() && j < b.size()) {
    double m = std::min(ra, rb);
    total += m * std::pow(std::abs(a[i].first - b[j].first), p);
    ra -= m;
    rb -= m;
    if (ra <= 1e-15 && ++i < a.size()) ra = a[i].second;
    if (rb <= 1e-15 && ++j < b.size()) rb = b[j].second;
  }
  return total;
}

TEST_CASE("w_p: arbitrary weights against the quantile coupling on the line") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = substream(seed, 9);
    auto make = [&](int k) {
      FiniteMeasure M{Cloud(k, 1), Vec(k)};
      for (int i = 0; i < k; ++i) {
        M.support(i, 0) = std_normal(rng, 1)[0];
        M.weights[i] = 0.1 + uniform01(rng);
      }
      M.weights /= M.weights.sum();
      return M;
    };
    auto P = make(5), Q = make(4);
    for (int p : {1, 2}) {
      TransportPlan plan;
      double w = w_p(P, Q, p, &plan);
      double want = quantile_wp_1d(P, Q, p);
      CHECK(std::pow(w, p) == doctest::Approx(want).epsilon(1e-9));
      CHECK(plan.coupling.rowwise().sum().isApprox(P.weights, 1e-10));
      CHECK(plan.coupling.colwise().sum().transpose().isApprox(Q.weights, 1e-10));
      CHECK(plan.coupling.minCoeff() >= 0);
    }
  }
}

TEST_CASE("w_p: size cap") {
  Cloud big = Cloud::Zero(kExactCap + 1, 1);
  CHECK_THROWS_AS(w_p(big, big, 1), Error);
}

TEST_CASE("w_p: symmetry and triangle inequality (property)") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = substream(seed, 2);
    int n = 4 + static_cast<int>(seed * 3 % 60);
    Cloud A = random_cloud(n, 2, rng), B = random_cloud(n, 2, rng), C = random_cloud(n, 2, rng);
    for (int p : {1, 2}) {
      double ab = w_p(A, B, p), ba = w_p(B, A, p), bc = w_p(B, C, p), ac = w_p(A, C, p);
      CHECK(std::abs(ab - ba) < 1e-9);
      CHECK(ac <= ab + bc + 1e-9);
    }
  }
}

TEST_CASE("w1_1d: sorted coupling") {
  CHECK(w1_1d({0, 1, 2}, {1, 2, 3}) == doctest::Approx(1));
  Rng rng = substream(3, 3);
  Cloud A = random_cloud(30, 1, rng), B = random_cloud(30, 1, rng);
  std::vector<double> a(A.data(), A.data() + 30), b(B.data(), B.data() + 30);
  CHECK(w1_1d(a, b) == doctest::Approx(w_p(A, B, 1)).epsilon(1e-12));
}

TEST_CASE("orbit_features: invariance under rotations fixing the frame") {
  Rng rng = substream(4, 4);
  Mat U = Mat::Zero(5, 1);
  U(0, 0) = 1;
  Cloud X = random_cloud(20, 5, rng);
  Mat R = Mat::Identity(5, 5);
  double th = 0.7;
  R(1, 1) = R(2, 2) = std::cos(th);
  R(1, 2) = -std::sin(th);
  R(2, 1) = std::sin(th);
  Cloud Y = X * R.transpose();
  CHECK((orbit_features(X, U) - orbit_features(Y, U)).norm() < 1e-12);
}

TEST_CASE("kl_gaussian: closed cases and quadrature oracle") {
  Vec m = Vec::Zero(2);
  Mat S = Mat::Identity(2, 2);
  CHECK(kl_gaussian(m, S, m, S) == doctest::Approx(0).epsilon(1e-15));
  CHECK(kl_gaussian(Vec::Zero(1), Mat::Identity(1, 1), Vec::Ones(1), Mat::Identity(1, 1)) == doctest::Approx(0.5));
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1;
  CHECK_THROWS_AS(kl_gaussian(m, bad, m, S), Error);
  auto [x, w] = gauss_hermite(12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng = substream(seed, 5);
    Mat A(3, 3), B(3, 3);
    for (int i = 0; i < 9; ++i) {
      A.data()[i] = std_normal(rng, 1)[0];
      B.data()[i] = std_normal(rng, 1)[0];
    }
    Mat S1 = A * A.transpose() + 0.5 * Mat::Identity(3, 3), S2 = B * B.transpose() + 0.5 * Mat::Identity(3, 3);
    Vec m1 = std_normal(rng, 3), m2 = std_normal(rng, 3);
    Mat L = S1.llt().matrixL();
    double q = 0;
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        for (int k = 0; k < 12; ++k) {
          Vec z(3);
          z << x[i], x[j], x[k];
          Vec pt = m1 + L * z;
          q += w[i] * w[j] * w[k] * (log_normal_pdf(pt, m1, S1) - log_normal_pdf(pt, m2, S2));
        }
    CHECK(std::abs(kl_gaussian(m1, S1, m2, S2) - q) < 1e-6);
  }
}

TEST_CASE("ou_evolve and relative Fisher information in closed form") {
  Gaussian g{Vec::Ones(2), 2 * Mat::Identity(2, 2)};
  auto e = ou_evolve(g, 0.5);
  double c = std::exp(-0.5);
  CHECK((e.mean - c * g.mean).norm() < 1e-15);
  CHECK(e.cov(0, 0) == doctest::Approx(c * c * 2 + 1 - c * c));
  Gaussian p{Vec::Zero(1), Mat::Identity(1, 1)}, q{Vec::Ones(1), Mat::Identity(1, 1)};
  CHECK(gaussian_relative_fisher(p, q) == doctest::Approx(1));
  CHECK(gaussian_relative_fisher(p, p) == 0);
}

TEST_CASE("kl_dissipation_check: equal laws, 1-D shift, mixing") {
  Gaussian p{Vec::Zero(1), Mat::Identity(1, 1)}, q{Vec::Ones(1), Mat::Identity(1, 1)};
  auto same = kl_dissipation_check(p, p, 0.5, 1e-4);
  CHECK(same.lhs == doctest::Approx(0).epsilon(1e-12));
  CHECK(same.rhs == 0);
  auto r = kl_dissipation_check(p, q, 0.5, 1e-4);
  // Oracle: unit variances stay 1 under OU, KL(t) = e^{-2t} / 2, so dKL/dt = -e^{-2t}.
  CHECK(r.lhs == doctest::Approx(-std::exp(-1.0)).epsilon(1e-7));
  CHECK(r.fisher == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(r.rhs == doctest::Approx(-2 * std::exp(-1.0)).epsilon(1e-12));
  auto late = kl_dissipation_check(p, q, 12, 1e-3);
  CHECK(std::abs(late.lhs) < 1e-10);
  CHECK(std::abs(late.rhs) < 1e-10);
}

TEST_CASE("kl_dissipation_check: dKL/dt equals minus the relative Fisher information (property)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = substream(seed, 6);
    Mat A(3, 3), B(3, 3);
    for (int i = 0; i < 9; ++i) {
      A.data()[i] = 0.5 * std_normal(rng, 1)[0];
      B.data()[i] = 0.5 * std_normal(rng, 1)[0];
    }
    Gaussian p{std_normal(rng, 3), A * A.transpose() + 0.2 * Mat::Identity(3, 3)};
    Gaussian q{std_normal(rng, 3), B * B.transpose() + 0.2 * Mat::Identity(3, 3)};
    for (double t : {0.1, 0.5, 1.0, 2.0}) {
      auto r = kl_dissipation_check(p, q, t, 1e-4);
      CHECK(r.lhs <= 0);
      CHECK(std::abs(r.lhs + r.fisher) <= 1e-5 * r.fisher + 1e-12);
    }
  }
}

TEST_CASE("sml_bound_check: equal measures and the point-mass pair") {
  Cloud a = Cloud::Zero(1, 2);
  FiniteMeasure P = FiniteMeasure::uniform(a);
  diffusion::McConfig mc;
  mc.trials = 16;
  auto same = sml_bound_check(P, P, 0.1, 0.15, mc);
  CHECK(same.loss.value == 0);
  CHECK(same.bound == 0);
  const double eps = 0.5;
  Cloud b = Cloud::Zero(1, 2);
  b(0, 0) = eps;
  FiniteMeasure Q = FiniteMeasure::uniform(b);
  auto r = sml_bound_check(P, Q, 0.1, 0.15, mc);
  auto lo = diffusion::ou_coeffs(0.1), hi = diffusion::ou_coeffs(0.15);
  double closed = 0.5 * eps * eps * (1 / (lo.sigma * lo.sigma) - 1 / (hi.sigma * hi.sigma));
  CHECK(r.loss.value == doctest::Approx(closed).epsilon(1e-3));
  CHECK(r.bound == doctest::Approx(eps * eps * lo.c * lo.c / (4 * lo.sigma * lo.sigma)));
  CHECK(r.ratio >= 0.4);
  CHECK(r.ratio <= 1.0);
}

TEST_CASE("sml_bound_check: random 3-point pair in D=4") {
  Rng rng = substream(7, 7);
  for (int rep = 0; rep < 3; ++rep) {
    FiniteMeasure P = FiniteMeasure::uniform(0.5 * random_cloud(3, 4, rng));
    FiniteMeasure Q = FiniteMeasure::uniform(0.5 * random_cloud(3, 4, rng));
    diffusion::McConfig mc;
    mc.trials = 128;
    mc.seed = 10 + static_cast<std::uint64_t>(rep);
    auto r = sml_bound_check(P, Q, 0.1, 0.15, mc);
    CHECK(r.ratio <= 1 + 3 * r.ratio_se);
    CHECK(r.loss.value > 0);
  }
}
