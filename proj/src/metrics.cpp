// SPDX-License-Identifier: Apache-2.0

#include "mdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mdlab::metrics {

std::vector<Eigen::Index> linear_assignment(const Mat& a) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw Error("linear_assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials u (rows), v (cols); p[j] = row matched to column j.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0), v(static_cast<std::size_t>(n + 1), 0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  std::vector<double> minv(static_cast<std::size_t>(n + 1));
  std::vector<char> used(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      Eigen::Index i0 = p[static_cast<std::size_t>(j0)], j1 = 0;
      double delta = inf;
      for (Eigen::Index j = 1; j <= n; ++j) {
        auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(p[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<Eigen::Index> col(static_cast<std::size_t>(n));
  for (Eigen::Index j = 1; j <= n; ++j) col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return col;
}

namespace {

Mat cost_matrix(const Cloud& A, const Cloud& B, int p) {
  Mat c(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    Vec d = (A.rowwise() - B.row(j)).rowwise().squaredNorm();
    c.col(j) = p == 2 ? d : Vec(d.array().sqrt());
  }
  return c;
}

// Integer multiplicities k_i with weights = k_i / N, or empty on failure.
std::vector<long> split(const Vec& w, long N) {
  std::vector<long> k(static_cast<std::size_t>(w.size()));
  long total = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double x = w[i] * static_cast<double>(N);
    long r = std::lround(x);
    if (std::abs(x - r) > 1e-9 * std::max(1.0, x)) return {};
    k[static_cast<std::size_t>(i)] = r;
    total += r;
  }
  if (total != N) return {};
  return k;
}

// Exact transportation plan for arbitrary marginals by successive shortest
// paths with Dijkstra on reduced costs. Each augmentation exhausts a supply,
// a demand or a reverse residual, so it terminates.
Mat transport_flow(const Mat& c, Vec supply, Vec demand) {
  const Eigen::Index n = c.rows(), m = c.cols();
  const double inf = std::numeric_limits<double>::infinity();
  demand *= supply.sum() / demand.sum();
  const double tiny = 1e-15;
  Mat f = Mat::Zero(n, m);
  // Nodes: sources 0..n-1, sinks n..n+m-1.
  std::vector<double> pot(static_cast<std::size_t>(n + m), 0), dist(static_cast<std::size_t>(n + m));
  std::vector<Eigen::Index> prev(static_cast<std::size_t>(n + m));
  std::vector<char> done(static_cast<std::size_t>(n + m));
  for (int guard = 0; guard < 4 * static_cast<int>((n + 1) * (m + 1)); ++guard) {
    if (supply.maxCoeff() <= tiny || demand.maxCoeff() <= tiny) break;
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (Eigen::Index i = 0; i < n; ++i)
      if (supply[i] > tiny) dist[static_cast<std::size_t>(i)] = 0;
    for (;;) {
      Eigen::Index u = -1;
      for (Eigen::Index k = 0; k < n + m; ++k) {
        auto sk = static_cast<std::size_t>(k);
        if (!done[sk] && dist[sk] < inf && (u < 0 || dist[sk] < dist[static_cast<std::size_t>(u)])) u = k;
      }
      if (u < 0) break;
      auto su = static_cast<std::size_t>(u);
      done[su] = 1;
      auto relax = [&](Eigen::Index v, double w) {
        auto sv = static_cast<std::size_t>(v);
        double nd = dist[su] + std::max(0.0, w);
        if (!done[sv] && nd < dist[sv]) {
          dist[sv] = nd;
          prev[sv] = u;
        }
      };
      if (u < n) {
        for (Eigen::Index j = 0; j < m; ++j) relax(n + j, c(u, j) + pot[su] - pot[static_cast<std::size_t>(n + j)]);
      } else {
        Eigen::Index j = u - n;
        for (Eigen::Index i = 0; i < n; ++i)
          if (f(i, j) > tiny) relax(i, -c(i, j) + pot[su] - pot[static_cast<std::size_t>(i)]);
      }
    }
    Eigen::Index sink = -1;
    for (Eigen::Index j = 0; j < m; ++j) {
      auto sj = static_cast<std::size_t>(n + j);
      if (demand[j] > tiny && dist[sj] < inf && (sink < 0 || dist[sj] < dist[static_cast<std::size_t>(n + sink)])) sink = j;
    }
    if (sink < 0) break;
    double reach = dist[static_cast<std::size_t>(n + sink)];
    for (std::size_t k = 0; k < pot.size(); ++k) pot[k] += std::min(dist[k], reach);
    // Bottleneck along the path.
    double amt = demand[sink];
    Eigen::Index v = n + sink;
    while (prev[static_cast<std::size_t>(v)] >= 0) {
      Eigen::Index u = prev[static_cast<std::size_t>(v)];
      if (u >= n) amt = std::min(amt, f(v, u - n));
      v = u;
    }
    amt = std::min(amt, supply[v]);
    supply[v] -= amt;
    demand[sink] -= amt;
    v = n + sink;
    while (prev[static_cast<std::size_t>(v)] >= 0) {
      Eigen::Index u = prev[static_cast<std::size_t>(v)];
      if (u < n)
        f(u, v - n) += amt;
      else
        f(v, u - n) -= amt;
      v = u;
    }
  }
  return f;
}

}  // namespace

double w_p(const Cloud& A, const Cloud& B, int p, TransportPlan* plan) {
  if (p != 1 && p != 2) throw Error("w_p: p must be 1 or 2");
  if (A.rows() != B.rows()) throw Error("w_p: uniform clouds must have equal size");
  if (A.cols() != B.cols()) throw Error("w_p: dimension mismatch");
  if (A.rows() > kExactCap) throw Error("w_p: cloud size exceeds the exact cap of 4096; subsample first");
  const Eigen::Index n = A.rows();
  if (n == 0) return 0.0;
  Mat c = cost_matrix(A, B, p);
  auto col = linear_assignment(c);
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) total += c(i, col[static_cast<std::size_t>(i)]);
  double mean = total / static_cast<double>(n);
  if (plan) {
    plan->assignment = col;
    plan->coupling = Mat::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) plan->coupling(i, col[static_cast<std::size_t>(i)]) = 1.0 / static_cast<double>(n);
    plan->cost = mean;
  }
  return p == 2 ? std::sqrt(mean) : mean;
}

double w_p(const FiniteMeasure& P, const FiniteMeasure& Q, int p, TransportPlan* plan) {
  P.validate();
  Q.validate();
  long start = std::max<long>(static_cast<long>(P.size()), static_cast<long>(Q.size()));
  for (long N = start; N <= kExactCap; ++N) {
    auto kp = split(P.weights, N), kq = split(Q.weights, N);
    if (kp.empty() || kq.empty()) continue;
    Cloud A(N, P.dim()), B(N, Q.dim());
    std::vector<Eigen::Index> oa, ob;
    for (Eigen::Index i = 0; i < P.size(); ++i)
      for (long r = 0; r < kp[static_cast<std::size_t>(i)]; ++r) oa.push_back(i);
    for (Eigen::Index i = 0; i < Q.size(); ++i)
      for (long r = 0; r < kq[static_cast<std::size_t>(i)]; ++r) ob.push_back(i);
    for (long r = 0; r < N; ++r) {
      A.row(r) = P.support.row(oa[static_cast<std::size_t>(r)]);
      B.row(r) = Q.support.row(ob[static_cast<std::size_t>(r)]);
    }
    TransportPlan inner;
    double w = w_p(A, B, p, &inner);
    if (plan) {
      plan->assignment = inner.assignment;
      plan->coupling = Mat::Zero(P.size(), Q.size());
      for (long r = 0; r < N; ++r)
        plan->coupling(oa[static_cast<std::size_t>(r)], ob[static_cast<std::size_t>(inner.assignment[static_cast<std::size_t>(r)])]) +=
            1.0 / static_cast<double>(N);
      plan->cost = inner.cost;
    }
    return w;
  }
  // No common grid: solve the transportation problem directly.
  if (P.size() > kExactCap || Q.size() > kExactCap) throw Error("w_p: support size exceeds the exact cap of 4096");
  if (P.dim() != Q.dim()) throw Error("w_p: dimension mismatch");
  Mat c = cost_matrix(P.support, Q.support, p);
  Mat f = transport_flow(c, P.weights, Q.weights);
  double cost = f.cwiseProduct(c).sum();
  if (plan) {
    plan->assignment.clear();
    plan->coupling = f;
    plan->cost = cost;
  }
  return p == 2 ? std::sqrt(cost) : cost;
}

double w1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("w1_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Integral of |F_a - F_b| over the merged breakpoints.
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a[0], b[0]), total = 0;
  while (i < a.size() || j < b.size()) {
    double x = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (x - prev);
    prev = x;
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
  }
  return total;
}

Cloud orbit_features(const Cloud& X, const Mat& U) {
  Mat proj = X * U;
  Cloud out(X.rows(), U.cols() + 1);
  out.leftCols(U.cols()) = proj;
  out.col(U.cols()) = (X - proj * U.transpose()).rowwise().norm();
  return out;
}

double kl_gaussian(const Vec& m1, const Mat& S1, const Vec& m2, const Mat& S2) {
  const Eigen::Index k = m1.size();
  if (m2.size() != k || S1.rows() != k || S2.rows() != k || S1.cols() != k || S2.cols() != k)
    throw Error("kl_gaussian: shape mismatch");
  if (!S1.isApprox(S1.transpose(), 1e-12) || !S2.isApprox(S2.transpose(), 1e-12))
    throw Error("kl_gaussian: covariance not symmetric");
  Eigen::LLT<Mat> l1(S1), l2(S2);
  if (l1.info() != Eigen::Success || l2.info() != Eigen::Success) throw Error("kl_gaussian: covariance not positive definite");
  double logdet1 = 2 * Mat(l1.matrixL()).diagonal().array().log().sum();
  double logdet2 = 2 * Mat(l2.matrixL()).diagonal().array().log().sum();
  Vec dm = m2 - m1;
  double tr = l2.solve(S1).trace();
  double quad = dm.dot(l2.solve(dm));
  return 0.5 * (tr + quad - static_cast<double>(k) + logdet2 - logdet1);
}

Gaussian ou_evolve(const Gaussian& g, double t) {
  auto oc = diffusion::ou_coeffs(t);
  Gaussian out;
  out.mean = oc.c * g.mean;
  out.cov = oc.c * oc.c * g.cov + oc.sigma * oc.sigma * Mat::Identity(g.cov.rows(), g.cov.cols());
  return out;
}

double gaussian_relative_fisher(const Gaussian& P, const Gaussian& Q) {
  // grad log p - grad log q = A x + b
  Mat Pi = P.cov.inverse(), Qi = Q.cov.inverse();
  Mat A = Qi - Pi;
  Vec b = Pi * P.mean - Qi * Q.mean;
  Vec mshift = A * P.mean + b;
  return (A * P.cov * A.transpose()).trace() + mshift.squaredNorm();
}

KlDissipation kl_dissipation_check(const Gaussian& P, const Gaussian& Q, double t, double dt) {
  if (!(dt > 0) || t - dt < 0) throw Error("kl_dissipation_check: need 0 < dt <= t");
  auto kl_at = [&](double s) {
    Gaussian p = ou_evolve(P, s), q = ou_evolve(Q, s);
    return kl_gaussian(p.mean, p.cov, q.mean, q.cov);
  };
  KlDissipation r;
  r.lhs = (kl_at(t + dt) - kl_at(t - dt)) / (2 * dt);
  r.fisher = gaussian_relative_fisher(ou_evolve(P, t), ou_evolve(Q, t));
  r.rhs = -2 * r.fisher;
  r.gap = r.rhs != 0 ? std::abs(r.lhs) / std::abs(r.rhs) - 1 : std::abs(r.lhs);
  return r;
}

SmlBound sml_bound_check(const FiniteMeasure& P, const FiniteMeasure& Q, double t_min, double t_max,
                         const diffusion::McConfig& mc) {
  if (!(t_min > 0) || !(t_max > t_min)) throw Error("sml_bound_check: need 0 < t_min < t_max");
  SmlBound r;
  diffusion::ExactScore sq(Q);
  r.loss = diffusion::sm_loss(sq, P, t_min, t_max, mc);
  r.w2 = w_p(P, Q, 2);
  auto a = diffusion::ou_coeffs(t_min), b = diffusion::ou_coeffs(t_max);
  double w2sq = r.w2 * r.w2;
  r.bound = w2sq * a.c * a.c / (4 * a.sigma * a.sigma);
  r.tight_bound = 0.5 * w2sq * (1 / (a.sigma * a.sigma) - 1 / (b.sigma * b.sigma));
  if (r.bound > 0) {
    r.ratio = r.loss.value / r.bound;
    r.ratio_se = r.loss.se / r.bound;
  }
  return r;
}

}  // namespace mdlab::metrics
