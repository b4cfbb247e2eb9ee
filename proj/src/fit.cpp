// SPDX-License-Identifier: Apache-2.0

#include "mdlab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdlab::fit {

namespace {

// |S| x d Jacobian of z -> z^S.
Mat monomial_jacobian(const MultiIndexSet& S, const Vec& z) {
  Mat J = Mat::Zero(static_cast<Eigen::Index>(S.size()), S.d);
  for (std::size_t s = 0; s < S.size(); ++s) {
    const auto& e = S.items[s];
    for (int a = 0; a < S.d; ++a) {
      if (e[static_cast<std::size_t>(a)] == 0) continue;
      double v = e[static_cast<std::size_t>(a)];
      for (int j = 0; j < S.d; ++j) {
        int p = e[static_cast<std::size_t>(j)] - (j == a ? 1 : 0);
        v *= std::pow(z[j], p);
      }
      J(static_cast<Eigen::Index>(s), a) = v;
    }
  }
  return J;
}

Mat monomial_matrix(const MultiIndexSet& S, const Mat& Z) {
  Mat M(Z.rows(), static_cast<Eigen::Index>(S.size()));
  for (Eigen::Index i = 0; i < Z.rows(); ++i) M.row(i) = monomials(S, Z.row(i).transpose()).transpose();
  return M;
}

// Nearest matrix with orthonormal columns.
Mat polar(const Mat& X) {
  Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

void clip_columns(Mat& A, double bound) {
  for (Eigen::Index s = 0; s < A.cols(); ++s) {
    double n = A.col(s).norm();
    if (n > bound) A.col(s) *= bound / n;
  }
}

struct Solution {
  Mat P, A;
  double obj = 0;
  int iters = 0;
  bool converged = false;
  std::vector<double> trace;
};

// Coefficient step: least squares per multi-index with column norm bound,
// columns kept in the orthogonal complement of Im P.
Mat a_step(const Mat& W, const Mat& P, const MultiIndexSet& S, double bound, const Mat& A_prev) {
  const Eigen::Index h = W.cols();
  if (S.size() == 0) return Mat(h, 0);
  Mat Z = W * P;
  Mat R = W - Z * P.transpose();  // rows (I - P P^T) w
  Mat M = monomial_matrix(S, Z);
  Mat A = M.completeOrthogonalDecomposition().solve(R).transpose();
  A -= P * (P.transpose() * A);
  bool feasible = true;
  for (Eigen::Index s = 0; s < A.cols(); ++s) feasible = feasible && A.col(s).norm() <= bound;
  if (feasible) return A;
  // Projected gradient on the convex subproblem, started from the feasible
  // previous iterate.
  Mat MtM = M.transpose() * M;
  Mat RtM = R.transpose() * M;
  double L = 2 * Eigen::SelfAdjointEigenSolver<Mat>(MtM, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  Mat X = A_prev - P * (P.transpose() * A_prev);
  clip_columns(X, bound);
  for (int it = 0; it < 2000; ++it) {
    Mat G = 2 * (X * MtM - RtM);
    Mat Xn = X - G / L;
    Xn -= P * (P.transpose() * Xn);
    clip_columns(Xn, bound);
    double delta = (Xn - X).norm();
    X = std::move(Xn);
    if (delta < 1e-15 * (1 + X.norm())) break;
  }
  return X;
}

// Euclidean gradient of the objective in P with A fixed.
Mat p_gradient(const Mat& W, const Mat& P, const Mat& A, const MultiIndexSet& S) {
  Mat G = Mat::Zero(P.rows(), P.cols());
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    Vec v = W.row(i).transpose();
    Vec z = P.transpose() * v;
    Vec r = v - P * z;
    Vec inner = Vec::Zero(P.cols());
    if (S.size() > 0) {
      r -= A * monomials(S, z);
      inner += monomial_jacobian(S, z).transpose() * (A.transpose() * r);
    }
    inner += P.transpose() * r;
    G -= 2 * (r * z.transpose() + v * inner.transpose());
  }
  return G;
}

Solution solve(const Mat& W, int d, const MultiIndexSet& S, double eps, const SolverConfig& cfg) {
  const double bound = 1.0 / eps;
  const Eigen::Index h = W.cols();
  Solution sol;
  // Top-d principal directions of the (uncentered) differences.
  Eigen::JacobiSVD<Mat> svd(W, Eigen::ComputeThinV);
  sol.P = svd.matrixV().leftCols(d);
  sol.A = Mat::Zero(h, static_cast<Eigen::Index>(S.size()));
  sol.A = a_step(W, sol.P, S, bound, sol.A);
  sol.obj = chart_objective(W, sol.P, sol.A, S);
  sol.trace.push_back(sol.obj);
  double scale = W.squaredNorm();
  double eta = scale > 0 ? 0.25 / scale : 1.0;
  for (int it = 0; it < cfg.max_iter; ++it) {
    double before = sol.obj;
    // Frame step: gradient move followed by polar retraction, with backtracking.
    Mat G = p_gradient(W, sol.P, sol.A, S);
    if (G.norm() > 0) {
      for (int bt = 0; bt < 40; ++bt) {
        Mat Pn = polar(sol.P - eta * G);
        Mat An = sol.A - Pn * (Pn.transpose() * sol.A);
        clip_columns(An, bound);
        double on = chart_objective(W, Pn, An, S);
        if (on < sol.obj) {
          sol.P = std::move(Pn);
          sol.A = std::move(An);
          sol.obj = on;
          eta *= 2;
          break;
        }
        eta *= 0.5;
      }
    }
    Mat An = a_step(W, sol.P, S, bound, sol.A);
    double on = chart_objective(W, sol.P, An, S);
    if (on <= sol.obj) {
      sol.A = std::move(An);
      sol.obj = on;
    }
    sol.trace.push_back(sol.obj);
    sol.iters = it + 1;
    if (sol.obj > before * (1 + 1e-12) + 1e-300) throw Error("chart solver: objective increased");
    if (before - sol.obj <= cfg.rel_tol * std::max(before, 1e-300) || sol.obj == 0) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

LocalPolyChart finish(const Mat& H, const Solution& sol, const MultiIndexSet& S, double eps, const Vec& base,
                      Eigen::Index D) {
  LocalPolyChart c;
  c.base = base.size() == D ? base : Vec(Vec::Zero(D));
  c.P = H * sol.P;
  c.coeffs = H * sol.A;
  c.S = S;
  c.eps_n = eps;
  c.H = H;
  c.objective = sol.obj;
  c.iterations = sol.iters;
  c.converged = sol.converged;
  c.trace = sol.trace;
  return c;
}

void check_fit_args(const Cloud& V, int d, double eps) {
  if (d < 1) throw Error("fit: d must be >= 1");
  if (!(eps > 0)) throw Error("fit: eps_n must be positive");
  if (V.rows() < d + 1) throw Error("fit: need at least d+1 neighbor differences, got " + std::to_string(V.rows()));
}

}  // namespace

MultiIndexSet multi_indices(int d, double beta) {
  if (d < 1) throw Error("multi_indices: d must be >= 1");
  MultiIndexSet S;
  S.d = d;
  int top = static_cast<int>(std::ceil(beta)) - 1;
  for (int k = 2; k <= top; ++k) {
    // Exponent tuples with sum k, lexicographically descending.
    MultiIndex e(static_cast<std::size_t>(d), 0);
    e[0] = k;
    while (true) {
      S.items.push_back(e);
      // Next tuple in descending lex order.
      int j = d - 2;
      while (j >= 0 && e[static_cast<std::size_t>(j)] == 0) --j;
      if (j < 0) break;
      int tail = e[static_cast<std::size_t>(d - 1)];
      e[static_cast<std::size_t>(d - 1)] = 0;
      e[static_cast<std::size_t>(j)] -= 1;
      e[static_cast<std::size_t>(j + 1)] = tail + 1;
    }
  }
  return S;
}

Vec monomials(const MultiIndexSet& S, const Vec& z) {
  Vec m(static_cast<Eigen::Index>(S.size()));
  for (std::size_t s = 0; s < S.size(); ++s) {
    double v = 1;
    for (int j = 0; j < S.d; ++j) v *= std::pow(z[j], S.items[s][static_cast<std::size_t>(j)]);
    m[static_cast<Eigen::Index>(s)] = v;
  }
  return m;
}

Cloud neighbor_set(const Cloud& points, Eigen::Index i, double eps) {
  if (!(eps > 0)) throw Error("neighbor_set: eps must be positive");
  std::vector<Eigen::Index> idx;
  const double e2 = eps * eps;
  for (Eigen::Index j = 0; j < points.rows(); ++j)
    if (j != i && (points.row(j) - points.row(i)).squaredNorm() <= e2) idx.push_back(j);
  Cloud V(static_cast<Eigen::Index>(idx.size()), points.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) V.row(static_cast<Eigen::Index>(k)) = points.row(idx[k]) - points.row(i);
  return V;
}

Mat span_basis(const Cloud& V, double rel_tol) {
  if (V.rows() == 0) return Mat(V.cols(), 0);
  Eigen::JacobiSVD<Mat> svd(V, Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  Eigen::Index r = 0;
  double smax = sv.size() ? sv[0] : 0.0;
  while (r < sv.size() && sv[r] > rel_tol * smax && sv[r] > 0) ++r;
  return svd.matrixV().leftCols(r);
}

double chart_objective(const Cloud& V, const Mat& P, const Mat& coeffs, const MultiIndexSet& S) {
  Mat Z = V * P;
  Mat R = V - Z * P.transpose();
  if (S.size() > 0) R -= monomial_matrix(S, Z) * coeffs.transpose();
  return R.squaredNorm();
}

LocalPolyChart fit_local_chart(const Cloud& V, int d, double beta, double eps_n, const SolverConfig& cfg,
                               const Vec& base) {
  check_fit_args(V, d, eps_n);
  MultiIndexSet S = multi_indices(d, beta);
  Mat H = span_basis(V);
  if (H.cols() < d) {
    // Degenerate neighborhood: pad with a deterministic orthonormal completion.
    Mat G(V.cols(), V.cols());
    G << H, Mat::Identity(V.cols(), V.cols() - H.cols());
    Eigen::HouseholderQR<Mat> qr(G);
    Mat Q = qr.householderQ() * Mat::Identity(V.cols(), d);
    Q.leftCols(H.cols()) = H;
    H = Q;
  }
  Mat W = V * H;
  Solution sol = solve(W, d, S, eps_n, cfg);
  return finish(H, sol, S, eps_n, base, V.cols());
}

LocalPolyChart fit_local_chart_full(const Cloud& V, int d, double beta, double eps_n, const SolverConfig& cfg,
                                    const Vec& base) {
  check_fit_args(V, d, eps_n);
  MultiIndexSet S = multi_indices(d, beta);
  Mat I = Mat::Identity(V.cols(), V.cols());
  Solution sol = solve(V, d, S, eps_n, cfg);
  return finish(I, sol, S, eps_n, base, V.cols());
}

Vec eval_chart(const LocalPolyChart& chart, const Vec& z) {
  if (z.size() != chart.P.cols()) throw Error("eval_chart: coordinate dimension mismatch");
  if (z.norm() > chart.eps_n * (1 + 1e-12)) throw Error("eval_chart: ||z|| exceeds the chart radius");
  Vec y = chart.base + chart.P * z;
  if (chart.S.size() > 0) y += chart.coeffs * monomials(chart.S, z);
  return y;
}

double eps_n(double C, Eigen::Index n, int d) {
  if (n < 2) throw Error("eps_n: need n >= 2");
  return std::pow(C * std::log(static_cast<double>(n)) / static_cast<double>(n - 1), 1.0 / d);
}

double pilot_constant(const Cloud& points, int d, int target) {
  const Eigen::Index n = points.rows();
  if (n < target + 1) throw Error("pilot_constant: fewer points than the neighbor target");
  std::vector<double> kth(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = (points.row(i) - points.row(j)).norm();
    dist[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
    std::nth_element(dist.begin(), dist.begin() + (target - 1), dist.end());
    kth[static_cast<std::size_t>(i)] = dist[static_cast<std::size_t>(target - 1)];
  }
  // Point i has >= target neighbors iff eps >= kth[i]; the median count
  // reaches target once eps covers the upper half of these radii.
  std::sort(kth.begin(), kth.end());
  double eps = kth[static_cast<std::size_t>(n / 2)];
  return std::pow(eps, d) * static_cast<double>(n - 1) / std::log(static_cast<double>(n));
}

double coverage_constant(const Cloud& points, int d, int k) {
  const Eigen::Index n = points.rows();
  if (n < k + 1) throw Error("coverage_constant: fewer points than the neighbor count");
  double eps = 0;
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = (points.row(i) - points.row(j)).norm();
    dist[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
    std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
    eps = std::max(eps, dist[static_cast<std::size_t>(k - 1)]);
  }
  return std::pow(eps, d) * static_cast<double>(n - 1) / std::log(static_cast<double>(n));
}

double rate_constant(const Cloud& pilot, int d, double safety) {
  return safety * std::max(pilot_constant(pilot, d, 2 * (d + 1)), coverage_constant(pilot, d, d + 1));
}

Cloud deduplicate(const Cloud& points) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < points.cols(); ++k)
      if (points(a, k) != points(b, k)) return points(a, k) < points(b, k);
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<bool> keep(order.size(), true);
  for (std::size_t k = 1; k < order.size(); ++k)
    if (points.row(order[k]) == points.row(order[k - 1])) keep[static_cast<std::size_t>(order[k])] = false;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if (keep[static_cast<std::size_t>(i)]) kept.push_back(i);
  Cloud out(static_cast<Eigen::Index>(kept.size()), points.cols());
  for (std::size_t k = 0; k < kept.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = points.row(kept[k]);
  return out;
}

PiecewiseSurface fit_surface(const Cloud& raw, int d, double beta, const EpsConfig& eps_cfg, const SolverConfig& cfg) {
  Cloud points = deduplicate(raw);
  if (points.rows() < d + 2) throw Error("fit_surface: need at least d+2 distinct points");
  double C = eps_cfg.C;
  if (C <= 0) {
    int target = eps_cfg.pilot_target > 0 ? eps_cfg.pilot_target : 2 * (d + 1);
    C = pilot_constant(points, d, std::min<int>(target, static_cast<int>(points.rows()) - 1));
    // Every point also gets a chart.
    C = std::max(C, coverage_constant(points, d, d + 1));
  }
  PiecewiseSurface s;
  s.d = d;
  s.eps_n = eps_n(C, points.rows(), d);
  s.charts.resize(static_cast<std::size_t>(points.rows()));
  std::vector<char> ok(static_cast<std::size_t>(points.rows()), 0);
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    Cloud V = neighbor_set(points, i, s.eps_n);
    if (V.rows() < d + 1) continue;
    s.charts[static_cast<std::size_t>(i)] = fit_local_chart(V, d, beta, s.eps_n, cfg, points.row(i).transpose());
    ok[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<LocalPolyChart> kept;
  for (std::size_t i = 0; i < ok.size(); ++i)
    if (ok[i]) kept.push_back(std::move(s.charts[i]));
  if (kept.empty()) throw Error("fit_surface: every neighborhood is too sparse");
  s.charts = std::move(kept);
  return s;
}

namespace {

std::vector<Vec> ball_grid(int d, double radius, int per_eps) {
  std::vector<Vec> zs;
  int per = 2 * per_eps + 1;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    Vec z(d);
    for (int a = 0; a < d; ++a) z[a] = -radius + 2 * radius * idx[static_cast<std::size_t>(a)] / (per - 1);
    if (z.norm() <= radius) zs.push_back(z);
    int a = 0;
    while (a < d && ++idx[static_cast<std::size_t>(a)] == per) idx[static_cast<std::size_t>(a++)] = 0;
    if (a == d) break;
  }
  return zs;
}

}  // namespace

Cloud surface_cloud(const PiecewiseSurface& s, int per_eps) {
  auto zs = ball_grid(s.d, s.eps_n, per_eps);
  Cloud out(static_cast<Eigen::Index>(zs.size() * s.charts.size()), s.charts.front().base.size());
  Eigen::Index r = 0;
  for (const auto& c : s.charts)
    for (const auto& z : zs) out.row(r++) = eval_chart(c, z).transpose();
  return out;
}

namespace {

// Directed sup_a min_b ||a - b|| with pruning along the first coordinate.
double directed(const Cloud& A, const Cloud& B) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(B.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return B(a, 0) < B(b, 0); });
  std::vector<double> key(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) key[k] = B(order[k], 0);
  double worst = 0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double a0 = A(i, 0);
    auto mid = static_cast<std::ptrdiff_t>(std::lower_bound(key.begin(), key.end(), a0) - key.begin());
    double best2 = std::numeric_limits<double>::infinity();
    for (std::ptrdiff_t k = mid; k < static_cast<std::ptrdiff_t>(key.size()); ++k) {
      double g = key[static_cast<std::size_t>(k)] - a0;
      if (g * g >= best2) break;
      best2 = std::min(best2, (A.row(i) - B.row(order[static_cast<std::size_t>(k)])).squaredNorm());
    }
    for (std::ptrdiff_t k = mid - 1; k >= 0; --k) {
      double g = a0 - key[static_cast<std::size_t>(k)];
      if (g * g >= best2) break;
      best2 = std::min(best2, (A.row(i) - B.row(order[static_cast<std::size_t>(k)])).squaredNorm());
    }
    worst = std::max(worst, std::sqrt(best2));
  }
  return worst;
}

}  // namespace

double hausdorff(const Cloud& A, const Cloud& B) {
  if (A.rows() == 0 || B.rows() == 0) throw Error("hausdorff: empty input");
  if (A.cols() != B.cols()) throw Error("hausdorff: dimension mismatch");
  return std::max(directed(A, B), directed(B, A));
}

double distance_to_chart(const LocalPolyChart& chart, const Vec& y) {
  const double R = chart.eps_n;
  auto clamp = [&](Vec z) {
    double n = z.norm();
    return n > R ? Vec(z * (R / n)) : z;
  };
  Vec z = clamp(chart.P.transpose() * (y - chart.base));
  Vec r = eval_chart(chart, z) - y;
  double cost = r.squaredNorm();
  double lambda = 1e-9;
  for (int it = 0; it < 100; ++it) {
    Mat J = chart.P;
    if (chart.S.size() > 0) J += chart.coeffs * monomial_jacobian(chart.S, z);
    Mat A = J.transpose() * J;
    A.diagonal().array() += lambda;
    Vec step = A.ldlt().solve(-J.transpose() * r);
    Vec zn = clamp(z + step);
    Vec rn = eval_chart(chart, zn) - y;
    double cn = rn.squaredNorm();
    if (cn < cost) {
      bool small = cost - cn < 1e-32 || step.norm() < 1e-16;
      z = zn;
      r = rn;
      cost = cn;
      lambda = std::max(lambda * 0.3, 1e-15);
      if (small) break;
    } else {
      lambda *= 10;
      if (lambda > 1e12) break;
    }
  }
  return std::sqrt(cost);
}

double hausdorff_to_manifold(const PiecewiseSurface& s, const geometry::EmbeddedManifold& m, double h, int per_eps) {
  // Surface side: every charted grid point against the analytic manifold.
  Cloud sc = surface_cloud(s, per_eps);
  double sup_surface = 0;
  for (Eigen::Index i = 0; i < sc.rows(); ++i) sup_surface = std::max(sup_surface, m.distance(sc.row(i).transpose()));
  // Manifold side: exact distance to charts whose base is close enough to matter.
  Cloud mg = m.grid(h);
  Cloud bases(static_cast<Eigen::Index>(s.charts.size()), m.D);
  double reach = 0;
  for (std::size_t c = 0; c < s.charts.size(); ++c) {
    bases.row(static_cast<Eigen::Index>(c)) = s.charts[c].base.transpose();
    double ext = s.charts[c].P.norm() * s.eps_n;
    if (s.charts[c].S.size() > 0) ext += s.charts[c].coeffs.colwise().norm().sum() * std::pow(s.eps_n, 2);
    reach = std::max(reach, ext);
  }
  double sup_manifold = 0;
#pragma omp parallel for reduction(max : sup_manifold) schedule(static)
  for (Eigen::Index i = 0; i < mg.rows(); ++i) {
    Vec y = mg.row(i).transpose();
    Vec bd = (bases.rowwise() - y.transpose()).rowwise().norm();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(bd.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return bd[a] < bd[b]; });
    double best = std::numeric_limits<double>::infinity();
    for (auto c : order) {
      // Chart c lies within ball(base, reach); it cannot beat `best` beyond that.
      if (bd[c] - reach >= best) break;
      best = std::min(best, distance_to_chart(s.charts[static_cast<std::size_t>(c)], y));
    }
    sup_manifold = std::max(sup_manifold, best);
  }
  return std::max(sup_surface, sup_manifold);
}

double tangent_angle(const LocalPolyChart& chart, const geometry::EmbeddedManifold& m) {
  double dist = 0;
  Vec p = m.project(chart.base, &dist);
  if (dist > 1e-6) throw Error("tangent_angle: chart base is off the manifold (distance " + std::to_string(dist) + ")");
  Mat diff = chart.P * chart.P.transpose() - geometry::tangent_projector(m, p);
  Eigen::SelfAdjointEigenSolver<Mat> es(diff, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double rho(double x) {
  double a = std::abs(x);
  if (a <= 0.5) return 1.0;
  if (a <= 1.0) return 2.0 - 2.0 * a;
  return 0.0;
}

Pushforward pushforward_surface_measure(const FiniteMeasure& mu, const PiecewiseSurface& s) {
  Pushforward out;
  out.measure.weights = mu.weights;
  out.measure.support.resize(mu.size(), mu.dim());
  std::vector<Eigen::Index> uncovered;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    Vec y = mu.support.row(i).transpose();
    int best = -1;
    double best_rho = 0, best_dist = 0;
    for (std::size_t c = 0; c < s.charts.size(); ++c) {
      double dist = (y - s.charts[c].base).norm();
      double r = rho(dist / s.eps_n);
      if (r > best_rho || (r == best_rho && r > 0 && dist < best_dist)) {
        best = static_cast<int>(c);
        best_rho = r;
        best_dist = dist;
      }
    }
    if (best < 0) {
      uncovered.push_back(i);
      continue;
    }
    const auto& c = s.charts[static_cast<std::size_t>(best)];
    Vec z = c.P.transpose() * (y - c.base);
    if (z.norm() > c.eps_n) z *= c.eps_n / z.norm();
    Vec img = eval_chart(c, z);
    out.measure.support.row(i) = img.transpose();
    out.displacement.push_back((img - y).norm());
    out.chart_of.push_back(best);
  }
  if (!uncovered.empty()) {
    std::string msg = "pushforward: uncovered support points:";
    for (auto i : uncovered) msg += " " + std::to_string(i);
    throw Error(msg);
  }
  return out;
}

}  // namespace mdlab::fit
