// SPDX-License-Identifier: Apache-2.0
//
// Local polynomial manifold estimation from point samples.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/geometry.hpp"

#include <vector>

namespace mdlab::fit {

using MultiIndex = std::vector<int>;

/// Multi-indices with 2 <= |S| <= ceil(beta) - 1 in graded lexicographic order.
struct MultiIndexSet {
  int d = 0;
  std::vector<MultiIndex> items;
  std::size_t size() const { return items.size(); }
};

MultiIndexSet multi_indices(int d, double beta);

/// Row vector of z^S over the set.
Vec monomials(const MultiIndexSet& S, const Vec& z);

/// Differences y_j - y_i with ||y_j - y_i|| <= eps (closed ball), j != i.
Cloud neighbor_set(const Cloud& points, Eigen::Index i, double eps);

/// Orthonormal D x r basis of the row span of V; singular values below
/// rel_tol times the largest are dropped.
Mat span_basis(const Cloud& V, double rel_tol = 1e-10);

struct SolverConfig {
  int max_iter = 200;
  double rel_tol = 1e-9;
};

struct LocalPolyChart {
  Vec base;
  Mat P;       // D x d, orthonormal columns
  Mat coeffs;  // D x |S|, column s is a_S
  MultiIndexSet S;
  double eps_n = 0;
  Mat H;  // orthonormal basis of span V_i
  double objective = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after every iteration
};

/// Fit inside H_i = span V_i and lift back to R^D.
LocalPolyChart fit_local_chart(const Cloud& V, int d, double beta, double eps_n, const SolverConfig& cfg = {},
                               const Vec& base = Vec());

/// Same program solved directly in R^D, without the span reduction.
LocalPolyChart fit_local_chart_full(const Cloud& V, int d, double beta, double eps_n, const SolverConfig& cfg = {},
                                    const Vec& base = Vec());

/// Objective sum_v ||v - P P^T v - sum_S a_S (P^T v)^S||^2.
double chart_objective(const Cloud& V, const Mat& P, const Mat& coeffs, const MultiIndexSet& S);

/// y_i + P z + sum_S a_S z^S. Throws when ||z|| exceeds the chart radius eps_n.
Vec eval_chart(const LocalPolyChart& chart, const Vec& z);

struct PiecewiseSurface {
  std::vector<LocalPolyChart> charts;
  double eps_n = 0;
  int d = 0;
  double chart_radius() const { return eps_n; }
};

/// (C log n / (n - 1))^(1/d)
double eps_n(double C, Eigen::Index n, int d);

/// Smallest C for which the median neighbor count reaches `target`.
double pilot_constant(const Cloud& points, int d, int target);

/// Smallest C for which every point has at least k neighbors.
double coverage_constant(const Cloud& points, int d, int k);

/// Constant for rate studies, held fixed across n: `safety` times the larger of
/// the pilot constant (median |V| >= 2(d+1)) and the coverage constant (every
/// point has d+1 neighbors) of a pilot sample. Without the coverage term,
/// uncharted sampling gaps of width ~eps_n dominate the Hausdorff error.
double rate_constant(const Cloud& pilot, int d, double safety = 1.5);

struct EpsConfig {
  /// Constant of the eps_n rule; <= 0 means the larger of the pilot constant
  /// and the coverage constant for d+1 neighbors.
  double C = 0;
  /// Pilot target for the median |V_i|; <= 0 means 2(d+1).
  int pilot_target = 0;
};

/// Remove exact duplicate rows, keeping first occurrences.
Cloud deduplicate(const Cloud& points);

PiecewiseSurface fit_surface(const Cloud& points, int d, double beta, const EpsConfig& eps_cfg = {},
                             const SolverConfig& cfg = {});

/// Charts evaluated on a grid of `per_eps` points per eps_n per dimension.
Cloud surface_cloud(const PiecewiseSurface& s, int per_eps = 20);

/// Symmetric Hausdorff distance between two clouds.
double hausdorff(const Cloud& A, const Cloud& B);

/// Distance from y to the image of the chart over its radius.
double distance_to_chart(const LocalPolyChart& chart, const Vec& y);

/// Hausdorff distance between a fitted surface and the analytic manifold,
/// using exact point-to-set distances on both sides. `h` is the sampling
/// step of the manifold grid.
double hausdorff_to_manifold(const PiecewiseSurface& s, const geometry::EmbeddedManifold& m, double h,
                             int per_eps = 20);

/// ||P* P*^T - pi_y||_op at the chart base.
double tangent_angle(const LocalPolyChart& chart, const geometry::EmbeddedManifold& m);

/// rho(x) = 1 on |x| <= 1/2, 2 - 2|x| on [1/2, 1], 0 beyond.
double rho(double x);

struct Pushforward {
  FiniteMeasure measure;
  std::vector<double> displacement;
  std::vector<int> chart_of;
};

/// Move every support point through Phi*_i o Phi_i^{-1} of its chart.
Pushforward pushforward_surface_measure(const FiniteMeasure& mu, const PiecewiseSurface& s);

}  // namespace mdlab::fit
