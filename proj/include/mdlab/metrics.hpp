// SPDX-License-Identifier: Apache-2.0
//
// Transport distances, Gaussian KL and the score-matching bound checks.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/diffusion.hpp"

#include <vector>

namespace mdlab::metrics {

/// Largest cloud accepted by the exact solver.
inline constexpr Eigen::Index kExactCap = 4096;

struct TransportPlan {
  /// Row i of the (expanded) first cloud goes to row assignment[i] of the second.
  std::vector<Eigen::Index> assignment;
  /// Mass moved between original support points, nA x nB.
  Mat coupling;
  /// sum coupling * ||a - b||^p
  double cost = 0;
};

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting path with potentials). Returns column of each row.
std::vector<Eigen::Index> linear_assignment(const Mat& cost);

/// Exact W_p between uniform clouds of equal size.
double w_p(const Cloud& A, const Cloud& B, int p, TransportPlan* plan = nullptr);

/// Exact W_p between weighted measures. Weights on a common grid of at most
/// kExactCap equal atoms go through the assignment solver (plan->assignment is
/// filled); anything else is solved as a transportation problem and
/// plan->assignment is left empty.
double w_p(const FiniteMeasure& P, const FiniteMeasure& Q, int p, TransportPlan* plan = nullptr);

/// Exact W1 between empirical measures on the line.
double w1_1d(std::vector<double> a, std::vector<double> b);

/// Features (U^T x, ||x - U U^T x||) of every row. For measures invariant
/// under rotations fixing span U, W1 of the features equals W1 of the clouds.
Cloud orbit_features(const Cloud& X, const Mat& U);

double kl_gaussian(const Vec& m1, const Mat& S1, const Vec& m2, const Mat& S2);

struct Gaussian {
  Vec mean;
  Mat cov;
};

/// Law of c_t X + sigma_t Z for X ~ g.
Gaussian ou_evolve(const Gaussian& g, double t);

/// E_P || grad log p - grad log q ||^2 in closed form.
double gaussian_relative_fisher(const Gaussian& P, const Gaussian& Q);

struct KlDissipation {
  double lhs = 0;     // centered difference of KL(P_t || Q_t)
  double rhs = 0;     // -2 E_{P_t} || grad log p_t - grad log q_t ||^2
  double fisher = 0;  // E_{P_t} || grad log p_t - grad log q_t ||^2
  double gap = 0;     // |lhs| / |rhs| - 1
};

KlDissipation kl_dissipation_check(const Gaussian& P, const Gaussian& Q, double t, double dt);

struct SmlBound {
  diffusion::Estimate loss;
  double w2 = 0;
  double bound = 0;      // W2^2 c^2 / (4 sigma^2) at t_min
  double ratio = 0;      // loss / bound
  double ratio_se = 0;
  double tight_bound = 0;  // W2^2 (sigma_min^-2 - sigma_max^-2) / 2
};

/// Loss int E_{P_t} || s_Q - s_P ||^2 over [t_min, t_max] against the W2 bound.
SmlBound sml_bound_check(const FiniteMeasure& P, const FiniteMeasure& Q, double t_min, double t_max,
                         const diffusion::McConfig& mc);

}  // namespace mdlab::metrics
