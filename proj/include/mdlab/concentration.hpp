// SPDX-License-Identifier: Apache-2.0
//
// Monte Carlo checks of high-probability bounds for Gaussian noise
// interacting with embedded manifolds and the exact score.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/fit.hpp"
#include "mdlab/geometry.hpp"

#include <map>
#include <string>
#include <vector>

namespace mdlab::concentration {

struct BoundReport {
  std::string name;
  std::map<std::string, double> config;
  std::vector<double> statistic;  // per trial
  std::vector<double> excess;     // per trial; > 0 is a violation
  double bound = 0;               // representative bound value
  double delta = 0.05;
  int trials = 0;
  int violations = 0;
  double violation_rate = 0;
  double q05 = 0, q50 = 0, q95 = 0;
  std::map<std::string, double> extra;

  double binomial_se() const;
  /// violation_rate <= delta + 3 binomial standard errors
  bool within_delta() const;
};

/// Manifold constants entering the bounds.
struct Constants {
  int d = 1;
  double c_log = 4;
  double volume = 1;
  double r0 = 0.125;
  double L_M = 1;
};

Constants constants_for(const geometry::EmbeddedManifold& m, const geometry::DensitySpec& dens = {});

/// Net of manifold points at resolution eps / 4.
geometry::EpsNet manifold_net(const geometry::EmbeddedManifold& m, double eps);

BoundReport check_inner_product_sup(const geometry::EmbeddedManifold& m, double eps, double delta, int trials,
                                    std::uint64_t seed);

BoundReport check_tangent_projection(const geometry::EmbeddedManifold& m, double delta, int trials,
                                     std::uint64_t seed);

/// `log_ref` is the log density of mu with respect to the Hausdorff measure
/// at its atoms; the posterior density is pi_i / w_i times that reference.
BoundReport check_posterior_band(const FiniteMeasure& mu, const Constants& k, double log_ref, double t, double delta,
                                 int trials, std::uint64_t seed);

/// Statistic ||sigma_t s(t, c_t y + sigma_t Z) + Z||^2. Per-trial check by
/// Markov's inequality on the mean bound: P(stat > bound / delta) <= delta.
BoundReport check_denoiser_variance(const FiniteMeasure& mu, const Constants& k, double t, double delta, int trials,
                                    std::uint64_t seed);

/// Two-sided sandwich of ||X(0) - G_i||^2 by the squared-distance gaps.
/// `eps` is the density radius of `anchors` on the manifold.
BoundReport check_weight_radius(const FiniteMeasure& mu, const Cloud& anchors, double eps, const Constants& k, double t,
                                double delta, int trials, std::uint64_t seed);

/// E || s(t, X(t)) - s~(t, X(t), X(t+g)) ||^2 per g; statistic holds one
/// mean per g, `extra["slope"]` the log-log slope.
BoundReport check_drift_freeze(const FiniteMeasure& mu, const Constants& k, double t, const std::vector<double>& gammas,
                               int trials, std::uint64_t seed);

/// sup_y |<Z, y - Phi*_i o Phi_i^-1(y)>| over the covered atoms of mu, against
/// the bound with the measured maximal displacement in place of L_M eps^beta.
/// Uncovered atoms are skipped and counted in extra["uncovered"].
BoundReport check_surface_gp(const fit::PiecewiseSurface& s, const FiniteMeasure& mu, const Constants& k,
                             double delta, int trials, std::uint64_t seed);

}  // namespace mdlab::concentration
