// SPDX-License-Identifier: Apache-2.0
//
// Forward OU process dX = -X dt + sqrt(2) dB, exact scores of finite
// measures and the denoising score-matching losses.

#pragma once

#include "mdlab/common.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace mdlab::diffusion {

/// Scores are refused below this time.
inline constexpr double kMinTime = 1e-8;

struct OUCoeffs {
  double t = 0;
  double c = 1;
  double sigma = 0;
};

OUCoeffs ou_coeffs(double t);

struct ForwardDraw {
  Eigen::Index index = 0;  // support row of x0
  Vec x0, z, xt;
};

/// Row index drawn with probability proportional to `weights`.
Eigen::Index sample_index(const Vec& weights, Rng& rng);

ForwardDraw forward_sample(const FiniteMeasure& mu, double t, Rng& rng);

class ScoreField {
 public:
  virtual ~ScoreField() = default;
  virtual Vec eval(double t, const Vec& x) const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual double t_min() const { return kMinTime; }
  virtual double t_max() const { return std::numeric_limits<double>::infinity(); }
};

/// log p(y_i | t, x), normalized in the log domain.
Vec log_posterior_weights(const FiniteMeasure& mu, double t, const Vec& x);
Vec posterior_weights(const FiniteMeasure& mu, double t, const Vec& x);

Vec exact_score(const FiniteMeasure& mu, double t, const Vec& x);
Vec cond_expectation(const FiniteMeasure& mu, double t, const Vec& x);

/// Normalized log density of c_t X(0) + sigma_t Z at x.
double log_density(const FiniteMeasure& mu, double t, const Vec& x);

Vec empirical_score(const Cloud& Y, double t, const Vec& x);

class ExactScore final : public ScoreField {
 public:
  explicit ExactScore(FiniteMeasure mu);
  Vec eval(double t, const Vec& x) const override { return exact_score(mu_, t, x); }
  Eigen::Index dim() const override { return mu_.dim(); }
  const FiniteMeasure& measure() const { return mu_; }

 private:
  FiniteMeasure mu_;
};

class FunctionScore final : public ScoreField {
 public:
  using Fn = std::function<Vec(double, const Vec&)>;
  FunctionScore(Eigen::Index dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  Vec eval(double t, const Vec& x) const override { return fn_(t, x); }
  Eigen::Index dim() const override { return dim_; }

 private:
  Eigen::Index dim_;
  Fn fn_;
};

class ZeroScore final : public ScoreField {
 public:
  explicit ZeroScore(Eigen::Index dim) : dim_(dim) {}
  Vec eval(double, const Vec&) const override { return Vec::Zero(dim_); }
  Eigen::Index dim() const override { return dim_; }

 private:
  Eigen::Index dim_;
};

/// Geometric doubling of [a, b] with a midpoint rule of `per_doubling`
/// nodes inside each piece.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

Quadrature time_quadrature(double a, double b, int per_doubling = 16);

/// MC estimate with its standard error. `per_trial` holds the independent
/// replicates whose mean is `value`; replicates with the same seed are
/// paired across score fields.
struct Estimate {
  double value = 0;
  double se = 0;
  std::vector<double> per_trial;
};

Estimate summarize(std::vector<double> samples);
/// Paired difference a - b of two estimates computed with the same seed.
Estimate paired_difference(const Estimate& a, const Estimate& b);

struct McConfig {
  int trials = 256;
  int per_doubling = 16;
  std::uint64_t seed = 1;
};

/// int_a^b E || s(t, c_t y + sigma_t Z) + Z / sigma_t ||^2 dt
Estimate dsm_loss(const ScoreField& s, const Vec& y, double a, double b, const McConfig& cfg);

/// Average of dsm_loss over the rows of Y, shared nodes, independent noise.
Estimate empirical_risk(const ScoreField& s, const Cloud& Y, double a, double b, const McConfig& cfg);

/// int_a^b E || s(t, X(t)) - grad log p(t, X(t)) ||^2 dt with X(0) ~ mu.
Estimate sm_loss(const ScoreField& s, const FiniteMeasure& mu, double a, double b, const McConfig& cfg);

}  // namespace mdlab::diffusion
