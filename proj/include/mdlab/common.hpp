// SPDX-License-Identifier: Apache-2.0
//
// Shared numeric types, error type and random-stream helpers.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace mdlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Point cloud, one point per row.
using Cloud = Eigen::MatrixXd;

/// Every precondition or runtime failure in the library surfaces as this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weighted point cloud. Weights are nonnegative and sum to one.
struct FiniteMeasure {
  Cloud support;
  Vec weights;

  Eigen::Index size() const { return support.rows(); }
  Eigen::Index dim() const { return support.cols(); }

  /// Uniform weights 1/n over the rows of `pts`.
  static FiniteMeasure uniform(Cloud pts);
  /// Throws unless weights are nonnegative, sum to 1 within 1e-12 and no entry is NaN.
  void validate() const;
};

using Rng = std::mt19937_64;

/// Independent stream `index` derived from `master` by counter splitting
/// (splitmix64 over master and index).
Rng substream(std::uint64_t master, std::uint64_t index);

/// Draw a standard normal vector of length `dim`.
Vec std_normal(Rng& rng, Eigen::Index dim);

double uniform01(Rng& rng);

/// max(log x, 0)
inline double log_plus(double x) { return x > 1.0 ? std::log(x) : 0.0; }

/// log(sum exp(v_i)) with max subtraction. Returns -inf for empty input.
double logsumexp(std::span<const double> v);

/// Median of a copy of the values. Throws on empty input.
double median(std::span<const double> v);

/// Quantile by linear interpolation between order statistics, q in [0,1].
double quantile(std::span<const double> v, double q);

/// Least-squares slope of y against x.
double ols_slope(std::span<const double> x, std::span<const double> y);

}  // namespace mdlab
