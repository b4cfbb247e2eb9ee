// SPDX-License-Identifier: Apache-2.0

#include "mdlab/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mdlab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

FiniteMeasure FiniteMeasure::uniform(Cloud pts) {
  FiniteMeasure m;
  auto n = pts.rows();
  m.support = std::move(pts);
  m.weights = Vec::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0);
  return m;
}

void FiniteMeasure::validate() const {
  if (weights.size() != support.rows()) throw Error("measure: weight count differs from support size");
  if (support.hasNaN() || weights.hasNaN()) throw Error("measure: NaN entry");
  if ((weights.array() < 0).any()) throw Error("measure: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw Error("measure: weights do not sum to 1");
}

Rng substream(std::uint64_t master, std::uint64_t index) {
  std::uint64_t a = splitmix64(master);
  std::uint64_t b = splitmix64(a ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

Vec std_normal(Rng& rng, Eigen::Index dim) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vec z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z[i] = n01(rng);
  return z;
}

double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double median(std::span<const double> v) { return quantile(v, 0.5); }

double quantile(std::span<const double> v, double q) {
  if (v.empty()) throw Error("quantile of empty sample");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  double pos = q * static_cast<double>(s.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, s.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return s[lo] * (1.0 - frac) + s[hi] * frac;
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("ols_slope needs >= 2 paired values");
  double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw Error("ols_slope: degenerate abscissa");
  return sxy / sxx;
}

}  // namespace mdlab
