// SPDX-License-Identifier: Apache-2.0

#include "mdlab/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mdlab::diffusion {

namespace {

void require_time(double t) {
  if (!(t >= kMinTime)) throw Error("score requested at t=" + std::to_string(t) + " below the minimum time");
}

// log w_i - ||x - c y_i||^2 / (2 sigma^2)
Vec log_joint(const FiniteMeasure& mu, const OUCoeffs& oc, const Vec& x) {
  if (x.size() != mu.dim()) throw Error("point dimension differs from measure dimension");
  if (mu.size() == 0) throw Error("empty measure");
  Mat diff = (oc.c * mu.support).rowwise() - x.transpose();
  Vec sq = diff.rowwise().squaredNorm();
  return mu.weights.array().log() - sq.array() / (2 * oc.sigma * oc.sigma);
}

}  // namespace

OUCoeffs ou_coeffs(double t) {
  if (!(t >= 0)) throw Error("ou_coeffs: t must be nonnegative");
  OUCoeffs oc;
  oc.t = t;
  oc.c = std::exp(-t);
  oc.sigma = std::sqrt(-std::expm1(-2 * t));
  return oc;
}

Eigen::Index sample_index(const Vec& weights, Rng& rng) {
  double u = uniform01(rng) * weights.sum();
  double acc = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;
}

ForwardDraw forward_sample(const FiniteMeasure& mu, double t, Rng& rng) {
  OUCoeffs oc = ou_coeffs(t);
  ForwardDraw fd;
  fd.index = sample_index(mu.weights, rng);
  fd.x0 = mu.support.row(fd.index).transpose();
  fd.z = std_normal(rng, mu.dim());
  fd.xt = oc.c * fd.x0 + oc.sigma * fd.z;
  return fd;
}

Vec log_posterior_weights(const FiniteMeasure& mu, double t, const Vec& x) {
  require_time(t);
  Vec lj = log_joint(mu, ou_coeffs(t), x);
  double lse = logsumexp(std::span<const double>(lj.data(), static_cast<std::size_t>(lj.size())));
  if (!std::isfinite(lse)) throw Error("posterior weights: all exponents are -inf");
  return lj.array() - lse;
}

Vec posterior_weights(const FiniteMeasure& mu, double t, const Vec& x) {
  return log_posterior_weights(mu, t, x).array().exp();
}

Vec cond_expectation(const FiniteMeasure& mu, double t, const Vec& x) {
  Vec w = posterior_weights(mu, t, x);
  return mu.support.transpose() * w;
}

Vec exact_score(const FiniteMeasure& mu, double t, const Vec& x) {
  OUCoeffs oc = ou_coeffs(t);
  Vec e = cond_expectation(mu, t, x);
  return (oc.c * e - x) / (oc.sigma * oc.sigma);
}

double log_density(const FiniteMeasure& mu, double t, const Vec& x) {
  require_time(t);
  OUCoeffs oc = ou_coeffs(t);
  Vec lj = log_joint(mu, oc, x);
  double lse = logsumexp(std::span<const double>(lj.data(), static_cast<std::size_t>(lj.size())));
  return lse - 0.5 * static_cast<double>(x.size()) * std::log(2 * std::numbers::pi * oc.sigma * oc.sigma);
}

Vec empirical_score(const Cloud& Y, double t, const Vec& x) {
  if (Y.rows() == 0) throw Error("empirical_score: empty sample");
  return exact_score(FiniteMeasure::uniform(Y), t, x);
}

ExactScore::ExactScore(FiniteMeasure mu) : mu_(std::move(mu)) { mu_.validate(); }

Quadrature time_quadrature(double a, double b, int per_doubling) {
  if (!(a > 0) || !(b > a)) throw Error("time_quadrature: need 0 < a < b");
  if (per_doubling < 1) throw Error("time_quadrature: per_doubling must be >= 1");
  Quadrature q;
  double lo = a;
  while (lo < b) {
    double hi = std::min(2 * lo, b);
    double h = (hi - lo) / per_doubling;
    for (int j = 0; j < per_doubling; ++j) {
      q.nodes.push_back(lo + (j + 0.5) * h);
      q.weights.push_back(h);
    }
    lo = hi;
  }
  return q;
}

Estimate summarize(std::vector<double> samples) {
  Estimate e;
  const auto n = static_cast<double>(samples.size());
  if (samples.empty()) return e;
  double mean = 0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0;
  for (double s : samples) var += (s - mean) * (s - mean);
  e.value = mean;
  e.se = samples.size() > 1 ? std::sqrt(var / (n - 1) / n) : 0.0;
  e.per_trial = std::move(samples);
  return e;
}

Estimate paired_difference(const Estimate& a, const Estimate& b) {
  if (a.per_trial.size() != b.per_trial.size()) throw Error("paired_difference: replicate counts differ");
  std::vector<double> d(a.per_trial.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.per_trial[i] - b.per_trial[i];
  return summarize(std::move(d));
}

Estimate dsm_loss(const ScoreField& s, const Vec& y, double a, double b, const McConfig& cfg) {
  Cloud Y = y.transpose();
  return empirical_risk(s, Y, a, b, cfg);
}

Estimate empirical_risk(const ScoreField& s, const Cloud& Y, double a, double b, const McConfig& cfg) {
  if (Y.rows() == 0) throw Error("empirical_risk: empty sample set");
  if (cfg.trials < 1) throw Error("mc trials must be >= 1");
  Quadrature q = time_quadrature(a, b, cfg.per_doubling);
  std::vector<OUCoeffs> oc;
  for (double t : q.nodes) oc.push_back(ou_coeffs(t));
  std::vector<double> out(static_cast<std::size_t>(cfg.trials));
#pragma omp parallel for schedule(static)
  for (int m = 0; m < cfg.trials; ++m) {
    Rng rng = substream(cfg.seed, static_cast<std::uint64_t>(m));
    double acc = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      Vec y = Y.row(i).transpose();
      for (std::size_t j = 0; j < q.nodes.size(); ++j) {
        Vec z = std_normal(rng, Y.cols());
        Vec x = oc[j].c * y + oc[j].sigma * z;
        acc += q.weights[j] * (s.eval(q.nodes[j], x) + z / oc[j].sigma).squaredNorm();
      }
    }
    out[static_cast<std::size_t>(m)] = acc / static_cast<double>(Y.rows());
  }
  return summarize(std::move(out));
}

Estimate sm_loss(const ScoreField& s, const FiniteMeasure& mu, double a, double b, const McConfig& cfg) {
  if (cfg.trials < 1) throw Error("mc trials must be >= 1");
  Quadrature q = time_quadrature(a, b, cfg.per_doubling);
  std::vector<double> out(static_cast<std::size_t>(cfg.trials));
#pragma omp parallel for schedule(static)
  for (int m = 0; m < cfg.trials; ++m) {
    Rng rng = substream(cfg.seed, static_cast<std::uint64_t>(m));
    double acc = 0;
    for (std::size_t j = 0; j < q.nodes.size(); ++j) {
      ForwardDraw fd = forward_sample(mu, q.nodes[j], rng);
      acc += q.weights[j] * (s.eval(q.nodes[j], fd.xt) - exact_score(mu, q.nodes[j], fd.xt)).squaredNorm();
    }
    out[static_cast<std::size_t>(m)] = acc;
  }
  return summarize(std::move(out));
}

}  // namespace mdlab::diffusion
