// SPDX-License-Identifier: Apache-2.0

#include "mdlab/samplers.hpp"

#include <cmath>

namespace mdlab::samplers {

using diffusion::ou_coeffs;

bool is_kappa_decreasing(const TimePartition& p) {
  if (p.t.empty() || p.t.front() != 0.0) return false;
  for (std::size_t k = 0; k + 1 < p.t.size(); ++k) {
    double step = p.t[k + 1] - p.t[k];
    if (!(step > 0)) return false;
    if (step > p.kappa * std::min(1.0, p.T_bar - p.t[k]) * (1 + 1e-12)) return false;
  }
  return p.t.back() < p.T_bar;
}

TimePartition make_schedule(double kappa, int L, int K) {
  if (!(kappa > 0 && kappa <= 0.25)) throw Error("make_schedule: kappa must lie in (0, 1/4]");
  if (L < 1 || K <= L) throw Error("make_schedule: need K > L >= 1");
  TimePartition p;
  p.kappa = kappa;
  p.T_bar = kappa * L + 1.0;
  for (int k = 0; k <= L; ++k) p.t.push_back(kappa * k);
  for (int m = 1; m <= K - L; ++m) p.t.push_back(p.T_bar - std::pow(1 + kappa, -m));
  p.T_under = std::pow(1 + kappa, -(K - L));
  if (!is_kappa_decreasing(p)) throw Error("make_schedule: partition violates the kappa-decreasing predicate");
  return p;
}

TimePartition make_horizon_schedule(double T_bar, double T_under, int K) {
  if (!(T_bar > 1)) throw Error("make_horizon_schedule: T_bar must exceed 1");
  if (!(T_under > 0 && T_under < 1)) throw Error("make_horizon_schedule: T_under must lie in (0, 1)");
  const double head = T_bar - 1, tail = -std::log(T_under);
  // Steps needed at rate k: head / k uniform plus tail / log(1 + k) geometric.
  auto steps = [&](double k) { return head / k + tail / std::log1p(k); };
  double lo = 1e-6, hi = 0.25;
  if (steps(hi) > K) throw Error("make_horizon_schedule: K too small for kappa <= 1/4");
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (steps(mid) > K ? lo : hi) = mid;
  }
  int L = std::max(1, static_cast<int>(std::lround(head / hi)));
  if (L >= K) L = K - 1;
  const double k1 = head / L;
  const double k2 = std::pow(T_under, -1.0 / (K - L)) - 1;
  TimePartition p;
  p.T_bar = T_bar;
  for (int k = 0; k <= L; ++k) p.t.push_back(k1 * k);
  for (int m = 1; m <= K - L; ++m) p.t.push_back(T_bar - std::pow(1 + k2, -m));
  p.t[static_cast<std::size_t>(K)] = T_bar - T_under;
  p.T_under = T_under;
  // Geometric steps have relative size k2 / (1 + k2) of the remaining time.
  p.kappa = std::max(k1, k2 / (1 + k2));
  if (!(p.kappa <= 0.25 * (1 + 1e-12)) || !is_kappa_decreasing(p))
    throw Error("make_horizon_schedule: no kappa-decreasing partition for these parameters");
  return p;
}

Scheme parse_scheme(const std::string& name) {
  if (name == "classic") return Scheme::classic;
  if (name == "modified") return Scheme::modified;
  if (name == "classic_raw") return Scheme::classic_raw;
  throw Error("unknown scheme '" + name + "'");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::classic:
      return "classic";
    case Scheme::modified:
      return "modified";
    case Scheme::classic_raw:
      return "classic_raw";
  }
  return "?";
}

Vec classic_step(const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, const Vec& z) {
  if (!(tk1 > tk)) throw Error("classic_step: need t_{k+1} > t_k");
  const double g = tk1 - tk;
  const double eg = std::exp(g);
  return eg * y + 2 * std::expm1(g) * s.eval(T_bar - tk, y) + std::sqrt(std::expm1(2 * g)) * z;
}

Vec classic_raw_step(const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, const Vec& z) {
  if (!(tk1 > tk)) throw Error("classic_raw_step: need t_{k+1} > t_k");
  const double sg = ou_coeffs(tk1 - tk).sigma;
  return y + sg * s.eval(T_bar - tk, y) + sg * z;
}

Vec modified_step(const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, const Vec& z) {
  if (!(tk1 > tk)) throw Error("modified_step: need t_{k+1} > t_k");
  if (!(tk1 < T_bar)) throw Error("modified_step: t_{k+1} must stay below T_bar");
  auto g = ou_coeffs(tk1 - tk);
  const double ratio = ou_coeffs(T_bar - tk1).sigma / ou_coeffs(T_bar - tk).sigma;
  return y / g.c + (g.sigma * g.sigma / g.c) * s.eval(T_bar - tk, y) + g.sigma * ratio * z;
}

Vec step(Scheme scheme, const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, Rng& rng) {
  Vec z = std_normal(rng, y.size());
  switch (scheme) {
    case Scheme::classic:
      return classic_step(y, tk, tk1, s, T_bar, z);
    case Scheme::modified:
      return modified_step(y, tk, tk1, s, T_bar, z);
    case Scheme::classic_raw:
      return classic_raw_step(y, tk, tk1, s, T_bar, z);
  }
  throw Error("unknown scheme");
}

Vec modified_drift(double t, const Vec& x, const Vec& x_anchor, double t_anchor, const diffusion::ScoreField& s) {
  if (!(t < t_anchor)) throw Error("modified_drift: need t < t_anchor");
  auto g = ou_coeffs(t_anchor - t);
  auto a = ou_coeffs(t), b = ou_coeffs(t_anchor);
  const double sa2 = a.sigma * a.sigma;
  return (b.sigma * b.sigma / (g.c * sa2)) * s.eval(t_anchor, x_anchor) - (x - x_anchor / g.c) / sa2;
}

SamplerResult run_backward(const SamplerRun& run) {
  if (!run.score) throw Error("run_backward: no score field");
  if (run.n_paths < 0) throw Error("run_backward: n_paths must be >= 0");
  const auto& p = run.partition;
  if (!is_kappa_decreasing(p)) throw Error("run_backward: partition is not kappa-decreasing");
  if (!(p.T_under >= run.score->t_min())) throw Error("run_backward: score invalid at T_under");
  const Eigen::Index D = run.score->dim();
  const int K = p.K();
  SamplerResult res;
  Cloud all(run.n_paths, D);
  std::vector<std::string> err(static_cast<std::size_t>(run.n_paths));
  if (run.record) res.trajectory.assign(static_cast<std::size_t>(K + 1), Cloud::Zero(run.n_paths, D));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < run.n_paths; ++i) {
    Rng rng = substream(run.seed, static_cast<std::uint64_t>(i));
    Vec y = std_normal(rng, D);
    try {
      if (run.record) res.trajectory[0].row(i) = y.transpose();
      for (int k = 0; k < K; ++k) {
        y = step(run.scheme, y, p.t[static_cast<std::size_t>(k)], p.t[static_cast<std::size_t>(k + 1)], *run.score,
                 p.T_bar, rng);
        if (!y.allFinite()) throw Error("non-finite state at step " + std::to_string(k + 1));
        if (run.record) res.trajectory[static_cast<std::size_t>(k + 1)].row(i) = y.transpose();
      }
      all.row(i) = y.transpose();
    } catch (const std::exception& e) {
      err[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (int i = 0; i < run.n_paths; ++i)
    if (err[static_cast<std::size_t>(i)].empty()) res.path_id.push_back(i);
    else res.errors.push_back({i, err[static_cast<std::size_t>(i)]});
  res.terminal.resize(static_cast<Eigen::Index>(res.path_id.size()), D);
  for (std::size_t r = 0; r < res.path_id.size(); ++r) res.terminal.row(static_cast<Eigen::Index>(r)) = all.row(res.path_id[r]);
  return res;
}

}  // namespace mdlab::samplers
