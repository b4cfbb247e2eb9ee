// SPDX-License-Identifier: Apache-2.0
//
// Reverse-time simulation over kappa-decreasing partitions.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/diffusion.hpp"

#include <string>
#include <vector>

namespace mdlab::samplers {

struct TimePartition {
  std::vector<double> t;  // t_0 = 0 < ... < t_K
  double kappa = 0;
  double T_bar = 0;
  double T_under = 0;  // T_bar - t_K
  int K() const { return static_cast<int>(t.size()) - 1; }
};

/// t_{k+1} - t_k <= kappa min(1, T_bar - t_k) at every k, strictly increasing, t_0 = 0.
bool is_kappa_decreasing(const TimePartition& p);

/// Uniform nodes kappa*k for k <= L, T_bar = kappa L + 1, then remaining
/// time (1 + kappa)^-m for m = 0..K-L.
TimePartition make_schedule(double kappa, int L, int K);

/// K-step partition with prescribed T_bar > 1 and T_under: uniform steps up
/// to remaining time 1, geometric decay afterwards, kappa chosen so both
/// pieces use the same rate.
TimePartition make_horizon_schedule(double T_bar, double T_under, int K);

enum class Scheme { classic, modified, classic_raw };

Scheme parse_scheme(const std::string& name);
std::string scheme_name(Scheme s);

/// Exponential integrator of dY = (Y + 2 s(T_bar - t_k, y)) dt + sqrt(2) dB
/// with the score frozen at the left node.
Vec classic_step(const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, const Vec& z);

/// y + sigma_gamma s + sigma_gamma z
Vec classic_raw_step(const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, const Vec& z);

/// y / c_g + (sigma_g^2 / c_g) s(T_bar - t_k, y) + sigma_g (sigma_{T_bar - t_{k+1}} / sigma_{T_bar - t_k}) z
Vec modified_step(const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, const Vec& z);

Vec step(Scheme scheme, const Vec& y, double tk, double tk1, const diffusion::ScoreField& s, double T_bar, Rng& rng);

/// c_g^-1 (sigma_{t+g}^2 / sigma_t^2) s(t+g, x') - (x - c_g^-1 x') / sigma_t^2 with g = t_anchor - t.
Vec modified_drift(double t, const Vec& x, const Vec& x_anchor, double t_anchor, const diffusion::ScoreField& s);

struct SamplerRun {
  Scheme scheme = Scheme::modified;
  const diffusion::ScoreField* score = nullptr;
  TimePartition partition;
  int n_paths = 0;
  std::uint64_t seed = 1;
  bool record = false;
};

struct PathError {
  int path = 0;
  std::string message;
};

struct SamplerResult {
  Cloud terminal;                 // successful paths only
  std::vector<int> path_id;       // path of each terminal row
  std::vector<Cloud> trajectory;  // per node k when recorded (all paths)
  std::vector<PathError> errors;
};

SamplerResult run_backward(const SamplerRun& run);

}  // namespace mdlab::samplers
