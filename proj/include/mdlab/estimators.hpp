// SPDX-License-Identifier: Apache-2.0
//
// ReLU networks, the anchored structured score family and its ERM training.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/diffusion.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace mdlab::estimators {

/// h -> A_L relu(...(A_1 relu(x) + b_1)...) + b_L. The first nonlinearity
/// acts on the raw input.
class ReluNet {
 public:
  std::vector<Mat> A;
  std::vector<Vec> b;
  double B = 1e3;               // entry bound
  long sparsity_budget = 0;     // declared, tracked only

  ReluNet() = default;
  /// widths = {input, hidden..., output}; weights ~ N(0, scale^2 * 2 / fan_in).
  static ReluNet random(const std::vector<int>& widths, double B, double scale, Rng& rng);

  int depth() const { return static_cast<int>(A.size()); }
  int input_dim() const;
  int output_dim() const;
  long param_count() const;
  long nonzeros() const;

  Vec eval(const Vec& x) const;
  /// Gradient of <upstream, net(x)> with respect to all parameters, in the
  /// order of params(). ReLU'(0) = 0.
  Vec grad(const Vec& x, const Vec& upstream) const;

  Vec params() const;
  void set_params(const Vec& p);
  /// Clamp every entry to [-B, B].
  void clip();
  bool within_bound() const;
};

/// Per-anchor pair (phi_e, phi_w) evaluated on (t, local coordinates).
class AnchorHead {
 public:
  virtual ~AnchorHead() = default;
  virtual Vec e(double t, const Vec& xt) const = 0;
  virtual double w(double t, const Vec& xt) const = 0;
  virtual std::unique_ptr<AnchorHead> clone() const = 0;
};

/// Hand-built head from closures.
class FunctionHead final : public AnchorHead {
 public:
  using EFn = std::function<Vec(double, const Vec&)>;
  using WFn = std::function<double(double, const Vec&)>;
  FunctionHead(EFn e, WFn w) : e_(std::move(e)), w_(std::move(w)) {}
  Vec e(double t, const Vec& xt) const override { return e_(t, xt); }
  double w(double t, const Vec& xt) const override { return w_(t, xt); }
  std::unique_ptr<AnchorHead> clone() const override { return std::make_unique<FunctionHead>(*this); }

 private:
  EFn e_;
  WFn w_;
};

/// Trainable head. Both nets read (t, x~, -x~) so that the leading ReLU keeps
/// the sign information of the local coordinates.
class NetHead final : public AnchorHead {
 public:
  ReluNet e_net, w_net;
  static Vec lift(double t, const Vec& xt);
  Vec e(double t, const Vec& xt) const override { return e_net.eval(lift(t, xt)); }
  double w(double t, const Vec& xt) const override { return w_net.eval(lift(t, xt))[0]; }
  std::unique_ptr<AnchorHead> clone() const override { return std::make_unique<NetHead>(*this); }
  static NetHead random(int local_dim, int depth, int width, double B, double scale, Rng& rng);
};

struct StructuredParams {
  long n = 1;          // sample count entering the log n constants
  int d = 1;           // intrinsic dimension
  double c_log = 4;    // complexity constant
  double C_w = 4;      // weight floor n^-C_w
  double C_e = 2;      // envelope constant
  double c_dim = 1;    // C_dim in the envelope and the frame cap
  double diam_bound = 1;  // |phi_e| coordinates clipped to this
  double t_lo = diffusion::kMinTime;
  double t_hi = std::numeric_limits<double>::infinity();
  /// Overrides C(t, n) when positive.
  double rho_const = 0;
};

/// 960 sigma_t^2 (d (log n + 4 c_log) + 8 log n)
double rho_normalizer(const StructuredParams& p, double t);

/// rho applied to the squared-distance gaps (||x - c G_i||^2 - min_j ||x - c G_j||^2) / (2 C).
Vec rho_weight(double t, const Vec& x, const Cloud& anchors, double C_const);

class StructuredScore final : public diffusion::ScoreField {
 public:
  Cloud anchors;            // N x D
  std::vector<Mat> frames;  // D x d_i each
  std::vector<std::unique_ptr<AnchorHead>> heads;
  StructuredParams params;

  StructuredScore() = default;
  StructuredScore(const StructuredScore& o);
  StructuredScore& operator=(const StructuredScore& o);
  StructuredScore(StructuredScore&&) = default;
  StructuredScore& operator=(StructuredScore&&) = default;

  Vec eval(double t, const Vec& x) const override;
  Eigen::Index dim() const override { return anchors.cols(); }
  double t_min() const override { return params.t_lo; }
  double t_max() const override { return params.t_hi; }

  double weight_floor() const;
  double envelope() const;
  /// Throws unless frames are isometric and shapes agree.
  void validate() const;

  /// Everything the gradient needs from one evaluation.
  struct Trace {
    Vec score;
    Vec pi;                    // normalized rho * w
    Vec rho, w;
    std::vector<Vec> e;        // clipped phi_e
    std::vector<Vec> e_mask;   // 1 where phi_e was not clipped
    std::vector<char> w_free;  // phi_w above the floor
    std::vector<Vec> local;    // x~_i
    Vec mean;                  // sum_i pi_i (G_i + L_i e_i)
    double c = 0, sigma = 0;
  };
  Trace trace(double t, const Vec& x) const;
};

struct AnchorFrames {
  Cloud anchors;
  std::vector<Mat> frames;
  std::vector<char> fallback;   // global PCA frame used
  std::vector<char> truncated;  // cap applied
};

/// Uniform subsample of N anchors; frames span the neighbors within eps_N,
/// capped at `cap` leading directions (cap <= 0 means ceil(c_dim log n)).
AnchorFrames build_anchor_frames(const Cloud& samples, int N, double eps_N, int d, std::uint64_t seed, int cap = 0,
                                 double c_dim = 1);

struct TrainConfig {
  double t_lo = 0.1;
  double t_hi = 0.2;
  double lr = 1e-3;
  int steps = 1000;
  int batch = 16;
  int noise_draws = 1;  // per sampled data point
  int eval_every = 100;
  int eval_trials = 64;
  std::uint64_t seed = 1;
};

struct TrainResult {
  StructuredScore model;
  std::vector<double> risk_trace;  // batch risk per step
  std::vector<double> eval_trace;  // fixed-noise empirical risk every eval_every steps
  bool diverged = false;
};

/// Monte Carlo empirical risk of one batch, plus parameter gradient.
double batch_risk(const StructuredScore& m, const Cloud& Y, const TrainConfig& cfg, Rng& rng,
                  std::vector<Vec>* grads);

/// Plain SGD on the empirical denoising risk over [t_lo, t_hi].
TrainResult erm_train(const StructuredScore& init, const Cloud& Y, const TrainConfig& cfg);

}  // namespace mdlab::estimators
