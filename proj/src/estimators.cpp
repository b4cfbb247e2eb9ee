// SPDX-License-Identifier: Apache-2.0

#include "mdlab/estimators.hpp"

#include "mdlab/fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mdlab::estimators {

// ---- ReluNet -------------------------------------------------------------

ReluNet ReluNet::random(const std::vector<int>& widths, double B, double scale, Rng& rng) {
  if (widths.size() < 2) throw Error("ReluNet: need input and output widths");
  ReluNet net;
  net.B = B;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l + 1] < 1) throw Error("ReluNet: widths must be positive");
    double sd = scale * std::sqrt(2.0 / widths[l]);
    Mat a(widths[l + 1], widths[l]);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = sd * n01(rng);
    net.A.push_back(a);
    net.b.push_back(Vec::Zero(widths[l + 1]));
  }
  net.sparsity_budget = net.param_count();
  net.clip();
  return net;
}

int ReluNet::input_dim() const { return A.empty() ? 0 : static_cast<int>(A.front().cols()); }
int ReluNet::output_dim() const { return A.empty() ? 0 : static_cast<int>(A.back().rows()); }

long ReluNet::param_count() const {
  long c = 0;
  for (std::size_t l = 0; l < A.size(); ++l) c += static_cast<long>(A[l].size() + b[l].size());
  return c;
}

long ReluNet::nonzeros() const {
  long c = 0;
  for (std::size_t l = 0; l < A.size(); ++l)
    c += static_cast<long>((A[l].array() != 0).count() + (b[l].array() != 0).count());
  return c;
}

Vec ReluNet::eval(const Vec& x) const {
  if (x.size() != input_dim()) throw Error("ReluNet: input has dimension " + std::to_string(x.size()) + ", expected " +
                                           std::to_string(input_dim()));
  Vec h = x;
  for (std::size_t l = 0; l < A.size(); ++l) h = A[l] * h.cwiseMax(0.0) + b[l];
  return h;
}

Vec ReluNet::grad(const Vec& x, const Vec& upstream) const {
  if (x.size() != input_dim()) throw Error("ReluNet: input dimension mismatch");
  if (upstream.size() != output_dim()) throw Error("ReluNet: upstream dimension mismatch");
  std::vector<Vec> pre{x};  // h_0 .. h_{L-1}
  for (std::size_t l = 0; l + 1 < A.size(); ++l) pre.push_back(A[l] * pre.back().cwiseMax(0.0) + b[l]);
  Vec g(param_count());
  // Offsets of each layer block in params() order.
  std::vector<long> off(A.size());
  long o = 0;
  for (std::size_t l = 0; l < A.size(); ++l) {
    off[l] = o;
    o += static_cast<long>(A[l].size() + b[l].size());
  }
  Vec u = upstream;
  for (std::size_t l = A.size(); l-- > 0;) {
    Vec a = pre[l].cwiseMax(0.0);
    Eigen::Map<Mat>(g.data() + off[l], A[l].rows(), A[l].cols()) = u * a.transpose();
    g.segment(off[l] + static_cast<long>(A[l].size()), b[l].size()) = u;
    if (l > 0) u = (A[l].transpose() * u).cwiseProduct((pre[l].array() > 0).cast<double>().matrix());
  }
  return g;
}

Vec ReluNet::params() const {
  Vec p(param_count());
  long o = 0;
  for (std::size_t l = 0; l < A.size(); ++l) {
    p.segment(o, A[l].size()) = Eigen::Map<const Vec>(A[l].data(), A[l].size());
    o += static_cast<long>(A[l].size());
    p.segment(o, b[l].size()) = b[l];
    o += static_cast<long>(b[l].size());
  }
  return p;
}

void ReluNet::set_params(const Vec& p) {
  if (p.size() != param_count()) throw Error("ReluNet: parameter vector size mismatch");
  long o = 0;
  for (std::size_t l = 0; l < A.size(); ++l) {
    Eigen::Map<Vec>(A[l].data(), A[l].size()) = p.segment(o, A[l].size());
    o += static_cast<long>(A[l].size());
    b[l] = p.segment(o, b[l].size());
    o += static_cast<long>(b[l].size());
  }
}

void ReluNet::clip() {
  for (auto& a : A) a = a.cwiseMax(-B).cwiseMin(B);
  for (auto& v : b) v = v.cwiseMax(-B).cwiseMin(B);
}

bool ReluNet::within_bound() const {
  for (const auto& a : A)
    if (a.cwiseAbs().maxCoeff() > B) return false;
  for (const auto& v : b)
    if (v.size() && v.cwiseAbs().maxCoeff() > B) return false;
  return true;
}

// ---- heads ---------------------------------------------------------------

Vec NetHead::lift(double t, const Vec& xt) {
  Vec in(1 + 2 * xt.size());
  in << t, xt, -xt;
  return in;
}

NetHead NetHead::random(int local_dim, int depth, int width, double B, double scale, Rng& rng) {
  if (depth < 1) throw Error("NetHead: depth must be >= 1");
  std::vector<int> we{1 + 2 * local_dim}, ww{1 + 2 * local_dim};
  for (int l = 0; l + 1 < depth; ++l) {
    we.push_back(width);
    ww.push_back(width);
  }
  we.push_back(local_dim);
  ww.push_back(1);
  NetHead h;
  h.e_net = ReluNet::random(we, B, scale, rng);
  h.w_net = ReluNet::random(ww, B, scale, rng);
  // Start the weight head at a positive constant.
  h.w_net.b.back()[0] = 1.0;
  return h;
}

// ---- structured score ----------------------------------------------------

double rho_normalizer(const StructuredParams& p, double t) {
  if (p.rho_const > 0) return p.rho_const;
  double s2 = diffusion::ou_coeffs(t).sigma;
  s2 *= s2;
  double ln = std::log(static_cast<double>(std::max<long>(p.n, 2)));
  return 960.0 * s2 * (p.d * (ln + 4 * p.c_log) + 8 * ln);
}

Vec rho_weight(double t, const Vec& x, const Cloud& anchors, double C_const) {
  if (anchors.rows() == 0) throw Error("rho_weight: no anchors");
  if (!(C_const > 0)) throw Error("rho_weight: normalizing constant must be positive");
  double c = diffusion::ou_coeffs(t).c;
  Vec sq = ((c * anchors).rowwise() - x.transpose()).rowwise().squaredNorm();
  double m = sq.minCoeff();
  Vec r(sq.size());
  for (Eigen::Index i = 0; i < sq.size(); ++i) r[i] = fit::rho((sq[i] - m) / (2 * C_const));
  return r;
}

StructuredScore::StructuredScore(const StructuredScore& o)
    : anchors(o.anchors), frames(o.frames), params(o.params) {
  for (const auto& h : o.heads) heads.push_back(h->clone());
}

StructuredScore& StructuredScore::operator=(const StructuredScore& o) {
  if (this != &o) {
    StructuredScore tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

double StructuredScore::weight_floor() const {
  return std::pow(static_cast<double>(std::max<long>(params.n, 1)), -params.C_w);
}

double StructuredScore::envelope() const {
  double ln = std::log(static_cast<double>(std::max<long>(params.n, 2)));
  return params.C_e * std::sqrt(params.c_dim * ln);
}

void StructuredScore::validate() const {
  const auto N = static_cast<std::size_t>(anchors.rows());
  if (N == 0) throw Error("structured score: no anchors");
  if (frames.size() != N || heads.size() != N) throw Error("structured score: anchors, frames and heads differ in count");
  for (const auto& L : frames) {
    if (L.rows() != anchors.cols()) throw Error("structured score: frame has wrong ambient dimension");
    if (((L.transpose() * L) - Mat::Identity(L.cols(), L.cols())).norm() > 1e-10)
      throw Error("structured score: frame is not isometric");
  }
}

StructuredScore::Trace StructuredScore::trace(double t, const Vec& x) const {
  if (t < params.t_lo || t > params.t_hi) throw Error("structured score: t outside the model interval");
  if (t < diffusion::kMinTime) throw Error("structured score: t below the minimum time");
  Trace tr;
  auto oc = diffusion::ou_coeffs(t);
  tr.c = oc.c;
  tr.sigma = oc.sigma;
  const Eigen::Index N = anchors.rows();
  tr.rho = rho_weight(t, x, anchors, rho_normalizer(params, t));
  tr.w.resize(N);
  tr.e.resize(static_cast<std::size_t>(N));
  tr.e_mask.resize(static_cast<std::size_t>(N));
  tr.w_free.resize(static_cast<std::size_t>(N));
  tr.local.resize(static_cast<std::size_t>(N));
  const double floor = weight_floor(), env = envelope(), cap = params.diam_bound;
  for (Eigen::Index i = 0; i < N; ++i) {
    auto si = static_cast<std::size_t>(i);
    if (tr.rho[i] == 0) {
      tr.w[i] = 0;
      tr.e[si] = Vec::Zero(frames[si].cols());
      tr.e_mask[si] = Vec::Zero(frames[si].cols());
      tr.w_free[si] = 0;
      tr.local[si] = Vec::Zero(frames[si].cols());
      continue;
    }
    Vec xt = frames[si].transpose() * (x - oc.c * anchors.row(i).transpose());
    tr.local[si] = xt;
    Vec e = heads[si]->e(t, xt);
    Vec mask = Vec::Ones(e.size());
    for (Eigen::Index j = 0; j < e.size(); ++j) {
      // Envelope |c e_j - x~_j| <= sigma * env, then the coordinate bound.
      double lo = std::max(-cap, (xt[j] - oc.sigma * env) / oc.c);
      double hi = std::min(cap, (xt[j] + oc.sigma * env) / oc.c);
      if (lo > hi) lo = hi = std::clamp(xt[j] / oc.c, -cap, cap);
      if (e[j] < lo || e[j] > hi || !std::isfinite(e[j])) {
        e[j] = std::isfinite(e[j]) ? std::clamp(e[j], lo, hi) : 0.5 * (lo + hi);
        mask[j] = 0;
      }
    }
    tr.e[si] = e;
    tr.e_mask[si] = mask;
    double w = heads[si]->w(t, xt);
    tr.w_free[si] = w > floor ? 1 : 0;
    tr.w[i] = std::isfinite(w) ? std::max(w, floor) : floor;
  }
  Vec rw = tr.rho.cwiseProduct(tr.w);
  double S = rw.sum();
  if (!(S > 0)) {
    // Fallback: the nearest anchor alone.
    Vec sq = ((oc.c * anchors).rowwise() - x.transpose()).rowwise().squaredNorm();
    Eigen::Index k = 0;
    sq.minCoeff(&k);
    rw = Vec::Zero(N);
    rw[k] = 1;
    S = 1;
  }
  tr.pi = rw / S;
  tr.mean = Vec::Zero(anchors.cols());
  for (Eigen::Index i = 0; i < N; ++i) {
    if (tr.pi[i] == 0) continue;
    auto si = static_cast<std::size_t>(i);
    tr.mean += tr.pi[i] * (anchors.row(i).transpose() + frames[si] * tr.e[si]);
  }
  tr.score = (oc.c * tr.mean - x) / (oc.sigma * oc.sigma);
  return tr;
}

Vec StructuredScore::eval(double t, const Vec& x) const { return trace(t, x).score; }

// ---- anchors -------------------------------------------------------------

AnchorFrames build_anchor_frames(const Cloud& samples, int N, double eps_N, int d, std::uint64_t seed, int cap,
                                 double c_dim) {
  const Eigen::Index n = samples.rows();
  if (N < 1 || N > n) throw Error("build_anchor_frames: need 1 <= N <= n");
  if (cap <= 0) cap = std::max(1, static_cast<int>(std::ceil(c_dim * std::log(static_cast<double>(std::max<Eigen::Index>(n, 2))))));
  Rng rng = substream(seed, 7);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int k = 0; k < N; ++k) {
    std::uniform_int_distribution<Eigen::Index> pick(k, n - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  // Global PCA frame for degenerate neighborhoods.
  Mat centered = samples.rowwise() - samples.colwise().mean();
  Mat global = fit::span_basis(centered);
  if (global.cols() > d) global = global.leftCols(d).eval();
  AnchorFrames af;
  af.anchors.resize(N, samples.cols());
  for (int k = 0; k < N; ++k) {
    Eigen::Index i = idx[static_cast<std::size_t>(k)];
    af.anchors.row(k) = samples.row(i);
    Cloud V = fit::neighbor_set(samples, i, eps_N);
    Mat H = V.rows() > 0 ? fit::span_basis(V) : Mat(samples.cols(), 0);
    bool fb = H.cols() == 0;
    if (fb) H = global;
    bool tr = H.cols() > cap;
    if (tr) H = H.leftCols(cap).eval();
    af.frames.push_back(H);
    af.fallback.push_back(fb ? 1 : 0);
    af.truncated.push_back(tr ? 1 : 0);
  }
  return af;
}

// ---- training ------------------------------------------------------------

double batch_risk(const StructuredScore& m, const Cloud& Y, const TrainConfig& cfg, Rng& rng,
                  std::vector<Vec>* grads) {
  const auto N = static_cast<std::size_t>(m.anchors.rows());
  if (grads) {
    grads->assign(N, Vec());
    for (std::size_t i = 0; i < N; ++i)
      if (auto* h = dynamic_cast<const NetHead*>(m.heads[i].get()))
        (*grads)[i] = Vec::Zero(h->e_net.param_count() + h->w_net.param_count());
  }
  const double len = cfg.t_hi - cfg.t_lo;
  std::uniform_int_distribution<Eigen::Index> pick(0, Y.rows() - 1);
  double total = 0;
  int count = 0;
  for (int b = 0; b < cfg.batch; ++b) {
    Vec y = Y.row(pick(rng)).transpose();
    for (int r = 0; r < cfg.noise_draws; ++r) {
      double t = cfg.t_lo + len * uniform01(rng);
      auto oc = diffusion::ou_coeffs(t);
      Vec z = std_normal(rng, Y.cols());
      Vec x = oc.c * y + oc.sigma * z;
      auto tr = m.trace(t, x);
      Vec g = tr.score + z / oc.sigma;
      total += len * g.squaredNorm();
      ++count;
      if (!grads) continue;
      // d loss / d score, times the interval length.
      Vec up = 2 * len * g;
      const double k = oc.c / (oc.sigma * oc.sigma);
      double S = 0;
      for (std::size_t i = 0; i < N; ++i) S += tr.rho[static_cast<Eigen::Index>(i)] * tr.w[static_cast<Eigen::Index>(i)];
      for (std::size_t i = 0; i < N; ++i) {
        auto* h = dynamic_cast<const NetHead*>(m.heads[i].get());
        auto ii = static_cast<Eigen::Index>(i);
        if (!h || tr.pi[ii] == 0 || S <= 0) continue;
        Vec in = NetHead::lift(t, tr.local[i]);
        Vec ue = (k * tr.pi[ii] * (m.frames[i].transpose() * up)).cwiseProduct(tr.e_mask[i]);
        Vec mi = m.anchors.row(ii).transpose() + m.frames[i] * tr.e[i];
        double uw = tr.w_free[i] ? k * tr.rho[ii] / S * up.dot(mi - tr.mean) : 0.0;
        Vec& G = (*grads)[i];
        const long ne = h->e_net.param_count();
        G.head(ne) += h->e_net.grad(in, ue);
        if (uw != 0) G.tail(h->w_net.param_count()) += h->w_net.grad(in, Vec::Constant(1, uw));
      }
    }
  }
  if (grads)
    for (auto& G : *grads)
      if (G.size()) G /= count;
  return total / count;
}

TrainResult erm_train(const StructuredScore& init, const Cloud& Y, const TrainConfig& cfg) {
  if (Y.rows() == 0) throw Error("erm_train: empty sample set");
  if (!(cfg.t_lo > 0) || !(cfg.t_hi > cfg.t_lo)) throw Error("erm_train: need 0 < t_lo < t_hi");
  init.validate();
  TrainResult res;
  res.model = init;
  // Fixed-noise evaluation of the empirical risk for divergence monitoring.
  auto evaluate = [&](const StructuredScore& m) {
    Rng rng = substream(cfg.seed, 0xe7a1ULL);
    TrainConfig ec = cfg;
    ec.batch = cfg.eval_trials;
    ec.noise_draws = 1;
    return batch_risk(m, Y, ec, rng, nullptr);
  };
  double initial = evaluate(res.model);
  res.eval_trace.push_back(initial);
  std::vector<Vec> grads;
  for (int s = 0; s < cfg.steps; ++s) {
    Rng rng = substream(cfg.seed, static_cast<std::uint64_t>(s) + 1);
    double r = batch_risk(res.model, Y, cfg, rng, &grads);
    res.risk_trace.push_back(r);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto* h = dynamic_cast<NetHead*>(res.model.heads[i].get());
      if (!h || grads[i].size() == 0) continue;
      const long ne = h->e_net.param_count();
      h->e_net.set_params(h->e_net.params() - cfg.lr * grads[i].head(ne));
      h->w_net.set_params(h->w_net.params() - cfg.lr * grads[i].tail(h->w_net.param_count()));
      h->e_net.clip();
      h->w_net.clip();
      if (!h->e_net.within_bound() || !h->w_net.within_bound()) throw Error("erm_train: bound violated after step");
    }
    if (cfg.eval_every > 0 && (s + 1) % cfg.eval_every == 0) {
      double ev = evaluate(res.model);
      res.eval_trace.push_back(ev);
      if (!(ev <= 10 * initial)) {
        res.diverged = true;
        break;
      }
    }
  }
  return res;
}

}  // namespace mdlab::estimators
