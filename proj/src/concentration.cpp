// SPDX-License-Identifier: Apache-2.0

#include "mdlab/concentration.hpp"

#include "mdlab/diffusion.hpp"
#include "mdlab/samplers.hpp"

#include <algorithm>
#include <cmath>

namespace mdlab::concentration {

using diffusion::ou_coeffs;

namespace {

constexpr int kMaxGrid = 600;

void finish(BoundReport& r) {
  r.trials = static_cast<int>(r.statistic.size());
  r.violations = static_cast<int>(std::count_if(r.excess.begin(), r.excess.end(), [](double e) { return e > 0; }));
  r.violation_rate = r.trials > 0 ? static_cast<double>(r.violations) / r.trials : 0.0;
  if (!r.statistic.empty()) {
    r.q05 = quantile(r.statistic, 0.05);
    r.q50 = quantile(r.statistic, 0.5);
    r.q95 = quantile(r.statistic, 0.95);
  }
}

void check_common(double delta, int trials) {
  if (!(delta > 0 && delta < 1)) throw Error("delta must lie in (0, 1)");
  if (trials < 1) throw Error("trials must be >= 1");
}

// Manifold grid at step h, coarsened until it has at most kMaxGrid points.
Cloud capped_grid(const geometry::EmbeddedManifold& m, double h, double* used) {
  Cloud g = m.grid(h);
  while (g.rows() > kMaxGrid) {
    h *= 1.25;
    g = m.grid(h);
  }
  if (used) *used = h;
  return g;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

double BoundReport::binomial_se() const {
  return trials > 0 ? std::sqrt(delta * (1 - delta) / trials) : 0.0;
}

bool BoundReport::within_delta() const { return violation_rate <= delta + 3 * binomial_se(); }

Constants constants_for(const geometry::EmbeddedManifold& m, const geometry::DensitySpec& dens) {
  auto [pmin, pmax] = geometry::density_bounds(m, dens);
  Constants k;
  k.d = m.d;
  k.c_log = geometry::complexity_constant(m, pmin, pmax);
  k.volume = m.volume;
  k.r0 = m.r0();
  k.L_M = m.L_M;
  return k;
}

geometry::EpsNet manifold_net(const geometry::EmbeddedManifold& m, double eps) {
  if (!(eps > 0)) throw Error("manifold_net: eps must be positive");
  return geometry::eps_net(m.grid(eps / 4), eps);
}

BoundReport check_inner_product_sup(const geometry::EmbeddedManifold& m, double eps, double delta, int trials,
                                    std::uint64_t seed) {
  check_common(delta, trials);
  if (!(eps > 0 && eps < m.r0())) throw Error("inner_product: need 0 < eps < r0");
  double h = 0;
  Cloud g = capped_grid(m, eps / 4, &h);
  const Eigen::Index n = g.rows();
  Mat dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (g.row(i) - g.row(j)).norm();
  const double d = m.d;
  const double root = std::sqrt(4 * d * std::log(2 / eps) + 4 * log_plus(m.volume) + 2 * std::log(2 / delta));
  BoundReport r;
  r.name = "inner_product";
  r.delta = delta;
  r.config = {{"eps", eps}, {"D", m.D}, {"d", d}, {"grid_step", h}, {"grid_points", static_cast<double>(n)}};
  r.statistic.resize(static_cast<std::size_t>(trials));
  r.excess.resize(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
  for (int k = 0; k < trials; ++k) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(k));
    Vec a = g * std_normal(rng, m.D);
    double sup = 0, worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) {
        double v = std::abs(a[i] - a[j]);
        double rhs = 4 * eps * std::sqrt(d) + (dist(i, j) + 6 * eps) * root;
        sup = std::max(sup, v);
        worst = std::max(worst, v - rhs);
      }
    r.statistic[static_cast<std::size_t>(k)] = sup;
    r.excess[static_cast<std::size_t>(k)] = worst;
  }
  r.bound = 4 * eps * std::sqrt(d) + (m.diameter + 6 * eps) * root;
  finish(r);
  return r;
}

BoundReport check_tangent_projection(const geometry::EmbeddedManifold& m, double delta, int trials,
                                     std::uint64_t seed) {
  check_common(delta, trials);
  const double d = m.d;
  double h = 0;
  Cloud g = capped_grid(m, m.r0() / 4, &h);
  std::vector<Mat> bases;
  for (Eigen::Index i = 0; i < g.rows(); ++i) bases.push_back(m.tangent_basis(g.row(i).transpose()));
  const double bound = 8 * std::sqrt(d * (4 * std::log(2 * d) + 2 * std::log(1 / m.r0()) + 2 * log_plus(m.volume) +
                                          2 * std::log(1 / delta)));
  BoundReport r;
  r.name = "tangent_projection";
  r.delta = delta;
  r.bound = bound;
  r.config = {{"D", m.D}, {"d", d}, {"grid_step", h}, {"grid_points", static_cast<double>(g.rows())}};
  r.statistic.resize(static_cast<std::size_t>(trials));
  r.excess.resize(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
  for (int k = 0; k < trials; ++k) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(k));
    Vec z = std_normal(rng, m.D);
    double sup = 0;
    for (const auto& B : bases) sup = std::max(sup, (B.transpose() * z).norm());
    r.statistic[static_cast<std::size_t>(k)] = sup;
    r.excess[static_cast<std::size_t>(k)] = sup - bound;
  }
  finish(r);
  return r;
}

BoundReport check_posterior_band(const FiniteMeasure& mu, const Constants& k, double log_ref, double t, double delta,
                                 int trials, std::uint64_t seed) {
  check_common(delta, trials);
  mu.validate();
  auto co = ou_coeffs(t);
  const double ratio2 = (co.c / co.sigma) * (co.c / co.sigma);
  const double band = 20 * k.d * (log_plus(co.sigma / co.c) + 4 * k.c_log) + 8 * std::log(1 / delta);
  BoundReport r;
  r.name = "posterior_band";
  r.delta = delta;
  r.bound = band;
  r.config = {{"t", t}, {"D", static_cast<double>(mu.dim())}, {"atoms", static_cast<double>(mu.size())},
              {"c_log", k.c_log}, {"log_ref", log_ref}};
  r.statistic.resize(static_cast<std::size_t>(trials));
  r.excess.resize(static_cast<std::size_t>(trials));
  Vec log_w = mu.weights.array().log();
#pragma omp parallel for schedule(static)
  for (int tr = 0; tr < trials; ++tr) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(tr));
    auto fd = diffusion::forward_sample(mu, t, rng);
    Vec lp = diffusion::log_posterior_weights(mu, t, fd.xt);
    double worst = -std::numeric_limits<double>::infinity(), span = 0;
    for (Eigen::Index j = 0; j < mu.size(); ++j) {
      if (!(mu.weights[j] > 0)) continue;
      double v = lp[j] - log_w[j] + log_ref;
      double r2 = (mu.support.row(j).transpose() - fd.x0).squaredNorm();
      double lo = -band - 0.75 * ratio2 * r2, hi = band - 0.25 * ratio2 * r2;
      worst = std::max({worst, lo - v, v - hi});
      span = std::max(span, std::abs(v + 0.5 * ratio2 * r2));
    }
    r.statistic[static_cast<std::size_t>(tr)] = span;
    r.excess[static_cast<std::size_t>(tr)] = worst;
  }
  finish(r);
  return r;
}

BoundReport check_denoiser_variance(const FiniteMeasure& mu, const Constants& k, double t, double delta, int trials,
                                    std::uint64_t seed) {
  check_common(delta, trials);
  mu.validate();
  auto co = ou_coeffs(t);
  const double mean_bound = 320 * (k.d * log_plus(co.c / co.sigma) + 2 * k.c_log + 1);
  const double bound = mean_bound / delta;
  BoundReport r;
  r.name = "denoiser_variance";
  r.delta = delta;
  r.bound = bound;
  r.config = {{"t", t}, {"D", static_cast<double>(mu.dim())}, {"c_log", k.c_log}};
  r.statistic.resize(static_cast<std::size_t>(trials));
  r.excess.resize(static_cast<std::size_t>(trials));
  std::vector<double> znorm(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
  for (int tr = 0; tr < trials; ++tr) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(tr));
    auto fd = diffusion::forward_sample(mu, t, rng);
    Vec s = diffusion::exact_score(mu, t, fd.xt);
    double v = (co.sigma * s + fd.z).squaredNorm();
    r.statistic[static_cast<std::size_t>(tr)] = v;
    r.excess[static_cast<std::size_t>(tr)] = v - bound;
    znorm[static_cast<std::size_t>(tr)] = fd.z.squaredNorm();
  }
  finish(r);
  r.extra["mean"] = mean_of(r.statistic);
  r.extra["mean_bound"] = mean_bound;
  r.extra["mean_noise_norm2"] = mean_of(znorm);
  return r;
}

BoundReport check_weight_radius(const FiniteMeasure& mu, const Cloud& anchors, double eps, const Constants& k, double t,
                                double delta, int trials, std::uint64_t seed) {
  check_common(delta, trials);
  mu.validate();
  if (anchors.rows() < 1 || anchors.cols() != mu.dim()) throw Error("weight_radius: anchor shape mismatch");
  auto co = ou_coeffs(t);
  const double sc = co.sigma / co.c;
  const double K = 128 * sc * sc * (k.d * log_plus(1 / sc) + 4 * k.d * k.c_log + std::log(1 / delta));
  const double ic2 = 1 / (co.c * co.c);
  BoundReport r;
  r.name = "weight_radius";
  r.delta = delta;
  r.bound = K;
  r.config = {{"t", t}, {"eps", eps}, {"anchors", static_cast<double>(anchors.rows())}, {"c_log", k.c_log}};
  r.statistic.resize(static_cast<std::size_t>(trials));
  r.excess.resize(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
  for (int tr = 0; tr < trials; ++tr) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(tr));
    auto fd = diffusion::forward_sample(mu, t, rng);
    Vec d2 = (anchors * co.c).rowwise().operator-(fd.xt.transpose()).rowwise().squaredNorm();
    const double dmin = d2.minCoeff();
    double worst = -std::numeric_limits<double>::infinity(), slack = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < anchors.rows(); ++i) {
      double gap = d2[i] - dmin;
      double v = (anchors.row(i).transpose() - fd.x0).squaredNorm();
      double lo = (2.0 / 3.0) * ic2 * gap - K, hi = 9 * eps * eps + 2 * ic2 * gap + K;
      worst = std::max({worst, lo - v, v - hi});
      slack = std::min({slack, v - lo, hi - v});
    }
    r.statistic[static_cast<std::size_t>(tr)] = slack;
    r.excess[static_cast<std::size_t>(tr)] = worst;
  }
  finish(r);
  return r;
}

BoundReport check_drift_freeze(const FiniteMeasure& mu, const Constants& k, double t, const std::vector<double>& gammas,
                               int trials, std::uint64_t seed) {
  if (trials < 1) throw Error("trials must be >= 1");
  if (gammas.size() < 2) throw Error("drift_freeze: need at least two step sizes");
  mu.validate();
  diffusion::ExactScore s(mu);
  auto at = ou_coeffs(t);
  BoundReport r;
  r.name = "drift_freeze";
  r.delta = 0;
  r.config = {{"t", t}, {"D", static_cast<double>(mu.dim())}, {"trials_per_gamma", static_cast<double>(trials)}};
  std::vector<double> lx, ly;
  int applicable = 0;
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    const double g = gammas[gi];
    if (!(g > 0 && g < 0.25)) throw Error("drift_freeze: step sizes must lie in (0, 1/4)");
    auto step = ou_coeffs(g), end = ou_coeffs(t + g);
    std::vector<double> vals(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
    for (int tr = 0; tr < trials; ++tr) {
      Rng rng = substream(seed, static_cast<std::uint64_t>(tr));
      auto fd = diffusion::forward_sample(mu, t, rng);
      Vec xa = step.c * fd.xt + step.sigma * std_normal(rng, mu.dim());
      Vec frozen = samplers::modified_drift(t, fd.xt, xa, t + g, s);
      vals[static_cast<std::size_t>(tr)] = (s.eval(t, fd.xt) - frozen).squaredNorm();
    }
    const double mean = mean_of(vals);
    const double inner = 20 * k.d * (log_plus(end.sigma / end.c) + 4 * k.c_log) + 9 * std::log(1 / g);
    const double bound = 66.0 * 66.0 * g * std::pow(at.sigma, -4) * inner * inner * inner;
    r.statistic.push_back(mean);
    r.extra["bound_gamma_" + std::to_string(gi)] = bound;
    if (bound < 1) {
      ++applicable;
      r.excess.push_back(mean - bound);
    } else {
      r.excess.push_back(-std::numeric_limits<double>::infinity());
    }
    lx.push_back(std::log(g));
    ly.push_back(std::log(mean));
  }
  r.bound = r.extra["bound_gamma_0"];
  r.extra["slope"] = ols_slope(lx, ly);
  r.extra["applicable"] = applicable;
  finish(r);
  return r;
}

BoundReport check_surface_gp(const fit::PiecewiseSurface& s, const FiniteMeasure& mu, const Constants& k,
                             double delta, int trials, std::uint64_t seed) {
  check_common(delta, trials);
  mu.validate();
  // Displacement y - Phi*_i o Phi_i^-1(y) for every covered atom.
  std::vector<Vec> rows;
  int uncovered = 0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    Vec y = mu.support.row(i).transpose();
    int best = -1;
    double best_rho = 0, best_dist = 0;
    for (std::size_t c = 0; c < s.charts.size(); ++c) {
      double dist = (y - s.charts[c].base).norm();
      double w = fit::rho(dist / s.eps_n);
      if (w > best_rho || (w == best_rho && w > 0 && dist < best_dist)) {
        best = static_cast<int>(c);
        best_rho = w;
        best_dist = dist;
      }
    }
    if (best < 0) {
      ++uncovered;
      continue;
    }
    const auto& c = s.charts[static_cast<std::size_t>(best)];
    Vec z = c.P.transpose() * (y - c.base);
    if (z.norm() > c.eps_n) z *= c.eps_n / z.norm();
    rows.push_back(y - fit::eval_chart(c, z));
  }
  if (rows.empty()) throw Error("surface_gp: no support point is covered by a chart");
  Cloud disp(static_cast<Eigen::Index>(rows.size()), mu.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) disp.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  const double eps = s.eps_n;
  if (!(eps > 0 && eps < 1)) throw Error("surface_gp: chart radius must lie in (0, 1)");
  const double scale = disp.rowwise().norm().maxCoeff();
  const double bound =
      scale * std::sqrt(2 * k.d * std::log(1 / eps) + log_plus(k.volume) + 2 * std::log(2 / delta));
  BoundReport r;
  r.name = "surface_gp";
  r.delta = delta;
  r.bound = bound;
  r.config = {{"eps_n", eps}, {"charts", static_cast<double>(s.charts.size())},
              {"D", static_cast<double>(mu.dim())}};
  r.extra["max_displacement"] = scale;
  r.extra["uncovered"] = uncovered;
  r.statistic.resize(static_cast<std::size_t>(trials));
  r.excess.resize(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(static)
  for (int tr = 0; tr < trials; ++tr) {
    Rng rng = substream(seed, static_cast<std::uint64_t>(tr));
    double sup = (disp * std_normal(rng, mu.dim())).cwiseAbs().maxCoeff();
    r.statistic[static_cast<std::size_t>(tr)] = sup;
    r.excess[static_cast<std::size_t>(tr)] = sup - bound;
  }
  finish(r);
  return r;
}

}  // namespace mdlab::concentration
