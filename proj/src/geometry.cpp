// SPDX-License-Identifier: Apache-2.0

#include "mdlab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mdlab::geometry {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double monomial(const Vec& z, const std::vector<int>& e) {
  double v = 1.0;
  for (std::size_t j = 0; j < e.size(); ++j) v *= std::pow(z[static_cast<Eigen::Index>(j)], e[j]);
  return v;
}

// d/dz_a of z^e
double monomial_d1(const Vec& z, const std::vector<int>& e, std::size_t a) {
  if (e[a] == 0) return 0.0;
  double v = e[a];
  for (std::size_t j = 0; j < e.size(); ++j) {
    int p = j == a ? e[j] - 1 : e[j];
    v *= std::pow(z[static_cast<Eigen::Index>(j)], p);
  }
  return v;
}

double monomial_d2(const Vec& z, const std::vector<int>& e, std::size_t a, std::size_t b) {
  std::vector<int> p = e;
  double c = 1.0;
  if (p[a] == 0) return 0.0;
  c *= p[a]--;
  if (p[b] == 0) return 0.0;
  c *= p[b]--;
  return c * monomial(z, p);
}

// Orthonormal basis of the complement of unit vector u in R^m (m x (m-1)).
Mat complement_basis(const Vec& u) {
  Eigen::HouseholderQR<Mat> qr(u);
  Mat q = qr.householderQ() * Mat::Identity(u.size(), u.size());
  return q.rightCols(u.size() - 1);
}

Vec uniform_in_ball(Rng& rng, int d, double R) {
  Vec g = std_normal(rng, d);
  double r = R * std::pow(uniform01(rng), 1.0 / d);
  return g * (r / g.norm());
}

// Parameter-ball scan points for poly_graph certification.
std::vector<Vec> scan_points(int d, double R) {
  std::vector<Vec> pts;
  if (d == 1) {
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      Vec z(1);
      z[0] = -R + 2 * R * i / (n - 1);
      pts.push_back(z);
    }
  } else if (d == 2) {
    const int n = 100;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        Vec z(2);
        z << -R + 2 * R * i / (n - 1), -R + 2 * R * j / (n - 1);
        if (z.norm() <= R) pts.push_back(z);
      }
  } else {
    Rng rng = substream(0x5ca9ULL, static_cast<std::uint64_t>(d));
    for (int i = 0; i < 10000; ++i) pts.push_back(uniform_in_ball(rng, d, R));
  }
  return pts;
}

std::vector<Vec> unit_directions(int d) {
  std::vector<Vec> w;
  if (d == 1) {
    w.push_back(Vec::Ones(1));
  } else if (d == 2) {
    for (int i = 0; i < 64; ++i) {
      double a = std::numbers::pi * i / 64;
      Vec v(2);
      v << std::cos(a), std::sin(a);
      w.push_back(v);
    }
  } else {
    Rng rng = substream(0xd1ecULL, static_cast<std::uint64_t>(d));
    for (int i = 0; i < 256; ++i) w.push_back(std_normal(rng, d).normalized());
  }
  return w;
}

}  // namespace

double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

double EmbeddedManifold::r0() const {
  double inv_l = L_M > 0 ? 1.0 / L_M : kInf;
  return std::min({1.0, tau, inv_l}) / 8.0;
}

Vec EmbeddedManifold::f(const Vec& z) const {
  Vec out = Vec::Zero(spec.codim);
  for (const auto& t : spec.terms) out += t.coef * monomial(z, t.exps);
  return out;
}

Mat EmbeddedManifold::grad_f(const Vec& z) const {
  Mat g = Mat::Zero(spec.codim, d);
  for (const auto& t : spec.terms)
    for (int a = 0; a < d; ++a) g.col(a) += t.coef * monomial_d1(z, t.exps, static_cast<std::size_t>(a));
  return g;
}

Vec EmbeddedManifold::point(const Vec& param) const {
  switch (spec.kind) {
    case Kind::circle: {
      Vec u(2);
      u << spec.radius * std::cos(param[0]), spec.radius * std::sin(param[0]);
      return embed(u);
    }
    case Kind::sphere:
      return embed(param.normalized() * spec.radius);
    case Kind::poly_graph: {
      Vec u(model_dim());
      u << param, f(param);
      return embed(u);
    }
  }
  throw Error("unknown manifold kind");
}

Vec EmbeddedManifold::project(const Vec& y, double* dist) const {
  Vec u = canonical(y);
  double perp2 = (y - embed(u)).squaredNorm();
  if (spec.kind != Kind::poly_graph) {
    double nu = u.norm();
    Vec dir = nu > 0 ? Vec(u / nu) : Vec(Vec::Unit(u.size(), 0));
    double rad = nu - spec.radius;
    if (dist) *dist = std::sqrt(perp2 + rad * rad);
    return embed(dir * spec.radius);
  }
  // Levenberg-Marquardt on ||(z, f(z)) - u||^2 over the parameter ball.
  const double R = spec.chart_radius;
  auto clamp = [&](Vec z) {
    double n = z.norm();
    return n > R ? Vec(z * (R / n)) : z;
  };
  auto resid = [&](const Vec& z) {
    Vec r(model_dim());
    r << z - u.head(d), f(z) - u.tail(spec.codim);
    return r;
  };
  Vec z = clamp(u.head(d));
  double cost = resid(z).squaredNorm();
  double lambda = 1e-6;
  for (int it = 0; it < 200; ++it) {
    Mat J(model_dim(), d);
    J << Mat::Identity(d, d), grad_f(z);
    Vec r = resid(z);
    Mat A = J.transpose() * J;
    A.diagonal().array() += lambda;
    Vec step = A.ldlt().solve(-J.transpose() * r);
    Vec zn = clamp(z + step);
    double cn = resid(zn).squaredNorm();
    if (cn < cost) {
      double gain = cost - cn;
      z = zn;
      cost = cn;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (gain < 1e-30 || step.norm() < 1e-15) break;
    } else {
      lambda *= 10;
      if (lambda > 1e12) break;
    }
  }
  if (dist) *dist = std::sqrt(perp2 + cost);
  return point(z);
}

double EmbeddedManifold::distance(const Vec& y) const {
  double dd = 0;
  project(y, &dd);
  return dd;
}

Mat EmbeddedManifold::tangent_basis(const Vec& y) const {
  Vec u = canonical(y);
  switch (spec.kind) {
    case Kind::circle: {
      Vec t(2);
      double n = u.norm();
      t << -u[1] / n, u[0] / n;
      return frame * t;
    }
    case Kind::sphere:
      return frame * complement_basis(u.normalized());
    case Kind::poly_graph: {
      Vec z = u.head(d);
      Mat J(model_dim(), d);
      J << Mat::Identity(d, d), grad_f(z);
      Eigen::HouseholderQR<Mat> qr(J);
      Mat q = qr.householderQ() * Mat::Identity(model_dim(), d);
      return frame * q;
    }
  }
  throw Error("unknown manifold kind");
}

Vec EmbeddedManifold::chart(const Vec& y, const Vec& z) const {
  if (z.size() != d) throw Error("chart: coordinate dimension mismatch");
  if (spec.kind == Kind::poly_graph) return point(canonical(y).head(d) + z);
  double r = spec.radius;
  if (z.norm() >= r) throw Error("chart: coordinates outside the chart domain");
  Vec u = canonical(y).normalized();
  Mat t = spec.kind == Kind::circle ? Mat(frame.transpose() * tangent_basis(y)) : complement_basis(u);
  return embed(std::sqrt(r * r - z.squaredNorm()) * u + t * z);
}

Cloud EmbeddedManifold::grid(double h) const {
  std::vector<Vec> pts;
  if (spec.kind == Kind::circle) {
    int n = std::max(3, static_cast<int>(std::ceil(2 * std::numbers::pi * spec.radius / h)));
    for (int i = 0; i < n; ++i) {
      Vec p(1);
      p[0] = 2 * std::numbers::pi * i / n;
      pts.push_back(point(p));
    }
  } else if (spec.kind == Kind::sphere) {
    int n = std::max(4, static_cast<int>(std::ceil(volume / std::pow(h, d))));
    if (d == 2) {
      const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < n; ++i) {
        double zc = 1.0 - 2.0 * (i + 0.5) / n;
        double rr = std::sqrt(1 - zc * zc);
        Vec p(3);
        p << rr * std::cos(golden * i), rr * std::sin(golden * i), zc;
        pts.push_back(point(p));
      }
    } else {
      Rng rng = substream(0x9e11ULL, static_cast<std::uint64_t>(n));
      for (int i = 0; i < n; ++i) pts.push_back(point(std_normal(rng, d + 1)));
    }
  } else {
    const double R = spec.chart_radius;
    int per = std::max(2, static_cast<int>(std::ceil(2 * R / h)) + 1);
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
      Vec z(d);
      for (int a = 0; a < d; ++a) z[a] = -R + 2 * R * idx[static_cast<std::size_t>(a)] / (per - 1);
      if (z.norm() <= R) pts.push_back(point(z));
      int a = 0;
      while (a < d && ++idx[static_cast<std::size_t>(a)] == per) idx[static_cast<std::size_t>(a++)] = 0;
      if (a == d) break;
    }
  }
  Cloud c(static_cast<Eigen::Index>(pts.size()), D);
  for (std::size_t i = 0; i < pts.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return c;
}

EmbeddedManifold make_manifold(const ManifoldSpec& spec, int D, std::uint64_t seed) {
  EmbeddedManifold m;
  m.spec = spec;
  int model = 0;
  switch (spec.kind) {
    case Kind::circle:
      m.spec.d = 1;
      model = 2;
      break;
    case Kind::sphere:
      if (spec.d < 1) throw Error("sphere: d must be >= 1");
      model = spec.d + 1;
      break;
    case Kind::poly_graph:
      if (spec.d < 1 || spec.codim < 1) throw Error("poly_graph: d and codim must be >= 1");
      if (spec.chart_radius <= 0) throw Error("poly_graph: chart_radius must be positive");
      for (const auto& t : spec.terms)
        if (static_cast<int>(t.exps.size()) != spec.d || t.coef.size() != spec.codim)
          throw Error("poly_graph: term shape does not match (d, codim)");
      model = spec.d + spec.codim;
      break;
  }
  if ((spec.kind != Kind::poly_graph) && spec.radius <= 0) throw Error("radius must be positive");
  m.d = m.spec.d;
  if (D < model) throw Error("ambient dimension D=" + std::to_string(D) + " below model dimension " + std::to_string(model));
  m.D = D;
  m.offset = Vec::Zero(D);
  if (spec.identity_frame) {
    m.frame = Mat::Identity(D, model);
  } else {
    Rng rng = substream(seed, 0);
    Mat g(D, model);
    for (int j = 0; j < model; ++j) g.col(j) = std_normal(rng, D);
    Eigen::HouseholderQR<Mat> qr(g);
    m.frame = qr.householderQ() * Mat::Identity(D, model);
  }

  if (spec.kind != Kind::poly_graph) {
    double r = spec.radius;
    m.tau = r;
    m.L_M = 1.0 / r;
    m.diameter = 2 * r;
    int d = m.d;
    // area of the d-sphere of radius r
    m.volume = 2 * std::pow(std::numbers::pi, (d + 1) / 2.0) / std::tgamma((d + 1) / 2.0) * std::pow(r, d);
  } else {
    const int d = m.d;
    const double R = spec.chart_radius;
    auto pts = scan_points(d, R);
    auto dirs = unit_directions(d);
    double kmax = 0, jac_sum = 0, jac_max = 0;
    std::vector<Vec> images;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const Vec& z = pts[p];
      Mat J(model, d);
      J << Mat::Identity(d, d), m.grad_f(z);
      Mat G = J.transpose() * J;
      double jac = std::sqrt(G.determinant());
      jac_sum += jac;
      jac_max = std::max(jac_max, jac);
      Mat N = Mat::Identity(model, model) - J * G.ldlt().solve(J.transpose());
      for (const Vec& w0 : dirs) {
        Vec w = w0 / std::sqrt(w0.dot(G * w0));
        Vec h = Vec::Zero(model);
        for (const auto& t : spec.terms)
          for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
              h.tail(spec.codim) += t.coef * (w[a] * w[b] *
                                              monomial_d2(z, t.exps, static_cast<std::size_t>(a), static_cast<std::size_t>(b)));
        kmax = std::max(kmax, (N * h).norm());
      }
      if (p % std::max<std::size_t>(1, pts.size() / 400) == 0) {
        Vec u(model);
        u << z, m.f(z);
        images.push_back(u);
      }
    }
    m.jac_max = jac_max;
    m.volume = jac_sum / static_cast<double>(pts.size()) * unit_ball_volume(d) * std::pow(R, d);
    for (std::size_t a = 0; a < images.size(); ++a)
      for (std::size_t b = a + 1; b < images.size(); ++b) m.diameter = std::max(m.diameter, (images[a] - images[b]).norm());
    m.L_M = kmax;
    m.tau = kmax > 0 ? 1.0 / (2 * kmax) : kInf;
    if (!(m.tau > 0)) throw Error("poly_graph: reach lower bound is not positive");
  }
  m.unit_scale = m.diameter > 1 ? 1.0 / m.diameter : 1.0;
  return m;
}

std::pair<double, double> density_bounds(const EmbeddedManifold& m, const DensitySpec& dens) {
  if (dens.kind == DensitySpec::Kind::uniform) return {1.0 / m.volume, 1.0 / m.volume};
  if (m.spec.kind == Kind::poly_graph) throw Error("cosine density is defined for circle and sphere only");
  double a = dens.amplitude;
  if (a < 0 || a >= 1) throw Error("cosine density amplitude must lie in [0, 1)");
  return {(1 - a) / m.volume, (1 + a) / m.volume};
}

FiniteMeasure sample_measure(const EmbeddedManifold& m, const DensitySpec& dens, int n, std::uint64_t seed) {
  if (n < 1) throw Error("sample_measure: n must be >= 1");
  density_bounds(m, dens);  // validates the density
  Rng rng = substream(seed, 1);
  const double a = dens.kind == DensitySpec::Kind::cosine ? dens.amplitude : 0.0;
  Cloud out(n, m.D);
  long proposed = 0, accepted = 0;
  while (accepted < n) {
    ++proposed;
    if (proposed > 10000 && static_cast<double>(accepted) / static_cast<double>(proposed) < 1e-3)
      throw Error("sample_measure: acceptance rate below 1e-3 after " + std::to_string(proposed) + " proposals");
    Vec y;
    double accept = 1.0;
    switch (m.spec.kind) {
      case Kind::circle: {
        Vec p(1);
        p[0] = 2 * std::numbers::pi * uniform01(rng);
        y = m.point(p);
        accept = (1 + a * std::cos(p[0])) / (1 + a);
        break;
      }
      case Kind::sphere: {
        Vec g = std_normal(rng, m.d + 1);
        y = m.point(g);
        accept = (1 + a * g[0] / g.norm()) / (1 + a);
        break;
      }
      case Kind::poly_graph: {
        Vec z = uniform_in_ball(rng, m.d, m.spec.chart_radius);
        Mat J(m.model_dim(), m.d);
        J << Mat::Identity(m.d, m.d), m.grad_f(z);
        accept = std::sqrt((J.transpose() * J).determinant()) / m.jac_max;
        y = m.point(z);
        break;
      }
    }
    if (accept >= 1.0 || uniform01(rng) < accept) out.row(accepted++) = y.transpose();
  }
  return FiniteMeasure::uniform(std::move(out));
}

EpsNet eps_net(const Cloud& points, double eps) {
  if (!(eps > 0)) throw Error("eps_net: epsilon must be positive");
  EpsNet net;
  net.epsilon = eps;
  const double half2 = 0.25 * eps * eps;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    bool admit = true;
    for (auto j : idx)
      if ((points.row(i) - points.row(j)).squaredNorm() <= half2) {
        admit = false;
        break;
      }
    if (admit) idx.push_back(i);
  }
  net.index = idx;
  net.centers.resize(static_cast<Eigen::Index>(idx.size()), points.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) net.centers.row(static_cast<Eigen::Index>(k)) = points.row(idx[k]);
  return net;
}

bool is_dense(const EpsNet& net, const Cloud& points) {
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    bool hit = false;
    for (Eigen::Index j = 0; j < net.centers.rows() && !hit; ++j)
      hit = (points.row(i) - net.centers.row(j)).norm() <= net.epsilon;
    if (!hit) return false;
  }
  return true;
}

bool is_sparse(const EpsNet& net) {
  for (Eigen::Index i = 0; i < net.centers.rows(); ++i)
    for (Eigen::Index j = i + 1; j < net.centers.rows(); ++j)
      if ((net.centers.row(i) - net.centers.row(j)).norm() <= net.epsilon / 2) return false;
  return true;
}

Mat tangent_projector(const EmbeddedManifold& m, const Vec& y) {
  if (y.size() != m.D) throw Error("tangent_projector: dimension mismatch");
  double dist = m.distance(y);
  if (!(dist < 1e-8)) throw Error("tangent_projector: point is off the manifold (distance " + std::to_string(dist) + ")");
  Mat b = m.tangent_basis(y);
  return b * b.transpose();
}

double complexity_constant(const EmbeddedManifold& m, double p_min, double p_max) {
  if (!(p_min > 0) || p_max < p_min) throw Error("complexity_constant: invalid density bounds");
  double lb = std::max<double>(m.d, 4.0);
  lb = std::max(lb, -std::log(p_min));
  lb = std::max(lb, std::log(p_max));
  double lv = std::log(m.volume);
  if (lv > 0) lb = std::max(lb, std::log(lv));
  double inv_l = m.L_M > 0 ? 1.0 / m.L_M : kInf;
  lb = std::max(lb, -std::log(std::min(m.tau, inv_l)));
  return lb * (1 + 1e-9) + 1e-12;
}

}  // namespace mdlab::geometry
