// SPDX-License-Identifier: Apache-2.0

#include "mdlab/estimators.hpp"
#include "mdlab/io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace mdlab;
using namespace mdlab::estimators;
using diffusion::ou_coeffs;

namespace {

Vec fd_param_grad(ReluNet net, const Vec& x, const Vec& up, double h = 1e-6) {
  Vec p = net.params(), g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vec q = p;
    q[i] += h;
    net.set_params(q);
    double fp = up.dot(net.eval(x));
    q[i] -= 2 * h;
    net.set_params(q);
    double fm = up.dot(net.eval(x));
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

StructuredParams loose_params(int d) {
  StructuredParams p;
  p.n = 100;
  p.d = d;
  p.C_e = 1e6;  // envelope inactive
  p.diam_bound = 10;
  return p;
}

// One anchor at the origin of the line spanned by u, with the conditional
// expectation of +-a u written out by hand.
StructuredScore two_point_model(const Vec& u, double a) {
  StructuredScore m;
  m.anchors = Cloud::Zero(1, u.size());
  m.frames = {u};
  m.params = loose_params(1);
  m.heads.push_back(std::make_unique<FunctionHead>(
      [a](double t, const Vec& xt) -> Vec {
        auto oc = ou_coeffs(t);
        return Vec::Constant(1, a * std::tanh(a * oc.c * xt[0] / (oc.sigma * oc.sigma)));
      },
      [](double, const Vec&) { return 1.0; }));
  return m;
}

}  // namespace

TEST_CASE("ReluNet: identity layer and zero weights") {
  ReluNet id;
  id.A = {Mat::Identity(3, 3)};
  id.b = {Vec::Zero(3)};
  Vec x(3);
  x << 0.5, 2, 0.1;
  CHECK((id.eval(x) - x).norm() == 0);
  ReluNet z;
  z.A = {Mat::Zero(4, 3), Mat::Zero(2, 4)};
  z.b = {Vec::Ones(4), Vec::Constant(2, -0.3)};
  CHECK((z.eval(x) - Vec::Constant(2, -0.3)).norm() == 0);
  CHECK_THROWS_AS(id.eval(Vec::Zero(2)), Error);
}

TEST_CASE("ReluNet: parameter gradient against central differences") {
  for (auto widths : std::vector<std::vector<int>>{{3, 5, 2}, {4, 8, 8, 1}, {2, 16, 16, 16, 3}}) {
    Rng rng = substream(static_cast<std::uint64_t>(widths.size()), 1);
    auto net = ReluNet::random(widths, 1e3, 1.0, rng);
    // Nonzero biases keep the probes off the ReLU kinks, where differences are one-sided.
    for (auto& v : net.b) v = 0.3 * std_normal(rng, static_cast<int>(v.size()));
    for (int probe = 0; probe < 20; ++probe) {
      Vec x = std_normal(rng, widths.front());
      Vec up = std_normal(rng, widths.back());
      Vec g = net.grad(x, up), fd = fd_param_grad(net, x, up);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("ReluNet: zero upstream and linearity in upstream") {
  Rng rng = substream(2, 2);
  auto net = ReluNet::random({3, 6, 2}, 10, 1, rng);
  Vec x = std_normal(rng, 3), u1 = std_normal(rng, 2), u2 = std_normal(rng, 2);
  CHECK(net.grad(x, Vec::Zero(2)).norm() == 0);
  CHECK((net.grad(x, 2 * u1 - u2) - (2 * net.grad(x, u1) - net.grad(x, u2))).norm() < 1e-12);
}

TEST_CASE("ReluNet: clipping enforces the entry bound") {
  Rng rng = substream(3, 3);
  auto net = ReluNet::random({2, 4, 1}, 0.1, 10, rng);
  net.clip();
  CHECK(net.within_bound());
  CHECK(net.params().cwiseAbs().maxCoeff() <= 0.1);
}

TEST_CASE("rho_weight: single anchor, profile values, shift invariance") {
  Cloud one = Cloud::Zero(1, 2);
  CHECK(rho_weight(0.3, Vec::Ones(2), one, 1.0)[0] == 1);
  // Gap ratio r: anchors at squared distance 0 and 2 C r from x at c_t = 1 scale.
  const double t = 0.2, C = 0.5, c = ou_coeffs(t).c;
  for (auto [ratio, want] : std::vector<std::pair<double, double>>{{0.25, 1.0}, {0.75, 0.5}, {1.5, 0.0}}) {
    Cloud a(2, 1);
    a << 0, std::sqrt(2 * C * ratio) / c;
    Vec r = rho_weight(t, Vec::Zero(1), a, C);
    CHECK(r[0] == 1);
    CHECK(r[1] == doctest::Approx(want).epsilon(1e-12));
  }
  // Adding a constant to all squared distances: move x orthogonally.
  Cloud a(3, 2);
  a << 0, 0, 0.3, 0, -0.2, 0;
  Vec x(2), x2(2);
  x << 0.05, 0;
  x2 << 0.05, 7;
  CHECK((rho_weight(t, x, a, 0.1) - rho_weight(t, x2, a, 0.1)).norm() < 1e-12);
}

TEST_CASE("structured_eval: point-mass anchor and duplicated anchors") {
  StructuredScore m;
  Vec G(3);
  G << 0.2, -0.1, 0.4;
  m.anchors = G.transpose();
  m.frames = {Mat::Identity(3, 2)};
  m.params = loose_params(2);
  m.heads.push_back(std::make_unique<FunctionHead>([](double, const Vec&) { return Vec::Zero(2).eval(); },
                                                   [](double, const Vec&) { return 1.0; }));
  Vec x(3);
  x << 1, 0.5, -0.3;
  const double t = 0.4;
  auto oc = ou_coeffs(t);
  Vec want = (oc.c * G - x) / (oc.sigma * oc.sigma);
  CHECK((m.eval(t, x) - want).norm() < 1e-12);
  StructuredScore two = m;
  two.anchors = Cloud(2, 3);
  two.anchors << G.transpose(), G.transpose();
  two.frames.push_back(m.frames[0]);
  two.heads.push_back(m.heads[0]->clone());
  CHECK((two.eval(t, x) - want).norm() < 1e-12);
}

TEST_CASE("structured_eval: hand-built model matches the exact 2-point score") {
  Rng rng = substream(4, 4);
  Vec u = std_normal(rng, 8).normalized();
  Cloud pts(2, 8);
  pts.row(0) = 0.5 * u.transpose();
  pts.row(1) = -0.5 * u.transpose();
  FiniteMeasure mu = FiniteMeasure::uniform(pts);
  auto m = two_point_model(u, 0.5);
  for (int i = 0; i < 50; ++i) {
    double t = 0.05 + 1.5 * uniform01(rng);
    Vec x = std_normal(rng, 8);
    Vec e = diffusion::exact_score(mu, t, x);
    CHECK((m.eval(t, x) - e).norm() < 1e-6 * std::max(1.0, e.norm()));
  }
}

TEST_CASE("structured_eval: invariant under anchor re-ordering (property)") {
  Rng rng = substream(5, 5);
  for (int rep = 0; rep < 10; ++rep) {
    StructuredScore m;
    m.anchors = Cloud(3, 4);
    for (int i = 0; i < 3; ++i) m.anchors.row(i) = 0.3 * std_normal(rng, 4).transpose();
    m.params = loose_params(1);
    m.params.rho_const = 0.05;
    for (int i = 0; i < 3; ++i) {
      m.frames.push_back(std_normal(rng, 4).normalized());
      m.heads.push_back(std::make_unique<NetHead>(NetHead::random(1, 2, 8, 100, 1, rng)));
    }
    StructuredScore p = m;
    std::vector<int> perm{2, 0, 1};
    for (int k = 0; k < 3; ++k) {
      p.anchors.row(k) = m.anchors.row(perm[static_cast<std::size_t>(k)]);
      p.frames[static_cast<std::size_t>(k)] = m.frames[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
      p.heads[static_cast<std::size_t>(k)] = m.heads[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]->clone();
    }
    for (int probe = 0; probe < 10; ++probe) {
      Vec x = 0.5 * std_normal(rng, 4);
      double t = 0.1 + uniform01(rng);
      CHECK((m.eval(t, x) - p.eval(t, x)).norm() < 1e-12 * (1 + m.eval(t, x).norm()));
    }
  }
}

TEST_CASE("structured_eval: weight floor, envelope and fallback") {
  StructuredScore m;
  m.anchors = Cloud(2, 1);
  m.anchors << 0, 1;
  m.frames = {Mat::Ones(1, 1), Mat::Ones(1, 1)};
  m.params.n = 10;
  m.params.rho_const = 1e-6;  // the far anchor gets rho 0
  m.heads.push_back(std::make_unique<FunctionHead>([](double, const Vec&) { return Vec::Constant(1, 1e9).eval(); },
                                                   [](double, const Vec&) { return -5.0; }));
  m.heads.push_back(m.heads[0]->clone());
  auto tr = m.trace(0.3, Vec::Constant(1, 0.1));
  CHECK(tr.w[0] == doctest::Approx(m.weight_floor()));
  CHECK(tr.pi[0] == 1);
  CHECK(tr.pi[1] == 0);
  auto oc = ou_coeffs(0.3);
  CHECK(std::abs(oc.c * tr.e[0][0] - tr.local[0][0]) <= oc.sigma * m.envelope() * (1 + 1e-12));
  CHECK(std::abs(tr.e[0][0]) <= m.params.diam_bound);
}

TEST_CASE("build_anchor_frames: all samples, plane data, cap") {
  Rng rng = substream(6, 6);
  Mat U = Mat::Zero(6, 2);
  U(0, 0) = U(3, 1) = 1;
  Cloud Y(40, 6);
  for (int i = 0; i < 40; ++i) Y.row(i) = (U * (0.3 * std_normal(rng, 2))).transpose();
  auto af = build_anchor_frames(Y, 40, 0.5, 2, 1);
  CHECK(af.anchors.rows() == 40);
  for (int i = 0; i < 40; ++i) {
    bool found = false;
    for (int j = 0; j < 40; ++j) found = found || (af.anchors.row(i) - Y.row(j)).norm() == 0;
    CHECK(found);
  }
  // Outlying anchors may see a single neighbor and get a rank-1 frame.
  int full = 0;
  for (std::size_t i = 0; i < af.frames.size(); ++i) {
    if (af.fallback[i]) continue;
    CHECK(af.frames[i].cols() <= 2);
    full += af.frames[i].cols() == 2;
    CHECK((af.frames[i] - U * U.transpose() * af.frames[i]).norm() < 1e-10);
  }
  CHECK(full >= 36);
  auto capped = build_anchor_frames(Y, 5, 0.5, 2, 1, 1);
  for (std::size_t i = 0; i < capped.frames.size(); ++i) {
    CHECK(capped.frames[i].cols() == 1);
    if (!capped.fallback[i]) CHECK(capped.truncated[i]);
  }
  CHECK_THROWS_AS(build_anchor_frames(Y, 41, 0.5, 2, 1), Error);
}

TEST_CASE("batch_risk: parameter gradient against central differences") {
  Rng rng = substream(7, 7);
  StructuredScore m;
  m.anchors = Cloud(2, 3);
  m.anchors << 0.2, 0, 0, -0.2, 0.05, 0;
  m.params = loose_params(1);
  m.params.rho_const = 10;  // both anchors active
  for (int i = 0; i < 2; ++i) {
    m.frames.push_back(std_normal(rng, 3).normalized());
    m.heads.push_back(std::make_unique<NetHead>(NetHead::random(1, 2, 6, 100, 0.5, rng)));
  }
  Cloud Y = m.anchors;
  TrainConfig cfg;
  cfg.batch = 4;
  std::vector<Vec> grads;
  Rng r0 = substream(8, 0);
  batch_risk(m, Y, cfg, r0, &grads);
  for (std::size_t i = 0; i < 2; ++i) {
    auto* h = dynamic_cast<NetHead*>(m.heads[i].get());
    Vec p(h->e_net.param_count() + h->w_net.param_count());
    p << h->e_net.params(), h->w_net.params();
    Vec fd(p.size());
    const double eps = 1e-6;
    auto risk_at = [&](const Vec& q) {
      StructuredScore mm = m;
      auto* hh = dynamic_cast<NetHead*>(mm.heads[i].get());
      hh->e_net.set_params(q.head(hh->e_net.param_count()));
      hh->w_net.set_params(q.tail(hh->w_net.param_count()));
      Rng r = substream(8, 0);
      return batch_risk(mm, Y, cfg, r, nullptr);
    };
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      Vec q = p;
      q[k] += eps;
      double fp = risk_at(q);
      q[k] -= 2 * eps;
      fd[k] = (fp - risk_at(q)) / (2 * eps);
    }
    CHECK((grads[i] - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
  }
}

TEST_CASE("erm_train: zero steps, exact model, constraints") {
  Rng rng = substream(9, 9);
  Vec u = std_normal(rng, 4).normalized();
  Cloud Y(2, 4);
  Y.row(0) = 0.5 * u.transpose();
  Y.row(1) = -0.5 * u.transpose();
  TrainConfig cfg;
  cfg.steps = 0;
  auto exact = two_point_model(u, 0.5);
  auto r0 = erm_train(exact, Y, cfg);
  CHECK(r0.risk_trace.empty());
  CHECK((r0.model.eval(0.15, Vec::Ones(4)) - exact.eval(0.15, Vec::Ones(4))).norm() == 0);
  // Nothing trainable: the trace is flat up to Monte Carlo noise.
  cfg.steps = 200;
  cfg.batch = 64;
  auto flat = erm_train(exact, Y, cfg);
  std::vector<double> a(flat.risk_trace.begin(), flat.risk_trace.begin() + 100),
      b(flat.risk_trace.begin() + 100, flat.risk_trace.end());
  auto sa = diffusion::summarize(a), sb = diffusion::summarize(b);
  CHECK(std::abs(sa.value - sb.value) < 4 * std::hypot(sa.se, sb.se));
  // Trainable heads keep their entry bound after every step.
  StructuredScore net;
  net.anchors = Cloud::Zero(1, 4);
  net.frames = {u};
  net.params = loose_params(1);
  net.heads.push_back(std::make_unique<NetHead>(NetHead::random(1, 3, 8, 0.5, 1, rng)));
  cfg.steps = 50;
  cfg.lr = 1e-2;
  auto tr = erm_train(net, Y, cfg);
  auto* h = dynamic_cast<NetHead*>(tr.model.heads[0].get());
  CHECK(h->e_net.within_bound());
  CHECK(h->w_net.within_bound());
  CHECK(tr.risk_trace.size() == 50);
}

TEST_CASE("checkpoint: save and load round trip") {
  Rng rng = substream(10, 10);
  StructuredScore m;
  m.anchors = Cloud(2, 5);
  m.anchors.row(0) = std_normal(rng, 5).transpose();
  m.anchors.row(1) = std_normal(rng, 5).transpose();
  m.params = loose_params(2);
  m.params.rho_const = 0.7;
  for (int i = 0; i < 2; ++i) {
    Mat G(5, 2);
    G.col(0) = std_normal(rng, 5);
    G.col(1) = std_normal(rng, 5);
    Eigen::HouseholderQR<Mat> qr(G);
    m.frames.push_back(qr.householderQ() * Mat::Identity(5, 2));
    m.heads.push_back(std::make_unique<NetHead>(NetHead::random(2, 3, 7, 10, 1, rng)));
  }
  auto path = (std::filesystem::temp_directory_path() / "mdlab_ckpt_test.csv").string();
  io::save_checkpoint(path, m);
  auto back = io::load_checkpoint(path);
  for (int probe = 0; probe < 10; ++probe) {
    Vec x = std_normal(rng, 5);
    CHECK((back.eval(0.3, x) - m.eval(0.3, x)).norm() == 0);
  }
  CHECK(back.params.rho_const == m.params.rho_const);
  // A layer whose recorded B is below its entries, or differs from its net's, is rejected.
  std::string text = io::read_file(path);
  auto at = text.find("layer,");
  REQUIRE(at != std::string::npos);
  std::size_t field = at;
  for (int k = 0; k < 6; ++k) field = text.find(',', field) + 1;
  text.replace(field, text.find(',', field) - field, "1e-9");
  io::write_text(path, text);
  CHECK_THROWS_AS(io::load_checkpoint(path), Error);
  io::write_text(path, "not-a-checkpoint\n");
  CHECK_THROWS_AS(io::load_checkpoint(path), Error);
  std::filesystem::remove(path);
}
