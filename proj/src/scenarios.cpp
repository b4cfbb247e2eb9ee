// SPDX-License-Identifier: Apache-2.0

#include "mdlab/scenarios.hpp"

#include "mdlab/concentration.hpp"
#include "mdlab/diffusion.hpp"
#include "mdlab/estimators.hpp"
#include "mdlab/fit.hpp"
#include "mdlab/metrics.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

namespace mdlab::scenarios {

namespace {

const std::vector<double> kDSweep{8, 64, 512};

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

std::string axis_tag(double v) {
  std::string s = io::fmt(v);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

}  // namespace

const std::vector<ScenarioInfo>& registry() {
  static const std::vector<ScenarioInfo> r{
      {"concentration.inner_product", "sup over manifold pairs of |<Z, y - y'>| against its high-probability bound"},
      {"concentration.tangent_projection", "sup over the manifold of the tangent projection of Z"},
      {"concentration.posterior_band", "two-sided band on the log posterior density of X(0) given X(t)"},
      {"concentration.denoiser_variance", "E||sigma_t s + Z||^2 across ambient dimensions"},
      {"concentration.weight_radius", "sandwich of ||X(0) - G_i||^2 by squared-distance gaps to a net"},
      {"concentration.drift_freeze", "error of the frozen drift versus step size"},
      {"concentration.surface_gp", "noise correlation with the displacement of a fitted surface"},
      {"fit.rate", "Hausdorff error of the local polynomial fit versus sample size"},
      {"sampler.compare", "classic versus modified scheme error across ambient dimensions"},
      {"sampler.k_sweep", "modified scheme error versus number of steps"},
      {"bounds.sml_w2", "score matching loss between two measures against their W2 distance"},
      {"bounds.kl_dissipation", "time derivative of KL between OU-evolved Gaussians"},
      {"estimator.erm_demo", "trained structured score versus the zero score on a two-point task"},
  };
  return r;
}

ExperimentSpec default_spec(const std::string& scenario) {
  const auto& reg = registry();
  if (std::none_of(reg.begin(), reg.end(), [&](const ScenarioInfo& i) { return i.name == scenario; }))
    throw Error("scenario: unknown scenario '" + scenario + "'");
  ExperimentSpec s;
  s.scenario = scenario;
  if (scenario == "concentration.inner_product" || scenario == "concentration.tangent_projection") {
    s.sweep.D = kDSweep;
  } else if (scenario == "concentration.posterior_band") {
    s.sweep.D = {8};
    s.sweep.t = {0.01};
  } else if (scenario == "concentration.denoiser_variance") {
    s.sweep.D = kDSweep;
    s.sweep.t = {0.05};
  } else if (scenario == "concentration.weight_radius") {
    s.sweep.D = {8};
    s.sweep.t = {0.05};
  } else if (scenario == "concentration.drift_freeze") {
    s.sweep.D = {8};
    s.sweep.t = {0.2};
    s.sweep.gamma = {1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
    s.measure.n = 2;
  } else if (scenario == "concentration.surface_gp") {
    s.sweep.D = {8};
    s.measure.n = 400;
  } else if (scenario == "fit.rate") {
    s.sweep.D = {8};
    s.sweep.n = {100, 200, 400, 800, 1600};
    s.replicates = 5;
  } else if (scenario == "sampler.compare") {
    s.sweep.D = {16, 256};
    s.sweep.K = {32};
    s.measure.n = 50;
    s.sampler.n_paths = 1000;
    s.replicates = 10;
  } else if (scenario == "sampler.k_sweep") {
    s.sweep.D = {1};
    s.sweep.K = {16, 64, 256};
    s.sampler.n_paths = 200000;
  } else if (scenario == "bounds.sml_w2") {
    s.sweep.D = {2};
    s.sweep.t = {0.1, 0.15};
    s.measure.n = 4;
    s.trials = 100;
  } else if (scenario == "bounds.kl_dissipation") {
    s.sweep.D = {3};
    s.sweep.t = {0.1, 0.5, 1.0, 2.0};
  } else if (scenario == "estimator.erm_demo") {
    s.sweep.D = {8};
    s.trials = 512;
  }
  return s;
}

// ---- parsing --------------------------------------------------------------

namespace {

template <class T>
T get(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw Error(key + ": invalid value");
  }
}

void check_keys(const YAML::Node& n, const std::string& where, const std::set<std::string>& allowed) {
  if (!n.IsMap()) throw Error(where + ": expected a table");
  for (auto it = n.begin(); it != n.end(); ++it) {
    auto k = it->first.as<std::string>();
    if (!allowed.count(k)) throw Error((where.empty() ? "" : where + ".") + k + ": unknown key");
  }
}

template <class T>
void set_if(const YAML::Node& n, const char* key, const std::string& where, T& out) {
  if (n[key]) out = get<T>(n[key], where + "." + key);
}

}  // namespace

ExperimentSpec parse_spec(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(std::string("spec: YAML parse error: ") + e.what());
  }
  if (!root.IsMap()) throw Error("spec: top level must be a table");
  check_keys(root, "",
             {"schema", "scenario", "manifold", "measure", "sampler", "estimator", "sweep", "seed", "output_dir",
              "trials", "delta", "replicates"});
  if (!root["scenario"]) throw Error("scenario: missing key");
  ExperimentSpec s = default_spec(get<std::string>(root["scenario"], "scenario"));
  if (root["schema"]) {
    s.schema = get<int>(root["schema"], "schema");
    if (s.schema != kSchemaVersion) throw Error("schema: unsupported version " + std::to_string(s.schema));
  }
  if (root["seed"]) s.seed = get<std::uint64_t>(root["seed"], "seed");
  if (root["output_dir"]) s.output_dir = get<std::string>(root["output_dir"], "output_dir");
  if (root["trials"]) s.trials = get<int>(root["trials"], "trials");
  if (root["delta"]) s.delta = get<double>(root["delta"], "delta");
  if (root["replicates"]) s.replicates = get<int>(root["replicates"], "replicates");
  if (auto n = root["manifold"]) {
    check_keys(n, "manifold", {"kind", "d", "radius", "codim", "chart_radius", "terms", "seed"});
    auto& b = s.manifold;
    set_if(n, "kind", "manifold", b.kind);
    set_if(n, "d", "manifold", b.d);
    set_if(n, "radius", "manifold", b.radius);
    set_if(n, "codim", "manifold", b.codim);
    set_if(n, "chart_radius", "manifold", b.chart_radius);
    set_if(n, "seed", "manifold", b.seed);
    if (auto t = n["terms"]) {
      if (!t.IsSequence()) throw Error("manifold.terms: expected a list");
      b.terms.clear();
      for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string where = "manifold.terms[" + std::to_string(i) + "]";
        check_keys(t[i], where, {"exps", "coef"});
        if (!t[i]["exps"] || !t[i]["coef"]) throw Error(where + ": needs exps and coef");
        geometry::PolyTerm pt;
        pt.exps = get<std::vector<int>>(t[i]["exps"], where + ".exps");
        auto c = get<std::vector<double>>(t[i]["coef"], where + ".coef");
        pt.coef = Eigen::Map<Vec>(c.data(), static_cast<Eigen::Index>(c.size()));
        b.terms.push_back(std::move(pt));
      }
    }
  }
  if (auto n = root["measure"]) {
    check_keys(n, "measure", {"density", "amplitude", "n"});
    set_if(n, "density", "measure", s.measure.density);
    set_if(n, "amplitude", "measure", s.measure.amplitude);
    set_if(n, "n", "measure", s.measure.n);
  }
  if (auto n = root["sampler"]) {
    check_keys(n, "sampler", {"scheme", "kappa", "L", "T_bar", "T_under", "n_paths"});
    auto& b = s.sampler;
    set_if(n, "scheme", "sampler", b.scheme);
    set_if(n, "kappa", "sampler", b.kappa);
    set_if(n, "L", "sampler", b.L);
    set_if(n, "T_bar", "sampler", b.T_bar);
    set_if(n, "T_under", "sampler", b.T_under);
    set_if(n, "n_paths", "sampler", b.n_paths);
  }
  if (auto n = root["estimator"]) {
    check_keys(n, "estimator",
               {"anchors", "depth", "width", "B", "init_scale", "C_w", "steps", "lr", "batch", "t_lo", "t_hi", "beta",
                "eps"});
    auto& b = s.estimator;
    set_if(n, "anchors", "estimator", b.anchors);
    set_if(n, "depth", "estimator", b.depth);
    set_if(n, "width", "estimator", b.width);
    set_if(n, "B", "estimator", b.B);
    set_if(n, "init_scale", "estimator", b.init_scale);
    set_if(n, "C_w", "estimator", b.C_w);
    set_if(n, "steps", "estimator", b.steps);
    set_if(n, "lr", "estimator", b.lr);
    set_if(n, "batch", "estimator", b.batch);
    set_if(n, "t_lo", "estimator", b.t_lo);
    set_if(n, "t_hi", "estimator", b.t_hi);
    set_if(n, "beta", "estimator", b.beta);
    set_if(n, "eps", "estimator", b.eps);
  }
  if (auto n = root["sweep"]) {
    check_keys(n, "sweep", {"D", "n", "K", "t", "gamma"});
    auto axis = [&](const char* key, std::optional<std::vector<double>>& out) {
      if (!n[key]) return;
      if (!n[key].IsSequence()) throw Error(std::string("sweep.") + key + ": expected a list");
      out = get<std::vector<double>>(n[key], std::string("sweep.") + key);
    };
    axis("D", s.sweep.D);
    axis("n", s.sweep.n);
    axis("K", s.sweep.K);
    axis("t", s.sweep.t);
    axis("gamma", s.sweep.gamma);
  }
  validate(s);
  return s;
}

void validate(const ExperimentSpec& s) {
  auto fail = [](const std::string& key, const std::string& msg) { throw Error(key + ": " + msg); };
  const auto& reg = registry();
  if (std::none_of(reg.begin(), reg.end(), [&](const ScenarioInfo& i) { return i.name == s.scenario; }))
    fail("scenario", "unknown scenario '" + s.scenario + "'");
  if (s.schema != kSchemaVersion) fail("schema", "unsupported version");
  if (s.trials < 1) fail("trials", "must be >= 1");
  if (!(s.delta > 0 && s.delta < 1)) fail("delta", "must lie in (0, 1)");
  if (s.replicates < 1) fail("replicates", "must be >= 1");
  const auto& m = s.manifold;
  if (m.kind != "circle" && m.kind != "sphere" && m.kind != "poly_graph") fail("manifold.kind", "unknown kind '" + m.kind + "'");
  if (m.d < 1) fail("manifold.d", "must be >= 1");
  if (!(m.radius > 0)) fail("manifold.radius", "must be positive");
  if (m.kind == "poly_graph" && m.terms.empty()) fail("manifold.terms", "poly_graph needs at least one term");
  if (s.measure.density != "uniform" && s.measure.density != "cosine")
    fail("measure.density", "unknown density '" + s.measure.density + "'");
  if (s.measure.n < 1) fail("measure.n", "must be >= 1");
  try {
    samplers::parse_scheme(s.sampler.scheme);
  } catch (const Error&) {
    fail("sampler.scheme", "unknown scheme '" + s.sampler.scheme + "'");
  }
  if (s.sampler.n_paths < 1) fail("sampler.n_paths", "must be >= 1");
  if (!(s.sampler.T_under > 0 && s.sampler.T_under < 1)) fail("sampler.T_under", "must lie in (0, 1)");
  if (!(s.sampler.T_bar > 1)) fail("sampler.T_bar", "must exceed 1");
  if (!(s.sampler.kappa > 0 && s.sampler.kappa <= 0.25)) fail("sampler.kappa", "must lie in (0, 1/4]");
  if (s.sampler.L < 1) fail("sampler.L", "must be >= 1");
  const auto& e = s.estimator;
  if (!(e.t_lo > 0 && e.t_hi > e.t_lo)) fail("estimator.t_lo", "need 0 < t_lo < t_hi");
  if (e.anchors < 1) fail("estimator.anchors", "must be >= 1");
  if (e.depth < 1 || e.width < 1) fail("estimator.depth", "depth and width must be >= 1");
  if (e.steps < 0 || e.batch < 1) fail("estimator.steps", "need steps >= 0 and batch >= 1");
  if (!(e.beta >= 1)) fail("estimator.beta", "must be >= 1");
  if (!(e.eps > 0)) fail("estimator.eps", "must be positive");
  auto axis = [&](const char* name, const std::optional<std::vector<double>>& a, auto pred, const char* what) {
    if (!a) return;
    if (a->empty()) fail(std::string("sweep.") + name, "axis is empty");
    for (double v : *a)
      if (!pred(v)) fail(std::string("sweep.") + name, std::string(what) + " (got " + io::fmt(v) + ")");
  };
  auto is_int = [](double v) { return v == std::floor(v); };
  axis("D", s.sweep.D, [&](double v) { return is_int(v) && v >= 1; }, "entries must be positive integers");
  axis("n", s.sweep.n, [&](double v) { return is_int(v) && v >= 2; }, "entries must be integers >= 2");
  axis("K", s.sweep.K, [&](double v) { return is_int(v) && v >= 2; }, "entries must be integers >= 2");
  axis("t", s.sweep.t, [](double v) { return v > 0; }, "entries must be positive");
  axis("gamma", s.sweep.gamma, [](double v) { return v > 0 && v < 0.25; }, "entries must lie in (0, 1/4)");
  // Axes each scenario reads.
  auto need = [&](const char* name, const std::optional<std::vector<double>>& a) {
    if (!a) fail(std::string("sweep.") + name, "required by " + s.scenario);
  };
  need("D", s.sweep.D);
  const auto& sc = s.scenario;
  if (sc == "concentration.posterior_band" || sc == "concentration.denoiser_variance" ||
      sc == "concentration.weight_radius" || sc == "concentration.drift_freeze" || sc == "bounds.sml_w2" ||
      sc == "bounds.kl_dissipation")
    need("t", s.sweep.t);
  if (sc == "concentration.drift_freeze") {
    need("gamma", s.sweep.gamma);
    if (s.sweep.gamma->size() < 2) fail("sweep.gamma", "needs at least two step sizes");
  }
  if (sc == "fit.rate") {
    need("n", s.sweep.n);
    if (s.sweep.n->size() < 2) fail("sweep.n", "needs at least two sample sizes");
  }
  if (sc == "sampler.compare" || sc == "sampler.k_sweep") need("K", s.sweep.K);
  if (sc == "sampler.k_sweep" && s.sweep.D->size() != 1) fail("sweep.D", "k_sweep runs in D = 1 only");
  if (sc == "sampler.k_sweep" && s.sweep.D->front() != 1) fail("sweep.D", "k_sweep runs in D = 1 only");
  if (sc == "bounds.sml_w2" && s.sweep.t->size() != 2) fail("sweep.t", "needs exactly [t_min, t_max]");
  if (sc == "bounds.sml_w2" && !(s.sweep.t->at(1) > s.sweep.t->at(0))) fail("sweep.t", "needs t_min < t_max");
  if (sc == "concentration.posterior_band" && s.measure.density != "uniform")
    fail("measure.density", "posterior_band needs the uniform density");
  if (starts_with(sc, "concentration.") || sc == "fit.rate" || sc == "sampler.compare") {
    const int model = m.kind == "poly_graph" ? m.d + m.codim : (m.kind == "circle" ? 2 : m.d + 1);
    for (double D : *s.sweep.D)
      if (D < model) fail("sweep.D", "entry " + io::fmt(D) + " is below the model dimension " + std::to_string(model));
  }
}

namespace {
// Shortest round-trip text, emitted as a plain scalar.
struct Num {
  double v;
};
Num num(double v) { return {v}; }
YAML::Emitter& operator<<(YAML::Emitter& e, Num n) { return e << io::fmt(n.v); }
}  // namespace

std::string dump_spec(const ExperimentSpec& s) {
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "schema" << YAML::Value << s.schema;
  e << YAML::Key << "scenario" << YAML::Value << s.scenario;
  e << YAML::Key << "seed" << YAML::Value << s.seed;
  e << YAML::Key << "trials" << YAML::Value << s.trials;
  e << YAML::Key << "delta" << YAML::Value << num(s.delta);
  e << YAML::Key << "replicates" << YAML::Value << s.replicates;
  e << YAML::Key << "manifold" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "kind" << YAML::Value << s.manifold.kind;
  e << YAML::Key << "d" << YAML::Value << s.manifold.d;
  e << YAML::Key << "radius" << YAML::Value << num(s.manifold.radius);
  e << YAML::Key << "codim" << YAML::Value << s.manifold.codim;
  e << YAML::Key << "chart_radius" << YAML::Value << num(s.manifold.chart_radius);
  e << YAML::Key << "seed" << YAML::Value << s.manifold.seed;
  if (!s.manifold.terms.empty()) {
    e << YAML::Key << "terms" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : s.manifold.terms) {
      e << YAML::Flow << YAML::BeginMap << YAML::Key << "exps" << YAML::Value << t.exps;
      e << YAML::Key << "coef" << YAML::Value << YAML::BeginSeq;
      for (double c : t.coef) e << num(c);
      e << YAML::EndSeq;
      e << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  e << YAML::EndMap;
  e << YAML::Key << "measure" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "density" << YAML::Value << s.measure.density;
  e << YAML::Key << "amplitude" << YAML::Value << num(s.measure.amplitude);
  e << YAML::Key << "n" << YAML::Value << s.measure.n;
  e << YAML::EndMap;
  e << YAML::Key << "sampler" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "scheme" << YAML::Value << s.sampler.scheme;
  e << YAML::Key << "kappa" << YAML::Value << num(s.sampler.kappa);
  e << YAML::Key << "L" << YAML::Value << s.sampler.L;
  e << YAML::Key << "T_bar" << YAML::Value << num(s.sampler.T_bar);
  e << YAML::Key << "T_under" << YAML::Value << num(s.sampler.T_under);
  e << YAML::Key << "n_paths" << YAML::Value << s.sampler.n_paths;
  e << YAML::EndMap;
  const auto& b = s.estimator;
  e << YAML::Key << "estimator" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "anchors" << YAML::Value << b.anchors;
  e << YAML::Key << "depth" << YAML::Value << b.depth;
  e << YAML::Key << "width" << YAML::Value << b.width;
  e << YAML::Key << "B" << YAML::Value << num(b.B);
  e << YAML::Key << "init_scale" << YAML::Value << num(b.init_scale);
  e << YAML::Key << "C_w" << YAML::Value << num(b.C_w);
  e << YAML::Key << "steps" << YAML::Value << b.steps;
  e << YAML::Key << "lr" << YAML::Value << num(b.lr);
  e << YAML::Key << "batch" << YAML::Value << b.batch;
  e << YAML::Key << "t_lo" << YAML::Value << num(b.t_lo);
  e << YAML::Key << "t_hi" << YAML::Value << num(b.t_hi);
  e << YAML::Key << "beta" << YAML::Value << num(b.beta);
  e << YAML::Key << "eps" << YAML::Value << num(b.eps);
  e << YAML::EndMap;
  e << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
  auto axis = [&](const char* name, const std::optional<std::vector<double>>& a) {
    if (!a) return;
    e << YAML::Key << name << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (double x : *a) e << num(x);
    e << YAML::EndSeq;
  };
  axis("D", s.sweep.D);
  axis("n", s.sweep.n);
  axis("K", s.sweep.K);
  axis("t", s.sweep.t);
  axis("gamma", s.sweep.gamma);
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

// ---- building blocks ------------------------------------------------------

geometry::EmbeddedManifold build_manifold(const ManifoldBlock& b, int D) {
  geometry::ManifoldSpec ms;
  if (b.kind == "circle") ms.kind = geometry::Kind::circle;
  else if (b.kind == "sphere") ms.kind = geometry::Kind::sphere;
  else if (b.kind == "poly_graph") ms.kind = geometry::Kind::poly_graph;
  else throw Error("manifold.kind: unknown kind '" + b.kind + "'");
  ms.d = b.kind == "circle" ? 1 : b.d;
  ms.radius = b.radius;
  ms.terms = b.terms;
  ms.codim = b.codim;
  ms.chart_radius = b.chart_radius;
  return geometry::make_manifold(ms, D, b.seed);
}

geometry::DensitySpec build_density(const MeasureBlock& b) {
  geometry::DensitySpec d;
  d.kind = b.density == "cosine" ? geometry::DensitySpec::Kind::cosine : geometry::DensitySpec::Kind::uniform;
  d.amplitude = b.amplitude;
  return d;
}

SchemeError scheme_w1_error(const FiniteMeasure& mu, const Mat& frame, samplers::Scheme scheme,
                            const samplers::TimePartition& p, int n_paths, std::uint64_t seed) {
  diffusion::ExactScore s(mu);
  samplers::SamplerRun run;
  run.scheme = scheme;
  run.score = &s;
  run.partition = p;
  run.n_paths = n_paths;
  run.seed = seed;
  auto res = samplers::run_backward(run);
  Cloud ref(n_paths, mu.dim());
  for (int i = 0; i < n_paths; ++i) {
    Rng rng = substream(seed ^ 0x5eedf00dULL, static_cast<std::uint64_t>(i));
    ref.row(i) = diffusion::forward_sample(mu, p.T_under, rng).xt.transpose();
  }
  SchemeError out;
  out.failed = static_cast<int>(res.errors.size());
  if (res.terminal.rows() == 0) throw Error("scheme_w1_error: every path failed");
  Cloud a = metrics::orbit_features(res.terminal, frame);
  Cloud b = metrics::orbit_features(ref, frame);
  if (a.rows() != b.rows()) {
    FiniteMeasure A = FiniteMeasure::uniform(a), B = FiniteMeasure::uniform(b);
    out.w1 = metrics::w_p(A, B, 1);
  } else {
    out.w1 = metrics::w_p(a, b, 1);
  }
  return out;
}

double w1_to_mixture_1d(std::vector<double> x, const Vec& means, const Vec& weights, double s) {
  if (x.empty()) throw Error("w1_to_mixture_1d: empty sample");
  std::sort(x.begin(), x.end());
  auto cdf = [&](double v) {
    double F = 0;
    for (Eigen::Index i = 0; i < means.size(); ++i) F += weights[i] * 0.5 * std::erfc(-(v - means[i]) / (s * std::sqrt(2.0)));
    return F;
  };
  const double lo = std::min(x.front(), means.minCoeff() - 10 * s);
  const double hi = std::max(x.back(), means.maxCoeff() + 10 * s);
  const int cells = 1 << 21;
  const double h = (hi - lo) / cells;
  const double n = static_cast<double>(x.size());
  std::size_t k = 0;
  double total = 0;
  for (int c = 0; c < cells; ++c) {
    double mid = lo + (c + 0.5) * h;
    while (k < x.size() && x[k] <= mid) ++k;
    total += std::abs(static_cast<double>(k) / n - cdf(mid)) * h;
  }
  return total;
}

double two_point_k_error(int K, int n_paths, double T_bar, double T_under, std::uint64_t seed) {
  Cloud pts(2, 1);
  pts << -0.5, 0.5;
  FiniteMeasure mu = FiniteMeasure::uniform(pts);
  diffusion::ExactScore s(mu);
  samplers::SamplerRun run;
  run.scheme = samplers::Scheme::modified;
  run.score = &s;
  run.partition = samplers::make_horizon_schedule(T_bar, T_under, K);
  run.n_paths = n_paths;
  run.seed = seed;
  auto res = samplers::run_backward(run);
  if (!res.errors.empty()) throw Error("two_point_k_error: " + res.errors.front().message);
  auto co = diffusion::ou_coeffs(T_under);
  std::vector<double> x(res.terminal.data(), res.terminal.data() + res.terminal.size());
  Vec means(2), w(2);
  means << -0.5 * co.c, 0.5 * co.c;
  w << 0.5, 0.5;
  return w1_to_mixture_1d(std::move(x), means, w, co.sigma);
}

FitRatePoint fit_rate_point(const geometry::EmbeddedManifold& m, const geometry::DensitySpec& dens, int n, double C,
                            double beta, std::uint64_t seed) {
  auto mu = geometry::sample_measure(m, dens, n, seed);
  fit::EpsConfig ec;
  ec.C = C;
  auto surf = fit::fit_surface(mu.support, m.d, beta, ec);
  FitRatePoint p;
  p.n = n;
  p.C = C;
  p.eps_n = surf.eps_n;
  p.charts = surf.charts.size();
  p.hausdorff = fit::hausdorff_to_manifold(surf, m, surf.eps_n / 20);
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    p.max_neighbors = std::max(p.max_neighbors, static_cast<int>(fit::neighbor_set(mu.support, i, surf.eps_n).rows()));
  return p;
}

Cloud two_point_line(int D, std::uint64_t seed) {
  Rng rng = substream(seed, 0x11e);
  Vec u = std_normal(rng, D);
  u.normalize();
  Cloud Y(2, D);
  Y.row(0) = 0.5 * u.transpose();
  Y.row(1) = -0.5 * u.transpose();
  return Y;
}

ErmDemo erm_demo(int D, const EstimatorBlock& b, int mc_trials, std::uint64_t seed) {
  Cloud Y = two_point_line(D, seed);
  const int N = std::min<int>(b.anchors, static_cast<int>(Y.rows()));
  auto af = estimators::build_anchor_frames(Y, N, 1.5, 1, seed);
  estimators::StructuredScore init;
  init.anchors = af.anchors;
  init.frames = af.frames;
  init.params.n = Y.rows();
  init.params.d = 1;
  init.params.C_w = b.C_w;
  init.params.t_lo = b.t_lo;
  init.params.t_hi = b.t_hi;
  Rng rng = substream(seed, 0x1417);
  for (int i = 0; i < N; ++i) {
    auto h = estimators::NetHead::random(static_cast<int>(af.frames[static_cast<std::size_t>(i)].cols()), b.depth,
                                         b.width, b.B, b.init_scale, rng);
    init.heads.push_back(std::make_unique<estimators::NetHead>(std::move(h)));
  }
  estimators::TrainConfig tc;
  tc.t_lo = b.t_lo;
  tc.t_hi = b.t_hi;
  tc.lr = b.lr;
  tc.steps = b.steps;
  tc.batch = b.batch;
  tc.seed = seed;
  auto tr = estimators::erm_train(init, Y, tc);
  FiniteMeasure mu = FiniteMeasure::uniform(Y);
  diffusion::McConfig mc;
  mc.trials = mc_trials;
  mc.seed = seed + 1;
  auto trained = diffusion::sm_loss(tr.model, mu, b.t_lo, b.t_hi, mc);
  auto zero = diffusion::sm_loss(diffusion::ZeroScore(D), mu, b.t_lo, b.t_hi, mc);
  ErmDemo out;
  out.trained_loss = trained.value;
  out.trained_se = trained.se;
  out.zero_loss = zero.value;
  out.zero_se = zero.se;
  out.improvement = trained.value > 0 ? zero.value / trained.value : std::numeric_limits<double>::infinity();
  out.diverged = tr.diverged;
  out.risk_trace = tr.risk_trace;
  out.eval_trace = tr.eval_trace;
  out.model = std::make_shared<estimators::StructuredScore>(std::move(tr.model));
  return out;
}

// ---- runners ----------------------------------------------------------------

namespace {

struct Ctx {
  const ExperimentSpec& spec;
  std::string dir;
  RunOutcome out;
  std::string path(const std::string& file) {
    std::string p = (std::filesystem::path(dir) / file).string();
    out.files.push_back(file);
    return p;
  }
};

double median_of(std::vector<double> v) { return median(v); }

double slope_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return ols_slope(lx, ly);
}

void run_concentration(Ctx& c) {
  const auto& s = c.spec;
  const std::string check = s.scenario.substr(std::string("concentration.").size());
  io::Json reports = io::Json::array();
  std::vector<double> ts = s.sweep.t.value_or(std::vector<double>{0.0});
  const auto dens = build_density(s.measure);
  for (double Dd : *s.sweep.D) {
    const int D = static_cast<int>(Dd);
    auto m = build_manifold(s.manifold, D);
    auto k = concentration::constants_for(m, dens);
    for (double t : ts) {
      concentration::BoundReport r;
      if (check == "inner_product") {
        r = concentration::check_inner_product_sup(m, s.estimator.eps, s.delta, s.trials, s.seed);
      } else if (check == "tangent_projection") {
        r = concentration::check_tangent_projection(m, s.delta, s.trials, s.seed);
      } else {
        auto mu = geometry::sample_measure(m, dens, s.measure.n, s.seed);
        if (check == "posterior_band") {
          r = concentration::check_posterior_band(mu, k, -std::log(m.volume), t, s.delta, s.trials, s.seed);
        } else if (check == "denoiser_variance") {
          r = concentration::check_denoiser_variance(mu, k, t, s.delta, s.trials, s.seed);
        } else if (check == "weight_radius") {
          auto net = concentration::manifold_net(m, s.estimator.eps);
          r = concentration::check_weight_radius(mu, net.centers, net.epsilon, k, t, s.delta, s.trials, s.seed);
        } else if (check == "drift_freeze") {
          r = concentration::check_drift_freeze(mu, k, t, *s.sweep.gamma, s.trials, s.seed);
        } else if (check == "surface_gp") {
          auto surf = fit::fit_surface(mu.support, m.d, s.estimator.beta);
          r = concentration::check_surface_gp(surf, mu, k, s.delta, s.trials, s.seed);
        } else {
          throw Error("scenario: no runner for '" + s.scenario + "'");
        }
      }
      std::string file = check + "_D" + std::to_string(D) + (s.sweep.t ? "_t" + axis_tag(t) : "") + ".csv";
      if (check == "drift_freeze") {
        io::CsvWriter w(c.path(file), {"gamma", "mean_statistic", "bound", "applicable"});
        for (std::size_t g = 0; g < r.statistic.size(); ++g) {
          double b = r.extra["bound_gamma_" + std::to_string(g)];
          w.row({(*s.sweep.gamma)[g], r.statistic[g], b, b < 1 ? 1.0 : 0.0});
        }
      } else {
        io::write_report_csv(c.path(file), r);
      }
      auto j = io::report_json(r);
      j["csv"] = file;
      reports.push_back(j);
      if (!r.within_delta()) c.out.violation = true;
    }
  }
  if (check == "inner_product" || check == "tangent_projection" || check == "denoiser_variance") {
    // D-independence: ratio of medians between the largest and smallest D.
    if (reports.size() >= 2) {
      double first = reports.front()["quantiles"]["q50"].get<double>();
      double last = reports.back()["quantiles"]["q50"].get<double>();
      c.out.summary["median_ratio_largest_to_smallest_D"] = first != 0 ? last / first : 0.0;
    }
  }
  c.out.summary["reports"] = reports;
}

void run_fit_rate(Ctx& c) {
  const auto& s = c.spec;
  const int D = static_cast<int>(s.sweep.D->front());
  auto m = build_manifold(s.manifold, D);
  auto dens = build_density(s.measure);
  std::vector<double> ns = *s.sweep.n;
  std::sort(ns.begin(), ns.end());
  io::CsvWriter w(c.path("fit_rate.csv"),
                  {"n", "replicate", "C", "eps_n", "hausdorff", "max_neighbors", "neighbors_over_log_n", "charts"});
  std::map<double, std::vector<double>> haus;
  std::vector<double> ratios;
  for (int rep = 0; rep < s.replicates; ++rep) {
    const std::uint64_t seed = s.seed + static_cast<std::uint64_t>(rep);
    auto pilot = geometry::sample_measure(m, dens, static_cast<int>(ns.front()), seed);
    double C = fit::rate_constant(pilot.support, m.d);
    for (double n : ns) {
      auto p = fit_rate_point(m, dens, static_cast<int>(n), C, s.estimator.beta, seed);
      double ratio = p.max_neighbors / std::log(n);
      w.row({n, static_cast<double>(rep), C, p.eps_n, p.hausdorff, static_cast<double>(p.max_neighbors), ratio,
             static_cast<double>(p.charts)});
      haus[n].push_back(p.hausdorff);
      ratios.push_back(ratio);
    }
  }
  std::vector<double> med;
  for (double n : ns) med.push_back(median_of(haus[n]));
  c.out.summary["slope"] = slope_loglog(ns, med);
  c.out.summary["median_hausdorff"] = med;
  c.out.summary["max_neighbors_over_log_n"] = *std::max_element(ratios.begin(), ratios.end());
}

void run_sampler_compare(Ctx& c) {
  const auto& s = c.spec;
  auto dens = build_density(s.measure);
  io::CsvWriter w(c.path("sampler_compare.csv"), {"D", "K", "replicate", "scheme", "w1", "failed_paths"});
  io::Json rows = io::Json::array();
  for (double Kd : *s.sweep.K) {
    const int K = static_cast<int>(Kd);
    auto p = samplers::make_schedule(s.sampler.kappa, s.sampler.L, K);
    for (auto scheme : {samplers::Scheme::classic, samplers::Scheme::modified}) {
      std::vector<double> med;
      for (double Dd : *s.sweep.D) {
        const int D = static_cast<int>(Dd);
        auto m = build_manifold(s.manifold, D);
        auto mu = geometry::sample_measure(m, dens, s.measure.n, s.seed);
        std::vector<double> errs;
        for (int rep = 0; rep < s.replicates; ++rep) {
          auto e = scheme_w1_error(mu, m.frame, scheme, p, s.sampler.n_paths, s.seed + 1000 * static_cast<std::uint64_t>(rep + 1));
          w.row({io::fmt(Dd), std::to_string(K), std::to_string(rep), samplers::scheme_name(scheme), io::fmt(e.w1),
                 std::to_string(e.failed)});
          errs.push_back(e.w1);
        }
        med.push_back(median_of(errs));
      }
      rows.push_back({{"scheme", samplers::scheme_name(scheme)},
                      {"K", K},
                      {"median_w1", med},
                      {"growth_largest_to_smallest_D", med.back() / med.front()}});
    }
  }
  c.out.summary["schemes"] = rows;
}

void run_k_sweep(Ctx& c) {
  const auto& s = c.spec;
  io::CsvWriter w(c.path("k_sweep.csv"), {"K", "replicate", "w1"});
  std::vector<double> Ks = *s.sweep.K, med;
  for (double K : Ks) {
    std::vector<double> errs;
    for (int rep = 0; rep < s.replicates; ++rep) {
      double e = two_point_k_error(static_cast<int>(K), s.sampler.n_paths, s.sampler.T_bar, s.sampler.T_under,
                                   s.seed + static_cast<std::uint64_t>(rep));
      w.row({K, static_cast<double>(rep), e});
      errs.push_back(e);
    }
    med.push_back(median_of(errs));
  }
  c.out.summary["median_w1"] = med;
  if (Ks.size() >= 2) c.out.summary["slope"] = slope_loglog(Ks, med);
}

FiniteMeasure random_measure(int atoms, int D, Rng& rng) {
  FiniteMeasure mu;
  mu.support.resize(atoms, D);
  for (int i = 0; i < atoms; ++i) mu.support.row(i) = 0.5 * std_normal(rng, D).transpose();
  mu.weights.resize(atoms);
  for (int i = 0; i < atoms; ++i) mu.weights[i] = 0.2 + uniform01(rng);
  mu.weights /= mu.weights.sum();
  return mu;
}

void run_sml_w2(Ctx& c) {
  const auto& s = c.spec;
  const int D = static_cast<int>(s.sweep.D->front());
  const double t0 = s.sweep.t->at(0), t1 = s.sweep.t->at(1);
  diffusion::McConfig mc;
  mc.seed = s.seed;
  io::CsvWriter w(c.path("sml_w2.csv"),
                  {"pair", "kind", "loss", "loss_se", "w2", "bound", "ratio", "ratio_se", "tight_bound"});
  int failures = 0;
  double max_ratio = 0;
  for (int i = 0; i <= s.trials; ++i) {
    FiniteMeasure P, Q;
    std::string kind = "random";
    if (i == s.trials) {
      kind = "delta_pair";
      P.support = Cloud::Zero(1, D);
      Q.support = Cloud::Zero(1, D);
      Q.support(0, 0) = 0.5;
      P.weights = Q.weights = Vec::Ones(1);
    } else {
      Rng rng = substream(s.seed, static_cast<std::uint64_t>(i));
      P = random_measure(s.measure.n, D, rng);
      Q = random_measure(s.measure.n, D, rng);
    }
    auto r = metrics::sml_bound_check(P, Q, t0, t1, mc);
    w.row({std::to_string(i), kind, io::fmt(r.loss.value), io::fmt(r.loss.se), io::fmt(r.w2), io::fmt(r.bound),
           io::fmt(r.ratio), io::fmt(r.ratio_se), io::fmt(r.tight_bound)});
    if (kind == "random") {
      max_ratio = std::max(max_ratio, r.ratio);
      if (r.ratio > 1 + 3 * r.ratio_se) ++failures;
    } else {
      c.out.summary["delta_pair_ratio"] = r.ratio;
    }
  }
  c.out.summary["max_ratio"] = max_ratio;
  c.out.summary["pairs_above_bound"] = failures;
  if (failures > 0) c.out.violation = true;
}

metrics::Gaussian random_gaussian(int D, Rng& rng) {
  metrics::Gaussian g;
  g.mean = std_normal(rng, D);
  Mat A(D, D);
  for (int j = 0; j < D; ++j) A.col(j) = std_normal(rng, D);
  g.cov = A * A.transpose() / D + 0.5 * Mat::Identity(D, D);
  return g;
}

void run_kl(Ctx& c) {
  const auto& s = c.spec;
  const int D = static_cast<int>(s.sweep.D->front());
  Rng rng = substream(s.seed, 0);
  auto P = random_gaussian(D, rng), Q = random_gaussian(D, rng);
  io::CsvWriter w(c.path("kl_dissipation.csv"), {"t", "lhs", "rhs", "fisher", "gap", "lhs_over_minus_fisher"});
  double worst = 0, identity = 0;
  for (double t : *s.sweep.t) {
    auto r = metrics::kl_dissipation_check(P, Q, t, 1e-4);
    w.row({t, r.lhs, r.rhs, r.fisher, r.gap, -r.lhs / r.fisher});
    worst = std::max(worst, std::abs(r.gap));
    identity = std::max(identity, std::abs(-r.lhs / r.fisher - 1));
  }
  c.out.summary["max_abs_gap"] = worst;
  // lhs against -E|grad log p - grad log q|^2 without the factor 2.
  c.out.summary["max_identity_gap"] = identity;
  if (worst > 0.01) c.out.violation = true;
}

void run_erm(Ctx& c) {
  const auto& s = c.spec;
  auto r = erm_demo(static_cast<int>(s.sweep.D->front()), s.estimator, s.trials, s.seed);
  io::CsvWriter w(c.path("erm_trace.csv"), {"step", "batch_risk"});
  for (std::size_t i = 0; i < r.risk_trace.size(); ++i) w.row({static_cast<double>(i), r.risk_trace[i]});
  c.out.summary["trained_sm_loss"] = r.trained_loss;
  c.out.summary["trained_se"] = r.trained_se;
  c.out.summary["zero_sm_loss"] = r.zero_loss;
  c.out.summary["zero_se"] = r.zero_se;
  c.out.summary["improvement"] = r.improvement;
  c.out.summary["diverged"] = r.diverged;
  io::save_checkpoint(c.path("model.ckpt"), *r.model);
  c.out.summary["eval_trace"] = r.eval_trace;
}

}  // namespace

RunOutcome run(const ExperimentSpec& spec, const std::string& outdir) {
  validate(spec);
  std::filesystem::create_directories(outdir);
  const auto start = std::chrono::steady_clock::now();
  Ctx c{spec, outdir, {}};
  c.out.summary["scenario"] = spec.scenario;
  const auto& sc = spec.scenario;
  if (starts_with(sc, "concentration.")) run_concentration(c);
  else if (sc == "fit.rate") run_fit_rate(c);
  else if (sc == "sampler.compare") run_sampler_compare(c);
  else if (sc == "sampler.k_sweep") run_k_sweep(c);
  else if (sc == "bounds.sml_w2") run_sml_w2(c);
  else if (sc == "bounds.kl_dissipation") run_kl(c);
  else if (sc == "estimator.erm_demo") run_erm(c);
  else throw Error("scenario: no runner for '" + sc + "'");
  c.out.summary["bound_violation"] = c.out.violation;
  io::write_json(c.path("summary.json"), c.out.summary);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const std::string dumped = dump_spec(spec);
  io::write_text(c.path("spec.yaml"), dumped);
  io::Json manifest;
  manifest["scenario"] = spec.scenario;
  manifest["spec_sha256"] = io::sha256_hex(dumped);
  manifest["seed"] = spec.seed;
  manifest["versions"] = {{"mdlab", "0.1.0"},
                          {"schema", kSchemaVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)}};
  manifest["wall_time_s"] = wall;
  manifest["files"] = c.out.files;
  io::write_json((std::filesystem::path(outdir) / "manifest.json").string(), manifest);
  c.out.files.push_back("manifest.json");
  return c.out;
}

}  // namespace mdlab::scenarios
