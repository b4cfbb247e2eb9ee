// SPDX-License-Identifier: Apache-2.0
//
// Named experiments, their configuration schema and the shared building
// blocks the acceptance harness calls directly.

#pragma once

#include "mdlab/common.hpp"
#include "mdlab/geometry.hpp"
#include "mdlab/io.hpp"
#include "mdlab/samplers.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mdlab::scenarios {

inline constexpr int kSchemaVersion = 1;

struct ManifoldBlock {
  std::string kind = "circle";  // circle | sphere | poly_graph
  int d = 1;
  double radius = 0.5;
  int codim = 1;
  double chart_radius = 0.3;
  std::vector<geometry::PolyTerm> terms;
  std::uint64_t seed = 7;  // frame seed
};

struct MeasureBlock {
  std::string density = "uniform";  // uniform | cosine
  double amplitude = 0;
  int n = 500;
};

struct SamplerBlock {
  std::string scheme = "modified";
  double kappa = 0.2;
  int L = 4;
  double T_bar = 1.5;
  double T_under = 0.05;
  int n_paths = 1000;
};

struct EstimatorBlock {
  int anchors = 2;
  int depth = 3;
  int width = 16;
  double B = 100;
  double init_scale = 0.5;
  double C_w = 60;
  int steps = 2000;
  double lr = 5e-3;
  int batch = 16;
  double t_lo = 0.1;
  double t_hi = 0.2;
  double beta = 2;  // smoothness used by fit.rate and surface_gp
  double eps = 0.05;  // net / inner-product radius
};

/// Lists over which a scenario loops. Unset axes take the scenario default.
struct Sweep {
  std::optional<std::vector<double>> D, n, K, t, gamma;
};

struct ExperimentSpec {
  int schema = kSchemaVersion;
  std::string scenario;
  ManifoldBlock manifold;
  MeasureBlock measure;
  SamplerBlock sampler;
  EstimatorBlock estimator;
  Sweep sweep;
  std::uint64_t seed = 1;
  std::string output_dir;
  int trials = 2000;
  double delta = 0.05;
  int replicates = 1;
};

struct ScenarioInfo {
  std::string name;
  std::string description;
};

/// Registered scenarios in a fixed order.
const std::vector<ScenarioInfo>& registry();

/// Defaults of a scenario, with every sweep axis it reads filled in.
ExperimentSpec default_spec(const std::string& scenario);

/// Parse a YAML document over the defaults of its scenario. Unknown keys
/// and wrong types raise Error naming the offending key.
ExperimentSpec parse_spec(const std::string& yaml_text);

/// Throws Error naming the first invalid key or empty sweep axis.
void validate(const ExperimentSpec& spec);

/// YAML text of an ExperimentSpec in the config schema.
std::string dump_spec(const ExperimentSpec& spec);

struct RunOutcome {
  std::vector<std::string> files;
  io::Json summary;
  bool violation = false;  // some bound failed its threshold
};

/// Execute the scenario and write its artifacts into `outdir`.
RunOutcome run(const ExperimentSpec& spec, const std::string& outdir);

// ---- building blocks ------------------------------------------------------

geometry::EmbeddedManifold build_manifold(const ManifoldBlock& b, int D);
geometry::DensitySpec build_density(const MeasureBlock& b);

/// W1 between the sampler's terminal law and the forward marginal at
/// T_under, both mapped through orbit_features of the manifold frame. Both
/// samples have n_paths points.
struct SchemeError {
  double w1 = 0;
  int failed = 0;
};
SchemeError scheme_w1_error(const FiniteMeasure& mu, const Mat& frame, samplers::Scheme scheme,
                            const samplers::TimePartition& p, int n_paths, std::uint64_t seed);

/// W1 between an empirical 1-D sample and the Gaussian mixture
/// sum_i w_i N(m_i, s^2), by integrating |F_n - F| on a fine grid.
double w1_to_mixture_1d(std::vector<double> x, const Vec& means, const Vec& weights, double s);

/// Modified-scheme W1 error on the two-point measure {-0.5, 0.5} in D = 1
/// with exact scores and the horizon schedule of K steps.
double two_point_k_error(int K, int n_paths, double T_bar, double T_under, std::uint64_t seed);

struct FitRatePoint {
  long n = 0;
  double C = 0;
  double eps_n = 0;
  double hausdorff = 0;
  int max_neighbors = 0;
  std::size_t charts = 0;
};

/// Sample n points from the manifold, fit the surface with constant C and
/// measure the exact Hausdorff distance.
FitRatePoint fit_rate_point(const geometry::EmbeddedManifold& m, const geometry::DensitySpec& dens, int n, double C,
                            double beta, std::uint64_t seed);

/// Two support points on a line in R^D at distance 1, centered at the origin.
Cloud two_point_line(int D, std::uint64_t seed);

struct ErmDemo {
  double trained_loss = 0, trained_se = 0;
  double zero_loss = 0, zero_se = 0;
  double improvement = 0;  // zero / trained
  bool diverged = false;
  std::vector<double> risk_trace, eval_trace;
  std::shared_ptr<estimators::StructuredScore> model;  // trained estimator
};

ErmDemo erm_demo(int D, const EstimatorBlock& b, int mc_trials, std::uint64_t seed);

}  // namespace mdlab::scenarios
