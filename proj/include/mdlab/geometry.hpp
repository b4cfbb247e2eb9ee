// SPDX-License-Identifier: Apache-2.0
//
// Analytic test manifolds isometrically embedded in R^D.

#pragma once

#include "mdlab/common.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace mdlab::geometry {

enum class Kind { circle, sphere, poly_graph };

/// One term coef * z^exps of the graph map f: R^d -> R^k.
struct PolyTerm {
  std::vector<int> exps;
  Vec coef;
};

struct ManifoldSpec {
  Kind kind = Kind::circle;
  int d = 1;                    // sphere and poly_graph only; circle forces 1
  double radius = 1.0;          // circle, sphere
  std::vector<PolyTerm> terms;  // poly_graph
  int codim = 1;                // poly_graph: dimension k of f's range
  double chart_radius = 0.3;    // poly_graph parameter ball
  bool identity_frame = false;  // embed into the first coordinates instead of a random frame
};

/// The canonical model lives in R^m (m = d+1 for circle and sphere, d+k for
/// poly_graph) and is carried into R^D by `offset + frame * u`.
class EmbeddedManifold {
 public:
  ManifoldSpec spec;
  int d = 0;
  int D = 0;
  Mat frame;  // D x m, orthonormal columns
  Vec offset;
  double tau = 0;    // reach (poly_graph: lower bound)
  double L_M = 0;    // curvature bound used as the Holder constant
  double volume = 0;
  double diameter = 0;
  /// Factor that would bring the manifold to unit diameter when it is larger.
  double unit_scale = 1;
  double jac_max = 1;  // poly_graph: max area element over the parameter ball

  int model_dim() const { return static_cast<int>(frame.cols()); }
  /// Chart radius min(1, tau, 1/L_M) / 8.
  double r0() const;

  Vec embed(const Vec& u) const { return offset + frame * u; }
  Vec canonical(const Vec& y) const { return frame.transpose() * (y - offset); }

  /// Map from global parameters: circle angle (size 1), sphere unit vector
  /// (size d+1), poly_graph z (size d).
  Vec point(const Vec& param) const;

  /// Closest manifold point and its distance.
  Vec project(const Vec& y, double* dist = nullptr) const;
  double distance(const Vec& y) const;

  /// D x d orthonormal tangent basis at a manifold point.
  Mat tangent_basis(const Vec& y) const;

  /// Local chart at base point y: circle and sphere use the graph over the
  /// tangent plane, poly_graph the shifted parameter map.
  Vec chart(const Vec& y, const Vec& z) const;

  /// Deterministic points with spacing about `h` along the manifold.
  Cloud grid(double h) const;

  // poly_graph helpers on the parameter ball
  Vec f(const Vec& z) const;
  Mat grad_f(const Vec& z) const;  // k x d
};

/// Build the manifold, drawing a random orthonormal frame from `seed`.
EmbeddedManifold make_manifold(const ManifoldSpec& spec, int D, std::uint64_t seed);

/// Density relative to the Hausdorff measure. `cosine` is proportional to
/// 1 + amplitude * u_0 / radius and is only defined for circle and sphere.
struct DensitySpec {
  enum class Kind { uniform, cosine } kind = Kind::uniform;
  double amplitude = 0.0;
};

/// (p_min, p_max) of the normalized density.
std::pair<double, double> density_bounds(const EmbeddedManifold& m, const DensitySpec& dens);

FiniteMeasure sample_measure(const EmbeddedManifold& m, const DensitySpec& dens, int n,
                             std::uint64_t seed);

struct EpsNet {
  Cloud centers;
  std::vector<Eigen::Index> index;  // rows of the input
  double epsilon = 0;
};

/// Greedy pass in input order; a point is admitted iff it is farther than
/// eps/2 from every admitted center.
EpsNet eps_net(const Cloud& points, double eps);

bool is_dense(const EpsNet& net, const Cloud& points);
bool is_sparse(const EpsNet& net);

/// Orthogonal projector onto T_y M. Throws when y is off the manifold.
Mat tangent_projector(const EmbeddedManifold& m, const Vec& y);

/// Smallest value admitted by the complexity inequalities, slightly enlarged
/// so the strict ones hold.
double complexity_constant(const EmbeddedManifold& m, double p_min, double p_max);

/// Volume of the unit d-ball.
double unit_ball_volume(int d);

}  // namespace mdlab::geometry
