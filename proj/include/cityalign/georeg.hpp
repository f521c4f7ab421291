#pragma once

// CAD-plan to geodetic-plan registration with a bilinearly interpolated
// lookup table fitted under a Laplacian smoothness penalty.

#include <optional>
#include <vector>

#include <Eigen/SparseCore>

#include "cityalign/geometry.hpp"

namespace cityalign {

struct ControlPair {
  Vec2 x_cad;  // CAD plan, meters
  Vec2 x_wgs;  // geodetic plan in the local metric tangent plane, meters
};

// Node (i, j) sits at origin + cell * (i, j). The covered rectangle is
// [origin, origin + cell * (nx - 1, ny - 1)].
struct GridSpec {
  Vec2 origin = Vec2::Zero();
  double cell = 1.0;
  int nx = 2;
  int ny = 2;

  void validate() const;
  int node_count() const { return nx * ny; }
  int node_index(int i, int j) const { return j * nx + i; }
  Vec2 node(int i, int j) const { return origin + cell * Vec2(i, j); }
  Vec2 extent_max() const { return node(nx - 1, ny - 1); }
  bool contains(const Vec2& x) const;
};

// Lookup table of absolute target coordinates, one per grid node, stored
// row-major (j outer, i inner).
struct DeformationField {
  GridSpec grid;
  std::vector<Vec2> values;

  void validate() const;
  const Vec2& at(int i, int j) const { return values[grid.node_index(i, j)]; }
};

// Grid covering the CAD points' bounding box padded by one cell, with cell
// size equal to the box diagonal / 32.
GridSpec default_grid(const std::vector<ControlPair>& pairs, double cell = 0.0);

// Bilinear interpolation of the table. Throws DomainError outside the grid.
Vec2 warp(const DeformationField& field, const Vec2& x_cad);
// Jacobian of warp at x_cad; constant per cell along each axis.
Eigen::Matrix2d warp_jacobian(const DeformationField& field, const Vec2& x_cad);

// Identity table (values equal node positions).
DeformationField identity_field(const GridSpec& grid);

// Per-node discrete Laplacian: sum of second differences along x and y,
// one-sided at the grid boundary. Affine fields are in its kernel.
Eigen::SparseMatrix<double> laplacian_operator(const GridSpec& grid);

double data_term(const DeformationField& field, const std::vector<ControlPair>& pairs);
double smoothness_term(const DeformationField& field);

struct FitReport {
  double objective = 0.0;
  double data = 0.0;
  double smoothness = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  // Objective after every CG iterate, starting with the initial field.
  std::vector<double> history;
};

// Minimizes sum |warp(x_cad) - x_wgs|^2 + lambda * |L values|_F^2 by
// preconditioned conjugate gradients on the normal equations, started from
// the grid nodes shifted by the mean control offset.
// Throws RankDeficiencyError at lambda = 0 when the data cannot pin every
// node.
DeformationField fit_field(const std::vector<ControlPair>& pairs, const GridSpec& grid, double lambda,
                           FitReport* report = nullptr);

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> cv_errors;  // mean held-out error per candidate, meters
  // held_out[c][k]: error on pair k when fitted without it, candidate c
  std::vector<std::vector<double>> held_out;
};

// Leave-one-out cross-validation over the candidates. Near-ties (1e-9 m)
// resolve toward the larger lambda.
LambdaSelection select_lambda_cv(const std::vector<ControlPair>& pairs, const GridSpec& grid,
                                 const std::vector<double>& lambda_grid);

struct InversionResult {
  Vec2 x = Vec2::Zero();
  double residual = 0.0;
  int iterations = 0;
};

// Gauss-Newton solve of warp(x) = x_wgs. Throws ConvergenceError carrying
// the last iterate after 100 iterations or when the residual stays above
// 1e-6 m.
Vec2 invert_warp(const DeformationField& field, const Vec2& x_wgs, std::optional<Vec2> x_init = std::nullopt,
                 InversionResult* info = nullptr);

// Local metric tangent plane about a reference latitude/longitude (degrees):
// x = R cos(lat0) dlon, y = R dlat, R = 6378137 m.
struct GeoReference {
  double lat0 = 0.0;
  double lon0 = 0.0;

  Vec2 to_local(double lat, double lon) const;
  void to_geodetic(const Vec2& local, double& lat, double& lon) const;
};

inline constexpr double kEarthRadius = 6378137.0;

struct GeodeticPair {
  Vec2 x_cad;
  double lat = 0.0;
  double lon = 0.0;
};

// Reference at the centroid of the pairs' latitudes and longitudes.
GeoReference centroid_reference(const std::vector<GeodeticPair>& pairs);
std::vector<ControlPair> to_local_pairs(const std::vector<GeodeticPair>& pairs, const GeoReference& ref);

}  // namespace cityalign
