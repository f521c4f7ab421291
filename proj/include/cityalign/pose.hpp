#pragma once

#include <vector>

#include <Eigen/Core>

#include "cityalign/city_model.hpp"
#include "cityalign/geometry.hpp"
#include "cityalign/georeg.hpp"

namespace cityalign {

inline constexpr double kCameraHeight = 2.5;  // meters above terrain
inline constexpr std::size_t kMinCorrespondences = 4;
inline constexpr std::size_t kRecommendedCorrespondences = 8;

struct Correspondence {
  UnitDir3 ray;  // panorama-frame direction of the labeled pixel
  Vec3 world;    // CAD vertex, meters
};

using PoseDelta = Eigen::Matrix<double, 6, 1>;

// Chart around a pose: (dlocation[3], dazimuth, up tangent[2]). The up
// direction moves in a fixed tangent basis and is re-normalized.
CameraPose retract(const CameraPose& pose, const PoseDelta& delta);

// Initial pose for a viewpoint given its geodetic plan position expressed in
// the field's local metric frame: inverse-warped plan location, terrain
// height plus camera height, world-up camera.
CameraPose init_pose(const Vec2& wgs_local, double azimuth, const DeformationField& field, const CityMesh& mesh);
CameraPose init_pose(double lat, double lon, double azimuth, const GeoReference& ref, const DeformationField& field,
                     const CityMesh& mesh);

// Angular reprojection errors, the angle between each ray and P(world), in
// radians (atan2 form, exact near 0 and pi).
// Throws DegenerateInputError (with index) for a point at the camera.
std::vector<double> residuals(const CameraPose& pose, const std::vector<Correspondence>& corr);
double reprojection_objective(const CameraPose& pose, const std::vector<Correspondence>& corr);

// Stacked 2-vector residuals: each is the log map of P(world) in the tangent
// plane of the ray, so its norm is the angular error and the sum of squares
// equals reprojection_objective. Smooth at zero error, unlike arccos.
Eigen::VectorXd tangent_residuals(const CameraPose& pose, const std::vector<Correspondence>& corr);
// Forward-mode derivative of tangent_residuals with respect to the chart at
// delta = 0; 2n x 6.
Eigen::MatrixXd tangent_jacobian(const CameraPose& pose, const std::vector<Correspondence>& corr);

struct SolveOptions {
  int max_iterations = 200;
  double step_tolerance = 1e-10;
  double gradient_tolerance = 1e-10;
};

struct PoseSolution {
  CameraPose pose;
  std::vector<double> residuals_deg;
  int iterations = 0;
  bool converged = false;
  // JtJ numerically singular at the solution (e.g. points collinear with
  // the camera).
  bool rank_warning = false;
  // Fewer correspondences than the labeling floor of 8.
  bool few_pairs_warning = false;
  double objective = 0.0;
  std::vector<double> objective_history;  // after each accepted step
};

// Levenberg-Marquardt over the 6-DoF chart. Damping starts at
// 1e-3 * max diag(JtJ), shrinks by 3 on accepted steps, doubles on rejects.
PoseSolution solve_pose(const CameraPose& init, const std::vector<Correspondence>& corr,
                        const SolveOptions& options = {});

// Nearest-rank percentile (p in (0, 100]) of an unsorted sample.
double percentile_nearest_rank(std::vector<double> values, double p);

struct ImageReprojection {
  double median_deg = 0.0;
  double p95_deg = 0.0;
};

struct ReprojectionSummary {
  std::vector<ImageReprojection> per_image;
  std::vector<double> medians_sorted;  // curve of per-image medians
  std::vector<double> p95_sorted;      // curve of per-image 95th percentiles
  double pooled_median_deg = 0.0;
  double pooled_p95_deg = 0.0;
};

ReprojectionSummary reprojection_stats(const std::vector<PoseSolution>& solutions);

}  // namespace cityalign
