#include "cityalign/pose.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/AutoDiff>

namespace cityalign {

namespace {

using Jet = Eigen::AutoDiffScalar<PoseDelta>;

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;

void up_tangent_basis(const Vec3& up, Vec3& e1, Vec3& e2) {
  const Vec3 seed = std::abs(up.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  e1 = (seed - seed.dot(up) * up).normalized();
  e2 = up.cross(e1);
}

void ray_tangent_basis(const Vec3& ray, Vec3& t1, Vec3& t2) {
  const Vec3 seed = std::abs(ray.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  t1 = (seed - seed.dot(ray) * ray).normalized();
  t2 = ray.cross(t1);
}

template <typename T>
void chart_pose(const CameraPose& base, const Eigen::Matrix<T, 6, 1>& delta, V3<T>& location, T& azimuth,
                V3<T>& up) {
  Vec3 e1, e2;
  up_tangent_basis(base.up.vec(), e1, e2);
  location = base.location.cast<T>() + delta.template head<3>();
  azimuth = T(base.azimuth) + delta(3);
  up = base.up.vec().cast<T>() + e1.cast<T>() * delta(4) + e2.cast<T>() * delta(5);
  using std::sqrt;
  up /= sqrt(up.squaredNorm());
}

// Log-map residual of one correspondence for a pose given in chart form.
template <typename T>
Eigen::Matrix<T, 2, 1> log_residual(const V3<T>& location, const T& azimuth, const V3<T>& up,
                                    const Correspondence& c) {
  using std::atan2;
  using std::sqrt;
  const Eigen::Matrix<T, 3, 3> r = pose_rotation<T>(azimuth, up);
  V3<T> d = c.world.cast<T>() - location;
  d /= sqrt(d.squaredNorm());
  const V3<T> p = r.transpose() * d;

  Vec3 t1, t2;
  ray_tangent_basis(c.ray.vec(), t1, t2);
  const T a = p.dot(t1.cast<T>());
  const T b = p.dot(t2.cast<T>());
  const T cosang = p.dot(c.ray.vec().cast<T>());
  const T q = a * a + b * b;
  T scale;
  if (q > T(1e-16) || cosang < T(0)) {
    T s = sqrt(q);
    if (s < T(1e-8)) s = T(1e-8);
    scale = atan2(s, cosang) / s;
  } else {
    // atan(s/c)/s = 1/c - s^2/(3c^3) + O(s^4)
    scale = T(1) / cosang - q / (T(3) * cosang * cosang * cosang);
  }
  return {scale * a, scale * b};
}

void check_points(const CameraPose& pose, const std::vector<Correspondence>& corr) {
  for (std::size_t i = 0; i < corr.size(); ++i) {
    if (!((corr[i].world - pose.location).norm() > 0.0)) {
      throw DegenerateInputError("correspondence " + std::to_string(i) + " coincides with the camera location",
                                 static_cast<std::ptrdiff_t>(i));
    }
  }
}

}  // namespace

CameraPose retract(const CameraPose& pose, const PoseDelta& delta) {
  Vec3 loc, up;
  double az = 0.0;
  chart_pose<double>(pose, delta, loc, az, up);
  CameraPose out;
  out.location = loc;
  out.azimuth = az;
  out.up = UnitDir3(up);
  return out;
}

CameraPose init_pose(const Vec2& wgs_local, double azimuth, const DeformationField& field, const CityMesh& mesh) {
  const Vec2 xy = invert_warp(field, wgs_local);
  CameraPose pose;
  pose.location = Vec3(xy.x(), xy.y(), terrain_elevation_at(mesh, xy.x(), xy.y()) + kCameraHeight);
  pose.azimuth = azimuth;
  pose.up = UnitDir3(kWorldUp);
  return pose;
}

CameraPose init_pose(double lat, double lon, double azimuth, const GeoReference& ref, const DeformationField& field,
                     const CityMesh& mesh) {
  return init_pose(ref.to_local(lat, lon), azimuth, field, mesh);
}

std::vector<double> residuals(const CameraPose& pose, const std::vector<Correspondence>& corr) {
  check_points(pose, corr);
  const Mat3 rt = pose_rotation(pose).transpose();
  std::vector<double> out;
  out.reserve(corr.size());
  for (const auto& c : corr) {
    const Vec3 p = rt * (c.world - pose.location).normalized();
    out.push_back(angle_between(c.ray.vec(), p));
  }
  return out;
}

double reprojection_objective(const CameraPose& pose, const std::vector<Correspondence>& corr) {
  double sum = 0.0;
  for (double r : residuals(pose, corr)) sum += r * r;
  return sum;
}

Eigen::VectorXd tangent_residuals(const CameraPose& pose, const std::vector<Correspondence>& corr) {
  check_points(pose, corr);
  Eigen::VectorXd r(2 * corr.size());
  const PoseDelta zero = PoseDelta::Zero();
  Vec3 loc, up;
  double az = 0.0;
  chart_pose<double>(pose, zero, loc, az, up);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    r.segment<2>(static_cast<Eigen::Index>(2 * i)) = log_residual<double>(loc, az, up, corr[i]);
  }
  return r;
}

Eigen::MatrixXd tangent_jacobian(const CameraPose& pose, const std::vector<Correspondence>& corr) {
  check_points(pose, corr);
  Eigen::Matrix<Jet, 6, 1> delta;
  for (int k = 0; k < 6; ++k) delta(k) = Jet(0.0, 6, k);
  V3<Jet> loc, up;
  Jet az;
  chart_pose<Jet>(pose, delta, loc, az, up);
  Eigen::MatrixXd j(2 * corr.size(), 6);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const auto r = log_residual<Jet>(loc, az, up, corr[i]);
    j.row(static_cast<Eigen::Index>(2 * i)) = r(0).derivatives().transpose();
    j.row(static_cast<Eigen::Index>(2 * i + 1)) = r(1).derivatives().transpose();
  }
  return j;
}

PoseSolution solve_pose(const CameraPose& init, const std::vector<Correspondence>& corr, const SolveOptions& options) {
  if (corr.size() < kMinCorrespondences) {
    throw InsufficientDataError("pose refinement needs at least " + std::to_string(kMinCorrespondences) +
                                " correspondences, got " + std::to_string(corr.size()));
  }
  init.validate();

  PoseSolution sol;
  sol.few_pairs_warning = corr.size() < kRecommendedCorrespondences;
  CameraPose pose = init;
  Eigen::VectorXd r = tangent_residuals(pose, corr);
  Eigen::MatrixXd j = tangent_jacobian(pose, corr);
  double f = r.squaredNorm();
  Eigen::Matrix<double, 6, 6> h = j.transpose() * j;
  PoseDelta g = j.transpose() * r;
  double mu = 1e-3 * h.diagonal().maxCoeff();
  if (!(mu > 0.0)) mu = 1e-3;
  sol.objective_history.push_back(f);

  int it = 0;
  bool converged = false;
  for (; it < options.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      converged = true;
      break;
    }
    Eigen::Matrix<double, 6, 6> damped = h;
    damped.diagonal().array() += mu;
    const PoseDelta step = -damped.ldlt().solve(g);
    if (!step.allFinite()) {
      mu *= 2.0;
      continue;
    }
    if (step.norm() < options.step_tolerance) {
      converged = true;
      break;
    }

    CameraPose candidate = retract(pose, step);
    bool accept = candidate.up.z() > 0.0;
    Eigen::VectorXd r_new;
    double f_new = f;
    if (accept) {
      try {
        r_new = tangent_residuals(candidate, corr);
        f_new = r_new.squaredNorm();
        accept = std::isfinite(f_new) && f_new < f;
      } catch (const DegenerateInputError&) {
        accept = false;
      }
    }
    if (accept) {
      pose = candidate;
      r = std::move(r_new);
      f = f_new;
      j = tangent_jacobian(pose, corr);
      h = j.transpose() * j;
      g = j.transpose() * r;
      mu /= 3.0;
      sol.objective_history.push_back(f);
    } else {
      mu *= 2.0;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> es(h);
  const double emax = es.eigenvalues().maxCoeff();
  sol.rank_warning = !(es.eigenvalues().minCoeff() > 1e-12 * std::max(emax, 1e-300));

  sol.pose = pose;
  sol.iterations = it;
  sol.converged = converged;
  sol.objective = f;
  for (double rad : residuals(pose, corr)) sol.residuals_deg.push_back(rad2deg(rad));
  return sol;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("percentile of an empty sample");
  if (!(p > 0.0 && p <= 100.0)) throw DomainError("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  // Guard against p/100*n landing a hair above an integer.
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

ReprojectionSummary reprojection_stats(const std::vector<PoseSolution>& solutions) {
  if (solutions.empty()) throw DomainError("no pose solutions to summarize");
  ReprojectionSummary s;
  std::vector<double> pooled;
  for (const auto& sol : solutions) {
    if (sol.residuals_deg.empty()) throw DomainError("pose solution without residuals");
    ImageReprojection img;
    img.median_deg = percentile_nearest_rank(sol.residuals_deg, 50.0);
    img.p95_deg = percentile_nearest_rank(sol.residuals_deg, 95.0);
    s.per_image.push_back(img);
    s.medians_sorted.push_back(img.median_deg);
    s.p95_sorted.push_back(img.p95_deg);
    pooled.insert(pooled.end(), sol.residuals_deg.begin(), sol.residuals_deg.end());
  }
  std::sort(s.medians_sorted.begin(), s.medians_sorted.end());
  std::sort(s.p95_sorted.begin(), s.p95_sorted.end());
  s.pooled_median_deg = percentile_nearest_rank(pooled, 50.0);
  s.pooled_p95_deg = percentile_nearest_rank(pooled, 95.0);
  return s;
}

}  // namespace cityalign
