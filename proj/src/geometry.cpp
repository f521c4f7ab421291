#include "cityalign/geometry.hpp"

#include <random>
#include <string>

#include "cityalign/random.hpp"

namespace cityalign {

UnitDir3::UnitDir3(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInputError("cannot normalize zero or non-finite vector");
  v_ = v / n;
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

void CameraPose::validate() const {
  if (!location.allFinite() || !std::isfinite(azimuth)) throw DomainError("camera pose has non-finite fields");
  if (!(up.z() > 0.0)) throw DomainError("camera up direction must be within 90 degrees of world up");
}

Mat3 pose_rotation(const CameraPose& pose) {
  return pose_rotation<double>(pose.azimuth, pose.up.vec());
}

void PerspectiveIntrinsics::validate() const {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw DomainError("field of view must lie in (0, 180) degrees");
  if (width < 1 || height < 1) throw DomainError("perspective image must be at least 1x1");
}

Mat3 view_rotation(const PerspectiveIntrinsics& intr) {
  const double cy = std::cos(intr.yaw), sy = std::sin(intr.yaw);
  const double cp = std::cos(intr.pitch), sp = std::sin(intr.pitch);
  const Vec3 right(cy, -sy, 0.0);
  const Vec3 forward(sy * cp, cy * cp, sp);
  const Vec3 up = right.cross(forward);
  Mat3 m;
  m.col(0) = right;
  m.col(1) = -up;
  m.col(2) = forward;
  return m;
}

Mat3 camera_to_world(const CameraPose& pose, const PerspectiveIntrinsics& intr) {
  return pose_rotation(pose) * view_rotation(intr);
}

void EquirectGrid::validate() const {
  if (width < 2 || height < 1 || width != 2 * height) {
    throw DomainError("equirectangular grid must be 2:1, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
}

UnitDir3 equirect_pixel_to_ray(const EquirectGrid& grid, double u, double v) {
  grid.validate();
  if (!(u >= 0.0 && u < grid.width && v >= 0.0 && v < grid.height)) {
    throw DomainError("panorama pixel outside image");
  }
  const double lon = 2.0 * kPi * (u / grid.width - 0.5);
  const double lat = kPi * (0.5 - v / grid.height);
  const double c = std::cos(lat);
  return UnitDir3(c * std::sin(lon), c * std::cos(lon), std::sin(lat));
}

PixelCoord ray_to_equirect_pixel(const EquirectGrid& grid, const Vec3& d) {
  grid.validate();
  const double horiz = std::hypot(d.x(), d.y());
  const double lat = std::atan2(d.z(), horiz);
  PixelCoord p;
  p.v = grid.height * (0.5 - lat / kPi);
  if (horiz == 0.0) {
    p.u = 0.0;
    return p;
  }
  const double lon = std::atan2(d.x(), d.y());
  p.u = grid.width * (lon / (2.0 * kPi) + 0.5);
  if (p.u >= grid.width) p.u -= grid.width;
  if (p.u < 0.0) p.u += grid.width;
  return p;
}

UnitDir3 world_to_pano(const CameraPose& pose, const Vec3& x) {
  const Vec3 d = x - pose.location;
  const double n = d.norm();
  if (!(n > 0.0)) throw DegenerateInputError("world point coincides with camera location");
  return UnitDir3(pose_rotation(pose).transpose() * (d / n));
}

Projection perspective_project(const PerspectiveIntrinsics& intr, const Vec3& d_cam) {
  Projection p;
  p.in_front = d_cam.z() > 0.0;
  if (!p.in_front) return p;
  const double f = intr.focal();
  p.u = 0.5 * intr.width + f * d_cam.x() / d_cam.z();
  p.v = 0.5 * intr.height + f * d_cam.y() / d_cam.z();
  return p;
}

UnitDir3 perspective_unproject(const PerspectiveIntrinsics& intr, double u, double v) {
  const double f = intr.focal();
  return UnitDir3((u - 0.5 * intr.width) / f, (v - 0.5 * intr.height) / f, 1.0);
}

std::vector<PerspectiveIntrinsics> make_view_set(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PerspectiveIntrinsics> views(8);
  for (int k = 0; k < 8; ++k) {
    views[k].fov_deg = 90.0;
    views[k].width = 512;
    views[k].height = 512;
    views[k].yaw = deg2rad(45.0 * k);
    views[k].pitch = deg2rad(45.0 * uniform01(rng));
  }
  return views;
}

}  // namespace cityalign
