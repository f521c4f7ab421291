#pragma once

// Coordinate conventions shared by the toolkit.
//
//   world frame        z up; azimuth 0 looks along +y, positive azimuth turns
//                      toward +x (compass heading).
//   panorama frame     camera-local: x right, y forward, z up.
//   perspective frame  x right, y down, z forward (image convention).
//
// Pixel coordinates are continuous; pixel (i, j) has its center at
// (i + 0.5, j + 0.5).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "cityalign/errors.hpp"

namespace cityalign {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

inline constexpr double kUnitTolerance = 1e-9;

// Unit 3-vector. Construction normalizes; zero or non-finite input throws.
class UnitDir3 {
 public:
  UnitDir3() : v_(0.0, 0.0, 1.0) {}
  UnitDir3(double x, double y, double z) : UnitDir3(Vec3(x, y, z)) {}
  explicit UnitDir3(const Vec3& v);

  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }

  UnitDir3 operator-() const { return UnitDir3(-v_); }

 private:
  Vec3 v_;
};

// Angle between two directions in radians, robust near 0 and pi.
double angle_between(const Vec3& a, const Vec3& b);

inline const Vec3 kWorldUp{0.0, 0.0, 1.0};

struct CameraPose {
  Vec3 location = Vec3::Zero();
  double azimuth = 0.0;  // radians about world up
  UnitDir3 up;           // camera up direction, world frame

  // Throws DomainError when up is not within 90 degrees of world up.
  void validate() const;
};

// Camera-to-world rotation of a pose. Columns are the panorama frame's
// x (right), y (forward), z (up) axes expressed in world coordinates.
//
// Built by turning the frame about world up by the azimuth, tilting it with
// the minimal rotation that takes world up onto `up`, then one Gram-Schmidt
// pass over the columns.
template <typename T>
Eigen::Matrix<T, 3, 3> pose_rotation(const T& azimuth, const Eigen::Matrix<T, 3, 1>& up) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  using M3 = Eigen::Matrix<T, 3, 3>;
  using V3 = Eigen::Matrix<T, 3, 1>;

  const T ca = cos(azimuth);
  const T sa = sin(azimuth);
  M3 heading;
  heading << ca, sa, T(0),
             -sa, ca, T(0),
             T(0), T(0), T(1);

  // Rodrigues for the rotation taking e_z to `up`: axis e_z x up, cos = up.z.
  const V3 k(-up.y(), up.x(), T(0));
  M3 kx;
  kx << T(0), -k.z(), k.y(),
        k.z(), T(0), -k.x(),
        -k.y(), k.x(), T(0);
  const M3 tilt = M3::Identity() + kx + (kx * kx) / (T(1) + up.z());

  M3 r = tilt * heading;
  V3 c0 = r.col(0);
  c0 /= sqrt(c0.squaredNorm());
  V3 c1 = r.col(1) - c0 * c0.dot(r.col(1));
  c1 /= sqrt(c1.squaredNorm());
  V3 c2 = r.col(2) - c0 * c0.dot(r.col(2)) - c1 * c1.dot(r.col(2));
  c2 /= sqrt(c2.squaredNorm());
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c2;
  return r;
}

Mat3 pose_rotation(const CameraPose& pose);

struct PerspectiveIntrinsics {
  double fov_deg = 90.0;
  int width = 512;
  int height = 512;
  double yaw = 0.0;    // radians, relative to the panorama frame
  double pitch = 0.0;  // radians, positive looks up

  void validate() const;
  double focal() const { return 0.5 * width / std::tan(0.5 * deg2rad(fov_deg)); }
};

// Rotation taking perspective-frame directions into the panorama frame for
// the view's yaw and pitch.
Mat3 view_rotation(const PerspectiveIntrinsics& intr);

// Perspective camera to world: pose_rotation(pose) * view_rotation(intr).
Mat3 camera_to_world(const CameraPose& pose, const PerspectiveIntrinsics& intr);

struct EquirectGrid {
  int width = 0;
  int height = 0;

  void validate() const;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

UnitDir3 equirect_pixel_to_ray(const EquirectGrid& grid, double u, double v);
PixelCoord ray_to_equirect_pixel(const EquirectGrid& grid, const Vec3& d);

// Direction of world point `x` in the panorama frame of `pose`.
// Throws DegenerateInputError when x coincides with the camera location.
UnitDir3 world_to_pano(const CameraPose& pose, const Vec3& x);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  bool in_front = false;
};

Projection perspective_project(const PerspectiveIntrinsics& intr, const Vec3& d_cam);

// Perspective-frame ray through continuous pixel coordinate (u, v).
UnitDir3 perspective_unproject(const PerspectiveIntrinsics& intr, double u, double v);

// Eight 90 degree 512x512 views with yaw k*45 deg and pitch drawn uniformly
// from [0, 45] deg.
std::vector<PerspectiveIntrinsics> make_view_set(std::uint64_t seed);

}  // namespace cityalign
