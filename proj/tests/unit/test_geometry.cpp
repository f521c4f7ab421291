#include <gtest/gtest.h>

#include <random>

#include "cityalign/geometry.hpp"
#include "cityalign/random.hpp"

using namespace cityalign;

namespace {

void expect_vec_near(const Vec3& a, const Vec3& b, double tol) {
  EXPECT_NEAR(a.x(), b.x(), tol);
  EXPECT_NEAR(a.y(), b.y(), tol);
  EXPECT_NEAR(a.z(), b.z(), tol);
}

}  // namespace

TEST(UnitDir3, NormalizesOnConstruction) {
  const UnitDir3 d(3.0, -4.0, 12.0);
  EXPECT_NEAR(d.vec().norm(), 1.0, 1e-12);
  EXPECT_NEAR(d.x(), 3.0 / 13.0, 1e-15);
}

TEST(UnitDir3, RejectsZeroAndNonFinite) {
  EXPECT_THROW(UnitDir3(0.0, 0.0, 0.0), DegenerateInputError);
  EXPECT_THROW(UnitDir3(std::nan(""), 0.0, 1.0), DegenerateInputError);
}

TEST(CameraPose, RejectsUpsideDown) {
  CameraPose p;
  p.up = UnitDir3(0.0, 0.3, -1.0);
  EXPECT_THROW(p.validate(), DomainError);
  p.up = UnitDir3(0.0, 0.3, 1.0);
  EXPECT_NO_THROW(p.validate());
}

TEST(PoseRotation, IsOrthonormalAndMapsUp) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 200; ++t) {
    const double az = uniform(rng, -kPi, kPi);
    const UnitDir3 up(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), 1.0);
    const Mat3 r = pose_rotation(CameraPose{Vec3::Zero(), az, up});
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    expect_vec_near(r.col(2), up.vec(), 1e-12);
  }
}

TEST(EquirectPixelToRay, CenterIsForward) {
  expect_vec_near(equirect_pixel_to_ray({13312, 6656}, 6656, 3328), Vec3(0, 1, 0), 1e-12);
}

TEST(EquirectPixelToRay, TopRowIsZenith) {
  expect_vec_near(equirect_pixel_to_ray({13312, 6656}, 6656, 0), Vec3(0, 0, 1), 1e-12);
}

TEST(EquirectPixelToRay, QuarterWidthLooksLeft) {
  // lon = 2 pi (128 / 512 - 1/2) = -pi/2, lat = 0 -> (cos0 sin(-pi/2), cos0 cos(-pi/2), 0)
  const Vec3 oracle(std::cos(0.0) * std::sin(-kPi / 2), std::cos(0.0) * std::cos(-kPi / 2), std::sin(0.0));
  expect_vec_near(equirect_pixel_to_ray({512, 256}, 128, 128), oracle, 1e-12);
  expect_vec_near(oracle, Vec3(-1, 0, 0), 1e-12);
}

TEST(EquirectPixelToRay, OutOfRangeThrows) {
  EXPECT_THROW(equirect_pixel_to_ray({512, 256}, -0.1, 10), DomainError);
  EXPECT_THROW(equirect_pixel_to_ray({512, 256}, 10, 256.5), DomainError);
  EXPECT_THROW(equirect_pixel_to_ray({512, 255}, 10, 10), DomainError);
}

TEST(RayToEquirectPixel, ForwardAndNadir) {
  const auto f = ray_to_equirect_pixel({512, 256}, Vec3(0, 1, 0));
  EXPECT_NEAR(f.u, 256.0, 1e-12);
  EXPECT_NEAR(f.v, 128.0, 1e-12);
  const auto n = ray_to_equirect_pixel({512, 256}, Vec3(0, 0, -1));
  EXPECT_EQ(n.u, 0.0);
  EXPECT_NEAR(n.v, 256.0, 1e-12);
}

TEST(RayToEquirectPixel, RoundTrip) {
  const EquirectGrid g{512, 256};
  const auto p = ray_to_equirect_pixel(g, equirect_pixel_to_ray(g, 100.25, 77.5));
  EXPECT_NEAR(p.u, 100.25, 1e-6);
  EXPECT_NEAR(p.v, 77.5, 1e-6);

  std::mt19937_64 rng(3);
  for (int t = 0; t < 1000; ++t) {
    const double u = uniform(rng, 0.0, 511.999), v = uniform(rng, 0.5, 255.5);
    const auto q = ray_to_equirect_pixel(g, equirect_pixel_to_ray(g, u, v));
    EXPECT_NEAR(q.u, u, 1e-6);
    EXPECT_NEAR(q.v, v, 1e-6);
  }
}

TEST(WorldToPano, IdentityPose) {
  const CameraPose id;
  expect_vec_near(world_to_pano(id, Vec3(0, 10, 0)), Vec3(0, 1, 0), 1e-12);
  expect_vec_near(world_to_pano(id, Vec3(0, 0, 5)), Vec3(0, 0, 1), 1e-12);
}

TEST(WorldToPano, AzimuthQuarterTurn) {
  // Heading pi/2 turns forward from +y to +x; the frame's right axis becomes -y.
  CameraPose p;
  p.azimuth = kPi / 2;
  const Vec3 fwd(std::sin(p.azimuth), std::cos(p.azimuth), 0.0);
  const Vec3 right(std::cos(p.azimuth), -std::sin(p.azimuth), 0.0);
  const Vec3 x(10, 0, 0);
  const Vec3 oracle(x.dot(right), x.dot(fwd), x.z());
  expect_vec_near(world_to_pano(p, x), oracle.normalized(), 1e-12);
  expect_vec_near(world_to_pano(p, x), Vec3(0, 1, 0), 1e-12);
}

TEST(WorldToPano, PointAtCameraThrows) {
  CameraPose p;
  p.location = Vec3(1, 2, 3);
  EXPECT_THROW(world_to_pano(p, Vec3(1, 2, 3)), DegenerateInputError);
}

TEST(PerspectiveProject, Examples) {
  PerspectiveIntrinsics intr;
  const auto c = perspective_project(intr, Vec3(0, 0, 1));
  EXPECT_NEAR(c.u, 256.0, 1e-12);
  EXPECT_NEAR(c.v, 256.0, 1e-12);
  EXPECT_TRUE(c.in_front);
  const auto r = perspective_project(intr, Vec3(1, 0, 1).normalized());
  EXPECT_NEAR(r.u, 512.0, 1e-9);
  EXPECT_NEAR(r.v, 256.0, 1e-9);
  EXPECT_TRUE(r.in_front);
  EXPECT_FALSE(perspective_project(intr, Vec3(0, 0, -1)).in_front);
}

TEST(PerspectiveProject, UnprojectRoundTrip) {
  PerspectiveIntrinsics intr;
  intr.fov_deg = 70;
  intr.width = 640;
  intr.height = 480;
  const auto d = perspective_unproject(intr, 123.5, 400.25);
  const auto p = perspective_project(intr, d);
  EXPECT_NEAR(p.u, 123.5, 1e-9);
  EXPECT_NEAR(p.v, 400.25, 1e-9);
}

TEST(PerspectiveIntrinsics, Validation) {
  PerspectiveIntrinsics intr;
  intr.fov_deg = 180;
  EXPECT_THROW(intr.validate(), DomainError);
  intr.fov_deg = 60;
  intr.width = 0;
  EXPECT_THROW(intr.validate(), DomainError);
}

TEST(ViewRotation, PositivePitchLooksUp) {
  PerspectiveIntrinsics intr;
  intr.pitch = deg2rad(30);
  const Vec3 axis = view_rotation(intr) * Vec3(0, 0, 1);
  EXPECT_NEAR(axis.z(), std::sin(deg2rad(30)), 1e-12);
  EXPECT_NEAR(axis.y(), std::cos(deg2rad(30)), 1e-12);
  // image rows grow downward
  const Vec3 down = view_rotation(PerspectiveIntrinsics{}) * Vec3(0, 1, 0);
  expect_vec_near(down, Vec3(0, 0, -1), 1e-12);
}

TEST(MakeViewSet, YawsPitchesDeterminism) {
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 123456789ull}) {
    const auto views = make_view_set(seed);
    ASSERT_EQ(views.size(), 8u);
    for (int k = 0; k < 8; ++k) {
      EXPECT_EQ(views[k].yaw, deg2rad(45.0 * k));
      EXPECT_GE(views[k].pitch, 0.0);
      EXPECT_LE(views[k].pitch, deg2rad(45.0));
      EXPECT_EQ(views[k].width, 512);
      EXPECT_EQ(views[k].fov_deg, 90.0);
    }
    const auto again = make_view_set(seed);
    for (int k = 0; k < 8; ++k) EXPECT_EQ(views[k].pitch, again[k].pitch);
  }
}

TEST(AngleBetween, RobustAtExtremes) {
  EXPECT_EQ(angle_between(Vec3(1, 0, 0), Vec3(2, 0, 0)), 0.0);
  EXPECT_NEAR(angle_between(Vec3(1, 0, 0), Vec3(-1, 0, 0)), kPi, 1e-15);
  EXPECT_NEAR(angle_between(Vec3(1, 0, 0), Vec3(1, 1e-9, 0)), 1e-9, 1e-20);
}
