#include <gtest/gtest.h>

#include <random>

#include "cityalign/holistic.hpp"
#include "cityalign/random.hpp"
#include "cityalign/synth.hpp"
#include "test_support.hpp"

using namespace cityalign;

TEST(GenerateCity, TerrainOnly) {
  SceneSpec spec;
  spec.n_buildings = 0;
  const auto city = generate_city(spec);
  EXPECT_TRUE(city.boxes.empty());
  for (auto t : city.mesh.tags) EXPECT_EQ(t, SemanticTag::Terrain);
  EXPECT_EQ(segment_surfaces(city.mesh, build_adjacency(city.mesh), 45.0).segments.size(), 1u);
}

TEST(GenerateCity, SingleBoxGivesSixSegments) {
  SceneSpec spec;
  spec.n_buildings = 1;
  spec.max_rotation_deg = 0.0;
  const auto city = generate_city(spec);
  ASSERT_EQ(city.boxes.size(), 1u);
  std::size_t building_faces = 0;
  for (auto t : city.mesh.tags) building_faces += t == SemanticTag::Building;
  EXPECT_EQ(building_faces, 6u);
  // Bottom face is coplanar with and adjacent to the ground, so it merges.
  const auto seg = segment_surfaces(city.mesh, build_adjacency(city.mesh), 45.0);
  EXPECT_EQ(seg.segments.size(), 6u);
  EXPECT_EQ(testutil::canonical_partition(seg.polygon_segment), testutil::canonical_partition(city.truth));
}

TEST(GenerateCity, SegmentationMatchesTruthLabels) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.n_buildings = 1 + static_cast<int>(seed % 12);
    const auto city = generate_city(spec);
    const auto seg = segment_surfaces(city.mesh, build_adjacency(city.mesh), 45.0);
    EXPECT_EQ(seg.segments.size(), 1u + 5u * spec.n_buildings);
    EXPECT_EQ(testutil::canonical_partition(seg.polygon_segment), testutil::canonical_partition(city.truth)) << seed;
  }
}

TEST(GenerateCity, DeterministicAndValid) {
  SceneSpec spec;
  spec.seed = 77;
  const auto a = generate_city(spec);
  const auto b = generate_city(spec);
  EXPECT_EQ(a.mesh.vertices, b.mesh.vertices);
  EXPECT_EQ(a.mesh.polygons, b.mesh.polygons);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_NO_THROW(a.mesh.validate());
  for (std::size_t p = 0; p < a.mesh.size(); ++p) EXPECT_LT(planarity_error(a.mesh, p), 1e-9);
  spec.seed = 78;
  EXPECT_NE(generate_city(spec).mesh.vertices, a.mesh.vertices);
}

TEST(GenerateCity, FootprintsStayInsideTheirCells) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const auto city = generate_city(spec);
    for (const auto& box : city.boxes) {
      EXPECT_LE(std::abs(rad2deg(box.rotation)), 30.0);
      EXPECT_GE(box.height, spec.min_height);
      EXPECT_LE(box.height, spec.max_height);
      Vec2 c = Vec2::Zero();
      for (const auto& p : box.corners) c += p / 4.0;
      const Vec2 cell = ((c - city.origin) / city.cell).array().floor();
      for (const auto& p : box.corners) {
        const Vec2 local = (p - city.origin) / city.cell - cell;
        EXPECT_GT(local.minCoeff(), 0.05);
        EXPECT_LT(local.maxCoeff(), 0.95);
      }
    }
  }
}

TEST(GenerateCity, RejectsInvalidSpecs) {
  SceneSpec spec;
  spec.n_buildings = -1;
  EXPECT_THROW(generate_city(spec), DomainError);
  spec = SceneSpec{};
  spec.max_height = 1.0;
  EXPECT_THROW(generate_city(spec), DomainError);
  spec = SceneSpec{};
  spec.max_rotation_deg = 40.0;
  EXPECT_THROW(generate_city(spec), DomainError);
}

TEST(StreetPose, OnTerrainOutsideBuildings) {
  SceneSpec spec;
  spec.seed = 3;
  const auto city = generate_city(spec);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 200; ++k) {
    const auto pose = random_street_pose(city, rng, 5.0);
    EXPECT_NEAR(pose.location.z(), kCameraHeight, 1e-12);
    EXPECT_LE(rad2deg(std::acos(pose.up.vec().z())), 5.0 + 1e-9);
    const double half = 0.5 * city.cell * city.grid;
    EXPECT_LT(std::abs(pose.location.x()), half);
    EXPECT_LT(std::abs(pose.location.y()), half);
    EXPECT_NEAR(terrain_elevation_at(city.mesh, pose.location.x(), pose.location.y()), 0.0, 1e-12);
  }
}

TEST(SyntheticCorrespondences, ExactAndVisible) {
  SceneSpec spec;
  spec.seed = 4;
  const auto city = generate_city(spec);
  const RayCaster caster(city.mesh);
  std::mt19937_64 rng(2);
  const auto pose = random_street_pose(city, rng, 2.0);
  const auto corr = synthetic_correspondences(city.mesh, caster, pose, 12, rng);
  ASSERT_EQ(corr.size(), 12u);
  for (const auto& c : corr) {
    EXPECT_LT((c.ray.vec() - world_to_pano(pose, c.world).vec()).norm(), 1e-12);
    const Vec3 d = c.world - pose.location;
    EXPECT_FALSE(caster.intersect(pose.location, d.normalized(), 1e-9, d.norm() - 0.1));
  }
  EXPECT_THROW(synthetic_correspondences(city.mesh, caster, pose, 100000, rng), InsufficientDataError);
}

TEST(SyntheticCorrespondences, NoiseHasRequestedScale) {
  SceneSpec spec;
  spec.seed = 5;
  const auto city = generate_city(spec);
  const RayCaster caster(city.mesh);
  std::mt19937_64 rng(3);
  double sum_sq = 0.0;
  int n = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto pose = random_street_pose(city, rng);
    for (const auto& c : synthetic_correspondences(city.mesh, caster, pose, 12, rng, 0.2)) {
      const double a = rad2deg(std::acos(std::clamp(c.ray.vec().dot(world_to_pano(pose, c.world).vec()), -1.0, 1.0)));
      sum_sq += a * a;
      ++n;
    }
  }
  // Angular error of an isotropic 2-D Gaussian: E[a^2] = 2 sigma^2.
  EXPECT_NEAR(std::sqrt(sum_sq / n), 0.2 * std::sqrt(2.0), 0.02);
}

TEST(SegmentColor, DistinctFromSky) {
  for (std::uint32_t id = 0; id < 100000; ++id) EXPECT_NE(segment_color(id), kSkyColor);
}

TEST(SynthPanorama, EmptyMeshIsAllSky) {
  CameraPose pose;
  const auto img = synth_panorama(CityMesh{}, {}, pose, {64, 32});
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 64; ++x) {
      EXPECT_TRUE(std::equal(kSkyColor.begin(), kSkyColor.end(), img.pixel(x, y)));
    }
  }
}

TEST(SynthPanorama, PixelsMatchSegmentRayCasts) {
  SceneSpec spec;
  spec.seed = 6;
  spec.n_buildings = 4;
  const auto city = generate_city(spec);
  const RayCaster caster(city.mesh);
  std::mt19937_64 rng(4);
  const auto pose = random_street_pose(city, rng, 3.0);
  const EquirectGrid grid{256, 128};
  const auto img = synth_panorama(caster, city.truth, pose, grid);
  EXPECT_EQ(img, synth_panorama(city.mesh, city.truth, pose, grid));
  const Mat3 r = pose_rotation(pose);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const Vec3 d = (r * equirect_pixel_to_ray(grid, x + 0.5, y + 0.5).vec()).normalized();
      const auto hit = caster.intersect(pose.location, d);
      const auto expected = hit ? segment_color(city.truth[hit->polygon]) : kSkyColor;
      ASSERT_TRUE(std::equal(expected.begin(), expected.end(), img.pixel(x, y))) << x << "," << y;
    }
  }
}
