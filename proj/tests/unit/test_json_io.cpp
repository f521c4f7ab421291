#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "cityalign/json_io.hpp"
#include "cityalign/random.hpp"
#include "test_support.hpp"

using namespace cityalign;

TEST(JsonIo, PoseRoundTrip) {
  CameraPose p;
  p.location = Vec3(1.25, -3.5, 2.5);
  p.azimuth = deg2rad(37.0);
  p.up = UnitDir3(0.01, -0.02, 1.0);
  const auto q = pose_from_json(pose_to_json(p));
  EXPECT_EQ(q.location, p.location);
  EXPECT_NEAR(q.azimuth, p.azimuth, 1e-15);
  EXPECT_LT((q.up.vec() - p.up.vec()).norm(), 1e-15);
  EXPECT_NEAR(pose_to_json(p).at("azimuth_deg").get<double>(), 37.0, 1e-12);
}

TEST(JsonIo, FieldRoundTripIsExact) {
  std::mt19937_64 rng(1);
  StoredField f;
  f.field = identity_field(GridSpec{Vec2(-10, 5), 2.5, 4, 3});
  for (auto& v : f.field.values) v += Vec2(standard_normal(rng), standard_normal(rng));
  f.reference = GeoReference{51.5, -0.12};
  f.lambda = 3.0;
  const auto dir = testutil::scratch_dir("json_field");
  write_json_atomic(dir / "f.json", field_to_json(f));
  EXPECT_FALSE(std::filesystem::exists(dir / "f.json.tmp"));
  const auto g = field_from_json(read_json(dir / "f.json"));
  EXPECT_EQ(g.field.values, f.field.values);
  EXPECT_EQ(g.field.grid.nx, 4);
  EXPECT_EQ(g.field.grid.cell, 2.5);
  ASSERT_TRUE(g.reference);
  EXPECT_EQ(g.reference->lat0, 51.5);
  EXPECT_EQ(g.lambda, 3.0);
  EXPECT_THROW(field_from_json(Json{{"cell", 1.0}}), FormatError);
}

TEST(JsonIo, SegmentationRoundTrip) {
  Segmentation s;
  s.max_dihedral_deg = 20.0;
  s.segments = {{1, {0, 2}, UnitDir3(0, 0, 1), 2.0}, {2, {1}, UnitDir3(1, 0, 0), 1.0}};
  s.polygon_segment = {1, 2, 1};
  const auto t = segmentation_from_json(segmentation_to_json(s));
  EXPECT_EQ(t.polygon_segment, s.polygon_segment);
  EXPECT_EQ(t.max_dihedral_deg, 20.0);
  ASSERT_EQ(t.segments.size(), 2u);
  EXPECT_EQ(t.segments[0].polygon_ids, (std::vector<std::uint32_t>{0, 2}));
}

TEST(JsonIo, RecordsRoundTrip) {
  std::vector<ViewpointRecord> r(2);
  r[0].pano_id = "a";
  r[0].capture_date = "2019-05-01";
  r[0].n_annotations = 9;
  r[1].pano_id = "b";
  r[1].indoor = true;
  r[1].quality_ok = false;
  const auto s = records_from_json(records_to_json(r));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].capture_date, "2019-05-01");
  EXPECT_EQ(s[0].n_annotations, 9u);
  EXPECT_TRUE(s[1].indoor);
  EXPECT_FALSE(s[1].quality_ok);
  EXPECT_EQ(records_from_json(Json{{"records", records_to_json(r)}}).size(), 2u);
  EXPECT_THROW(records_from_json(Json{{"x", 1}}), FormatError);
}

TEST(JsonIo, CorrespondencesRoundTrip) {
  CorrespondenceFile c;
  c.pano_id = "p";
  c.grid = {2048, 1024};
  c.pixels = {{100.5, 400.25}, {1500.0, 600.0}};
  for (const auto& px : c.pixels) c.corr.push_back({equirect_pixel_to_ray(c.grid, px.u, px.v), Vec3(1, 2, 3)});
  c.init = CameraPose{};
  const auto d = correspondences_from_json(correspondences_to_json(c));
  ASSERT_EQ(d.corr.size(), 2u);
  EXPECT_LT((d.corr[1].ray.vec() - c.corr[1].ray.vec()).norm(), 1e-15);
  EXPECT_EQ(d.corr[0].world, Vec3(1, 2, 3));
  EXPECT_TRUE(d.init.has_value());
  EXPECT_THROW(correspondences_from_json(Json{{"width", 10}, {"height", 7}, {"pairs", Json::array()}}), DomainError);
}

TEST(JsonIo, GeodeticCsv) {
  const auto dir = testutil::scratch_dir("json_csv");
  std::ofstream(dir / "ok.csv") << "x_cad,y_cad,lat,lon\n1,2,51.5,-0.1\n\n3.5,4,51.6,-0.2\n";
  const auto pairs = read_geodetic_pairs_csv(dir / "ok.csv");
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[1].x_cad, Vec2(3.5, 4.0));
  EXPECT_EQ(pairs[1].lon, -0.2);
  std::ofstream(dir / "bad.csv") << "1,2,51.5,-0.1\n1,2,oops,3\n";
  try {
    read_geodetic_pairs_csv(dir / "bad.csv");
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::ofstream(dir / "short.csv") << "1,2,3\n";
  EXPECT_THROW(read_geodetic_pairs_csv(dir / "short.csv"), FormatError);
}

TEST(JsonIo, MalformedFileIsAFormatError) {
  const auto dir = testutil::scratch_dir("json_bad");
  std::ofstream(dir / "x.json") << "{ not json";
  EXPECT_THROW(read_json(dir / "x.json"), FormatError);
  EXPECT_THROW(read_json(dir / "missing.json"), FormatError);
}
