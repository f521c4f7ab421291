#include <gtest/gtest.h>

#include <random>

#include "cityalign/image_io.hpp"
#include "cityalign/json_io.hpp"
#include "cityalign/random.hpp"
#include "cityalign/raycast.hpp"
#include "cityalign/render.hpp"
#include "cityalign/synth.hpp"
#include "test_support.hpp"

using namespace cityalign;

namespace {

// Brute force over fan triangles of convex polygons.
std::optional<std::pair<double, std::uint32_t>> brute_cast(const CityMesh& m, const Vec3& o, const Vec3& d) {
  std::optional<std::pair<double, std::uint32_t>> best;
  for (std::uint32_t p = 0; p < m.polygons.size(); ++p) {
    const auto& poly = m.polygons[p];
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      const Vec3 a = m.vertices[poly[0]], b = m.vertices[poly[k]], c = m.vertices[poly[k + 1]];
      const Vec3 e1 = b - a, e2 = c - a, q = d.cross(e2);
      const double det = e1.dot(q);
      if (std::abs(det) < 1e-14) continue;
      const Vec3 s = o - a;
      const double u = s.dot(q) / det;
      const Vec3 r = s.cross(e1);
      const double v = d.dot(r) / det;
      if (u < 0 || v < 0 || u + v > 1) continue;
      const double t = e2.dot(r) / det;
      if (t > 1e-9 && (!best || t < best->first)) best = std::make_pair(t, p);
    }
  }
  return best;
}

Vec3 newell(const CityMesh& m, std::uint32_t p) {
  Vec3 n = Vec3::Zero();
  const auto& poly = m.polygons[p];
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec3& a = m.vertices[poly[k]];
    const Vec3& b = m.vertices[poly[(k + 1) % poly.size()]];
    n += Vec3((a.y() - b.y()) * (a.z() + b.z()), (a.z() - b.z()) * (a.x() + b.x()), (a.x() - b.x()) * (a.y() + b.y()));
  }
  return n.normalized();
}

RenderConfig street_view(const SyntheticCity& city, std::mt19937_64& rng, int size) {
  RenderConfig cfg;
  cfg.pose = random_street_pose(city, rng, 3.0);
  cfg.intrinsics.width = cfg.intrinsics.height = size;
  cfg.intrinsics.yaw = uniform(rng, -kPi, kPi);
  cfg.intrinsics.pitch = deg2rad(uniform(rng, 0.0, 45.0));
  return cfg;
}

bool interior(const RasterLayers& L, int x, int y) {
  if (x == 0 || y == 0 || x == L.width - 1 || y == L.height - 1) return false;
  const auto p = L.polygon[L.index(x, y)];
  return L.polygon[L.index(x - 1, y)] == p && L.polygon[L.index(x + 1, y)] == p && L.polygon[L.index(x, y - 1)] == p &&
         L.polygon[L.index(x, y + 1)] == p;
}

}  // namespace

TEST(RayCaster, MatchesBruteForceOnRandomScenes) {
  std::mt19937_64 rng(1);
  for (int s = 0; s < 5; ++s) {
    SceneSpec spec;
    spec.seed = 10 + s;
    const auto city = generate_city(spec);
    const RayCaster caster(city.mesh);
    for (int k = 0; k < 500; ++k) {
      const Vec3 o(uniform(rng, -120, 120), uniform(rng, -120, 120), uniform(rng, 0.5, 60));
      const Vec3 d = Vec3(standard_normal(rng), standard_normal(rng), standard_normal(rng)).normalized();
      const auto a = caster.intersect(o, d);
      const auto b = brute_cast(city.mesh, o, d);
      ASSERT_EQ(a.has_value(), b.has_value());
      if (a) {
        EXPECT_NEAR(a->t, b->first, 1e-9 * std::max(1.0, b->first));
      }
    }
  }
}

TEST(RayCaster, RespectsRange) {
  const auto m = testutil::unit_cube();
  const RayCaster caster(m);
  const Vec3 o(0.5, 0.5, 5.0), d(0, 0, -1);
  ASSERT_TRUE(caster.intersect(o, d));
  EXPECT_NEAR(caster.intersect(o, d)->t, 4.0, 1e-12);
  EXPECT_FALSE(caster.intersect(o, d, 1e-9, 3.9));
  EXPECT_NEAR(caster.intersect(o, d, 4.5)->t, 5.0, 1e-12);
  EXPECT_FALSE(RayCaster(CityMesh{}).intersect(o, d));
}

TEST(Render, EmptyMeshIsAllSky) {
  RenderConfig cfg;
  cfg.intrinsics.width = cfg.intrinsics.height = 64;
  const auto L = render_cad_view(CityMesh{}, {}, cfg);
  for (std::size_t i = 0; i < L.depth.size(); ++i) {
    EXPECT_EQ(L.depth[i], kSkyDepth);
    EXPECT_EQ(L.polygon[i], -1);
    EXPECT_EQ(L.segment_id[i], 0u);
    EXPECT_EQ(L.semantic[i], SemanticClass::Sky);
    EXPECT_EQ(L.normal[i], Vec3::Zero());
  }
}

TEST(Render, DepthMatchesRayCasting) {
  std::mt19937_64 rng(2);
  std::size_t total = 0, good = 0;
  for (int s = 0; s < 20; ++s) {
    SceneSpec spec;
    spec.seed = 300 + s;
    const auto city = generate_city(spec);
    const auto cfg = street_view(city, rng, 128);
    const auto L = render_cad_view(city.mesh, {}, cfg);
    const Mat3 c2w = camera_to_world(cfg.pose, cfg.intrinsics);
    const double f = cfg.intrinsics.focal();
    for (int y = 0; y < L.height; ++y) {
      for (int x = 0; x < L.width; ++x) {
        if (!interior(L, x, y)) continue;
        const Vec3 dc((x + 0.5 - 64.0) / f, (y + 0.5 - 64.0) / f, 1.0);
        const auto hit = brute_cast(city.mesh, cfg.pose.location, (c2w * dc).normalized());
        const double z = L.depth[L.index(x, y)];
        ++total;
        if (!hit) {
          good += std::isinf(z);
        } else {
          good += std::abs(hit->first / dc.norm() - z) <= 1e-4;
        }
      }
    }
  }
  ASSERT_GT(total, 20u * 128 * 100);
  EXPECT_GE(static_cast<double>(good), 0.999 * static_cast<double>(total));
}

TEST(Render, NearFacadeOccludesFarFacade) {
  CityMesh m;
  testutil::add_quad(m, Vec3(-5, 10, -5), Vec3(5, 10, -5), Vec3(5, 10, 5), Vec3(-5, 10, 5), SemanticTag::Building);
  testutil::add_quad(m, Vec3(-5, 20, -5), Vec3(5, 20, -5), Vec3(5, 20, 5), Vec3(-5, 20, 5), SemanticTag::Building);
  RenderConfig cfg;
  cfg.intrinsics.width = cfg.intrinsics.height = 32;
  const auto L = render_cad_view(m, {7, 9}, cfg);
  const auto i = L.index(16, 16);
  EXPECT_EQ(L.polygon[i], 0);
  EXPECT_EQ(L.segment_id[i], 7u);
  EXPECT_NEAR(L.depth[i], 10.0, 1e-12);
  EXPECT_EQ(L.semantic[i], SemanticClass::Building);
}

TEST(Render, NormalsEqualWinnerPolygonNormals) {
  std::mt19937_64 rng(3);
  for (int s = 0; s < 5; ++s) {
    SceneSpec spec;
    spec.seed = 400 + s;
    const auto city = generate_city(spec);
    const PreparedMesh prepared(city.mesh);
    const auto cfg = street_view(city, rng, 128);
    const auto L = render_cad_view(prepared, {}, cfg);
    const Mat3 ct = camera_to_world(cfg.pose, cfg.intrinsics).transpose();
    const double f = cfg.intrinsics.focal();
    for (int y = 0; y < L.height; ++y) {
      for (int x = 0; x < L.width; ++x) {
        const auto i = L.index(x, y);
        if (L.polygon[i] < 0) continue;
        const Vec3 n = ct * prepared.normals[L.polygon[i]];
        EXPECT_TRUE(L.normal[i] == n || L.normal[i] == Vec3(-n));
        const Vec3 d((x + 0.5 - 64.0) / f, (y + 0.5 - 64.0) / f, 1.0);
        EXPECT_LE(L.normal[i].dot(d), 0.0);
        const Vec3 oracle = ct * newell(city.mesh, L.polygon[i]);
        EXPECT_LT(std::min((L.normal[i] - oracle).norm(), (L.normal[i] + oracle).norm()), 1e-12);
      }
    }
  }
}

TEST(Render, Deterministic) {
  SceneSpec spec;
  spec.seed = 5;
  const auto city = generate_city(spec);
  std::mt19937_64 rng(4);
  const auto cfg = street_view(city, rng, 96);
  const auto a = render_cad_view(city.mesh, {}, cfg);
  const auto b = render_cad_view(city.mesh, {}, cfg);
  EXPECT_EQ(encode_depth(a), encode_depth(b));
  EXPECT_EQ(encode_normals(a), encode_normals(b));
  EXPECT_EQ(a.polygon, b.polygon);
  EXPECT_EQ(a.segment_id, b.segment_id);
}

TEST(Render, ViewYawMatchesPoseHeading) {
  SceneSpec spec;
  spec.seed = 6;
  const auto city = generate_city(spec);
  std::mt19937_64 rng(5);
  RenderConfig a = street_view(city, rng, 64);
  a.pose.up = UnitDir3();
  a.pose.azimuth = 0.3;
  a.intrinsics.yaw = 0.9;
  RenderConfig b = a;
  b.pose.azimuth = 1.2;
  b.intrinsics.yaw = 0.0;
  const auto la = render_cad_view(city.mesh, {}, a);
  const auto lb = render_cad_view(city.mesh, {}, b);
  std::size_t same = 0;
  for (std::size_t i = 0; i < la.polygon.size(); ++i) same += la.polygon[i] == lb.polygon[i];
  EXPECT_GE(static_cast<double>(same), 0.999 * static_cast<double>(la.polygon.size()));
}

TEST(Resample, ConstantPanoramaGivesConstantView) {
  Image pano(256, 128, 3);
  for (std::size_t i = 0; i < pano.data.size(); i += 3) {
    pano.data[i] = 10;
    pano.data[i + 1] = 120;
    pano.data[i + 2] = 250;
  }
  RenderConfig cfg;
  cfg.intrinsics.width = cfg.intrinsics.height = 64;
  cfg.intrinsics.yaw = 2.0;
  cfg.intrinsics.pitch = 0.5;
  const auto img = resample_pano_to_perspective(pano, cfg);
  ASSERT_EQ(img.width, 64);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      EXPECT_EQ(img.pixel(x, y)[0], 10);
      EXPECT_EQ(img.pixel(x, y)[1], 120);
      EXPECT_EQ(img.pixel(x, y)[2], 250);
    }
  }
}

TEST(Resample, ForwardPixelLandsAtViewCenter) {
  const EquirectGrid grid{2048, 1024};
  Image pano(grid.width, grid.height, 3);
  const auto c = ray_to_equirect_pixel(grid, Vec3(0, 1, 0));
  const int cu = static_cast<int>(c.u), cv = static_cast<int>(c.v);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) std::fill_n(pano.pixel(cu + dx, cv + dy), 3, 255);
  }
  RenderConfig cfg;
  const auto img = resample_pano_to_perspective(pano, cfg);
  int bx = 0, by = 0, best = -1;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.pixel(x, y)[0] > best) best = img.pixel(x, y)[0], bx = x, by = y;
    }
  }
  EXPECT_GT(best, 200);
  EXPECT_LE(std::abs(bx - 256), 1);
  EXPECT_LE(std::abs(by - 256), 1);
}

TEST(Products, EightViewsWithExpectedYawsAndAlignedEdges) {
  SceneSpec spec;
  spec.seed = 7;
  const auto city = generate_city(spec);
  std::mt19937_64 rng(6);
  const auto pose = random_street_pose(city, rng, 0.0);
  const auto pano = synth_panorama(city.mesh, {}, pose, {4096, 2048});
  const auto products = render_viewpoint_products(city.mesh, {}, pano, pose, 11);
  ASSERT_EQ(products.size(), 8u);
  std::size_t edges = 0, matched = 0;
  for (int k = 0; k < 8; ++k) {
    const auto& vp = products[k];
    EXPECT_NEAR(rad2deg(vp.intrinsics.yaw), 45.0 * k, 1e-9);
    const auto& L = vp.layers;
    const auto seg_edges = segment_edges(L);
    auto rgb_edge = [&](int x, int y) {
      const auto* p = L.rgb.pixel(x, y);
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& o : nb) {
        const int u = x + o[0], v = y + o[1];
        if (u < 0 || v < 0 || u >= L.width || v >= L.height) continue;
        if (!std::equal(p, p + 3, L.rgb.pixel(u, v))) return true;
      }
      return false;
    };
    for (int y = 1; y + 1 < L.height; ++y) {
      for (int x = 1; x + 1 < L.width; ++x) {
        if (!seg_edges[L.index(x, y)]) continue;
        ++edges;
        bool near = false;
        for (int dy = -1; dy <= 1 && !near; ++dy) {
          for (int dx = -1; dx <= 1 && !near; ++dx) near = rgb_edge(x + dx, y + dy);
        }
        matched += near;
      }
    }
  }
  ASSERT_GT(edges, 1000u);
  EXPECT_GE(static_cast<double>(matched), 0.99 * static_cast<double>(edges));
}

TEST(Products, WritesAllFilesAndRoundTrips) {
  SceneSpec spec;
  spec.seed = 8;
  spec.n_buildings = 4;
  const auto city = generate_city(spec);
  std::mt19937_64 rng(7);
  const auto pose = random_street_pose(city, rng, 0.0);
  const auto pano = synth_panorama(city.mesh, {}, pose, {512, 256});
  const auto products = render_viewpoint_products(city.mesh, {}, pano, pose, 3);
  const auto dir = testutil::scratch_dir("render_products");
  write_viewpoint_products(dir, "p0", products);
  for (int k = 0; k < 8; ++k) {
    for (const char* s : kProductSuffixes) EXPECT_TRUE(std::filesystem::exists(dir / product_filename("p0", k, s)));
  }
  const auto& L = products[2].layers;
  int w = 0, h = 0, c = 0;
  EXPECT_EQ(read_pfm(dir / product_filename("p0", 2, "dpth.pfm"), w, h, c), encode_depth(L));
  EXPECT_EQ(c, 1);
  EXPECT_EQ(read_pfm(dir / product_filename("p0", 2, "nrml.pfm"), w, h, c), encode_normals(L));
  EXPECT_EQ(c, 3);
  EXPECT_EQ(read_png(dir / product_filename("p0", 2, "imag.png")), L.rgb);
  const auto seg = read_png_gray16(dir / product_filename("p0", 2, "segm.png"), w, h);
  ASSERT_EQ(seg.size(), L.segment_id.size());
  for (std::size_t i = 0; i < seg.size(); ++i) EXPECT_EQ(seg[i], L.segment_id[i]);
  const auto views = read_json(dir / "p0_views.json").at("views");
  ASSERT_EQ(views.size(), 8u);
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(views[k].at("yaw_deg").get<double>(), 45.0 * k, 1e-9);
}

TEST(Products, SegmentIdsAbove16BitsAreRejected) {
  CityMesh m;
  testutil::add_quad(m, Vec3(-5, 10, -5), Vec3(5, 10, -5), Vec3(5, 10, 5), Vec3(-5, 10, 5), SemanticTag::Building);
  ViewProducts vp;
  RenderConfig cfg;
  cfg.intrinsics.width = cfg.intrinsics.height = 16;
  vp.intrinsics = cfg.intrinsics;
  vp.layers = render_cad_view(m, {70000}, cfg);
  vp.layers.rgb = Image(16, 16, 3);
  EXPECT_THROW(write_viewpoint_products(testutil::scratch_dir("render_big"), "p", {vp}), DomainError);
}

TEST(ImageIo, PfmAndPngRoundTrip) {
  std::mt19937_64 rng(8);
  const auto dir = testutil::scratch_dir("image_io");
  std::vector<float> one(7 * 5), three(7 * 5 * 3);
  for (auto& v : one) v = static_cast<float>(standard_normal(rng));
  for (auto& v : three) v = static_cast<float>(standard_normal(rng));
  write_pfm(dir / "a.pfm", 7, 5, 1, one);
  write_pfm(dir / "b.pfm", 7, 5, 3, three);
  int w = 0, h = 0, c = 0;
  EXPECT_EQ(read_pfm(dir / "a.pfm", w, h, c), one);
  EXPECT_EQ(w, 7);
  EXPECT_EQ(h, 5);
  EXPECT_EQ(read_pfm(dir / "b.pfm", w, h, c), three);
  EXPECT_EQ(c, 3);

  Image img(9, 4, 3);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(uniform_index(rng, 256));
  write_png(dir / "c.png", img);
  EXPECT_EQ(read_png(dir / "c.png"), img);
  std::vector<std::uint16_t> g(9 * 4);
  for (auto& v : g) v = static_cast<std::uint16_t>(uniform_index(rng, 65536));
  write_png_gray16(dir / "d.png", 9, 4, g);
  EXPECT_EQ(read_png_gray16(dir / "d.png", w, h), g);
}
