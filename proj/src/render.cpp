#include "cityalign/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace cityalign {

namespace {

using Screen = Vec2;

double edge(const Screen& a, const Screen& b, const Screen& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

// Pixels on an edge shared by two triangles go to exactly one of them: the
// rule is antisymmetric in the edge direction.
bool owns_edge(const Screen& a, const Screen& b) {
  const Screen e = b - a;
  return e.y() > 0.0 || (e.y() == 0.0 && e.x() > 0.0);
}

std::vector<Vec3> clip_near(const std::array<Vec3, 3>& tri, double near) {
  std::vector<Vec3> out;
  out.reserve(4);
  for (int k = 0; k < 3; ++k) {
    const Vec3& p = tri[k];
    const Vec3& q = tri[(k + 1) % 3];
    const bool pin = p.z() >= near, qin = q.z() >= near;
    if (pin) out.push_back(p);
    if (pin != qin) {
      const double t = (near - p.z()) / (q.z() - p.z());
      Vec3 x = p + t * (q - p);
      x.z() = near;
      out.push_back(x);
    }
  }
  return out;
}

struct Sampler {
  const Image& img;
  std::array<double, 3> operator()(double u, double v) const {
    // Continuous pixel coordinate -> index space (centers at +0.5).
    const double x = u - 0.5, y = v - 0.5;
    const double fx = std::floor(x), fy = std::floor(y);
    const double tx = x - fx, ty = y - fy;
    auto wrap = [w = img.width](long i) { return static_cast<int>(((i % w) + w) % w); };
    auto clampy = [h = img.height](long j) { return static_cast<int>(std::clamp<long>(j, 0, h - 1)); };
    const int x0 = wrap(static_cast<long>(fx)), x1 = wrap(static_cast<long>(fx) + 1);
    const int y0 = clampy(static_cast<long>(fy)), y1 = clampy(static_cast<long>(fy) + 1);
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) {
      const double top = (1 - tx) * img.pixel(x0, y0)[c] + tx * img.pixel(x1, y0)[c];
      const double bottom = (1 - tx) * img.pixel(x0, y1)[c] + tx * img.pixel(x1, y1)[c];
      out[c] = (1 - ty) * top + ty * bottom;
    }
    return out;
  }
};

}  // namespace

SemanticClass semantic_class(SemanticTag tag) {
  switch (tag) {
    case SemanticTag::Building: return SemanticClass::Building;
    case SemanticTag::Terrain: return SemanticClass::TerrainRoad;
    case SemanticTag::Bridge: return SemanticClass::Bridge;
    case SemanticTag::Tree: return SemanticClass::Tree;
    case SemanticTag::Water: return SemanticClass::Water;
    case SemanticTag::Other: return SemanticClass::Other;
  }
  return SemanticClass::Other;
}

std::array<std::uint8_t, 3> semantic_color(SemanticClass c) {
  switch (c) {
    case SemanticClass::Sky: return {70, 130, 180};
    case SemanticClass::Building: return {220, 20, 60};
    case SemanticClass::TerrainRoad: return {128, 64, 128};
    case SemanticClass::Bridge: return {250, 170, 30};
    case SemanticClass::Tree: return {107, 142, 35};
    case SemanticClass::Water: return {0, 80, 200};
    case SemanticClass::Other: return {190, 190, 190};
  }
  return {0, 0, 0};
}

void RenderConfig::validate() const {
  intrinsics.validate();
  pose.validate();
  if (!(near > 0.0)) throw DomainError("near plane must be positive");
}

PreparedMesh::PreparedMesh(const CityMesh& m) : mesh(&m), triangles((m.validate(), triangulate_mesh(m))) {
  normals.resize(m.polygons.size(), Vec3::Zero());
  for (std::size_t p = 0; p < m.polygons.size(); ++p) {
    if (polygon_area(m, p) > 0.0) normals[p] = polygon_normal(m, p).vec();
  }
}

Image resample_pano_to_perspective(const Image& pano, const RenderConfig& cfg) {
  if (pano.channels != 3) throw FormatError("panorama must be RGB");
  if (pano.width != 2 * pano.height || pano.height < 1) {
    throw FormatError("panorama must be 2:1, got " + std::to_string(pano.width) + "x" + std::to_string(pano.height));
  }
  cfg.intrinsics.validate();
  const auto& intr = cfg.intrinsics;
  const EquirectGrid grid{pano.width, pano.height};
  const Mat3 m = view_rotation(intr);
  const double f = intr.focal();
  const Sampler sample{pano};
  Image out(intr.width, intr.height, 3);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Vec3 d((x + 0.5 - 0.5 * intr.width) / f, (y + 0.5 - 0.5 * intr.height) / f, 1.0);
      const auto uv = ray_to_equirect_pixel(grid, m * d);
      const auto c = sample(uv.u, uv.v);
      auto* px = out.pixel(x, y);
      for (int k = 0; k < 3; ++k) px[k] = static_cast<std::uint8_t>(std::clamp(std::lround(c[k]), 0L, 255L));
    }
  }
  return out;
}

RasterLayers render_cad_view(const PreparedMesh& prepared, const std::vector<std::uint32_t>& segments,
                             const RenderConfig& cfg) {
  cfg.validate();
  const CityMesh& mesh = *prepared.mesh;
  if (!segments.empty() && segments.size() != mesh.polygons.size()) {
    throw DomainError("segment table does not match polygon count");
  }
  const auto& intr = cfg.intrinsics;
  const int w = intr.width, h = intr.height;
  const double f = intr.focal();
  const double cx = 0.5 * w, cy = 0.5 * h;

  RasterLayers L;
  L.width = w;
  L.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  L.depth.assign(n, kSkyDepth);
  L.normal.assign(n, Vec3::Zero());
  L.semantic.assign(n, SemanticClass::Sky);
  L.segment_id.assign(n, 0);
  L.polygon.assign(n, -1);

  const Mat3 ct = camera_to_world(cfg.pose, intr).transpose();
  const Vec3& eye = cfg.pose.location;
  std::vector<Vec3> cam_normals(prepared.normals.size());
  for (std::size_t p = 0; p < cam_normals.size(); ++p) cam_normals[p] = ct * prepared.normals[p];

  for (const auto& tri : prepared.triangles) {
    const std::array<Vec3, 3> cam{ct * (tri.a - eye), ct * (tri.b - eye), ct * (tri.c - eye)};
    const Vec3 plane_n = (cam[1] - cam[0]).cross(cam[2] - cam[0]);
    if (plane_n.squaredNorm() == 0.0) continue;
    const double plane_k = plane_n.dot(cam[0]);
    const auto clipped = clip_near(cam, cfg.near);
    if (clipped.size() < 3) continue;

    std::vector<Screen> scr;
    scr.reserve(clipped.size());
    for (const auto& p : clipped) scr.emplace_back(cx + f * p.x() / p.z(), cy + f * p.y() / p.z());

    const std::uint32_t poly = tri.polygon;
    const Vec3& pn = cam_normals[poly];
    const std::uint32_t seg = segments.empty() ? poly + 1 : segments[poly];
    const SemanticClass sem = semantic_class(mesh.tags[poly]);

    for (std::size_t k = 1; k + 1 < scr.size(); ++k) {
      Screen a = scr[0], b = scr[k], c = scr[k + 1];
      double area = edge(a, b, c);
      if (area == 0.0 || !std::isfinite(area)) continue;
      if (area < 0.0) std::swap(b, c);

      const double minx = std::min({a.x(), b.x(), c.x()}), maxx = std::max({a.x(), b.x(), c.x()});
      const double miny = std::min({a.y(), b.y(), c.y()}), maxy = std::max({a.y(), b.y(), c.y()});
      const int x0 = static_cast<int>(std::max(0.0, std::ceil(minx - 0.5)));
      const int x1 = static_cast<int>(std::min<double>(w - 1, std::floor(maxx - 0.5)));
      const int y0 = static_cast<int>(std::max(0.0, std::ceil(miny - 0.5)));
      const int y1 = static_cast<int>(std::min<double>(h - 1, std::floor(maxy - 0.5)));
      const bool own_ab = owns_edge(a, b), own_bc = owns_edge(b, c), own_ca = owns_edge(c, a);

      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Screen p(x + 0.5, y + 0.5);
          const double e0 = edge(a, b, p), e1 = edge(b, c, p), e2 = edge(c, a, p);
          if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
          if ((e0 == 0.0 && !own_ab) || (e1 == 0.0 && !own_bc) || (e2 == 0.0 && !own_ca)) continue;

          const Vec3 d((p.x() - cx) / f, (p.y() - cy) / f, 1.0);
          const double denom = plane_n.dot(d);
          if (denom == 0.0) continue;
          const double z = plane_k / denom;
          if (!(z > 0.0)) continue;
          const std::size_t i = L.index(x, y);
          if (z < L.depth[i] || (z == L.depth[i] && static_cast<std::int32_t>(poly) < L.polygon[i])) {
            L.depth[i] = z;
            L.normal[i] = pn.dot(d) > 0.0 ? Vec3(-pn) : pn;
            L.semantic[i] = sem;
            L.segment_id[i] = seg;
            L.polygon[i] = static_cast<std::int32_t>(poly);
          }
        }
      }
    }
  }
  return L;
}

RasterLayers render_cad_view(const CityMesh& mesh, const std::vector<std::uint32_t>& segments,
                             const RenderConfig& cfg) {
  const PreparedMesh prepared(mesh);
  return render_cad_view(prepared, segments, cfg);
}

std::vector<ViewProducts> render_viewpoint_products(const CityMesh& mesh, const std::vector<std::uint32_t>& segments,
                                                    const Image& pano, const CameraPose& pose, std::uint64_t seed) {
  const PreparedMesh prepared(mesh);
  std::vector<ViewProducts> out;
  const auto views = make_view_set(seed);
  out.reserve(views.size());
  for (std::size_t k = 0; k < views.size(); ++k) {
    RenderConfig cfg;
    cfg.intrinsics = views[k];
    cfg.pose = pose;
    ViewProducts vp;
    vp.index = static_cast<int>(k);
    vp.intrinsics = views[k];
    vp.layers = render_cad_view(prepared, segments, cfg);
    vp.layers.rgb = resample_pano_to_perspective(pano, cfg);
    out.push_back(std::move(vp));
  }
  return out;
}

std::string product_filename(const std::string& pano_id, int view, const char* suffix) {
  return pano_id + "_" + std::to_string(view) + "_" + suffix;
}

std::vector<float> encode_normals(const RasterLayers& layers) {
  std::vector<float> out(layers.normal.size() * 3, 0.0f);
  for (std::size_t i = 0; i < layers.normal.size(); ++i) {
    if (layers.polygon[i] < 0) continue;
    for (int c = 0; c < 3; ++c) out[3 * i + c] = static_cast<float>(0.5 * (layers.normal[i][c] + 1.0));
  }
  return out;
}

std::vector<float> encode_depth(const RasterLayers& layers) {
  std::vector<float> out(layers.depth.size(), 0.0f);
  for (std::size_t i = 0; i < layers.depth.size(); ++i) {
    if (std::isfinite(layers.depth[i])) out[i] = static_cast<float>(layers.depth[i]);
  }
  return out;
}

void write_viewpoint_products(const std::filesystem::path& dir, const std::string& pano_id,
                              const std::vector<ViewProducts>& products) {
  std::filesystem::create_directories(dir);
  nlohmann::json views = nlohmann::json::array();
  for (const auto& vp : products) {
    const auto& L = vp.layers;
    std::vector<std::uint16_t> seg16(L.segment_id.size());
    for (std::size_t i = 0; i < seg16.size(); ++i) {
      if (L.segment_id[i] > 65535) {
        throw DomainError("view " + std::to_string(vp.index) + " shows segment id " +
                          std::to_string(L.segment_id[i]) + " which does not fit a 16-bit png");
      }
      seg16[i] = static_cast<std::uint16_t>(L.segment_id[i]);
    }
    Image sem(L.width, L.height, 3);
    for (int y = 0; y < L.height; ++y) {
      for (int x = 0; x < L.width; ++x) {
        const auto c = semantic_color(L.semantic[L.index(x, y)]);
        std::copy(c.begin(), c.end(), sem.pixel(x, y));
      }
    }
    write_png(dir / product_filename(pano_id, vp.index, "imag.png"), L.rgb);
    write_pfm(dir / product_filename(pano_id, vp.index, "dpth.pfm"), L.width, L.height, 1, encode_depth(L));
    write_pfm(dir / product_filename(pano_id, vp.index, "nrml.pfm"), L.width, L.height, 3, encode_normals(L));
    write_png(dir / product_filename(pano_id, vp.index, "semt.png"), sem);
    write_png_gray16(dir / product_filename(pano_id, vp.index, "segm.png"), L.width, L.height, seg16);

    views.push_back({{"index", vp.index},
                     {"yaw_deg", rad2deg(vp.intrinsics.yaw)},
                     {"pitch_deg", rad2deg(vp.intrinsics.pitch)},
                     {"fov_deg", vp.intrinsics.fov_deg},
                     {"width", vp.intrinsics.width},
                     {"height", vp.intrinsics.height}});
  }
  std::ofstream out(dir / (pano_id + "_views.json"));
  out << nlohmann::json{{"pano_id", pano_id}, {"views", views}}.dump(2) << '\n';
}

std::vector<std::uint8_t> segment_edges(const RasterLayers& layers) {
  std::vector<std::uint8_t> e(layers.segment_id.size(), 0);
  for (int y = 0; y < layers.height; ++y) {
    for (int x = 0; x < layers.width; ++x) {
      const auto id = layers.segment_id[layers.index(x, y)];
      const bool differs = (x > 0 && layers.segment_id[layers.index(x - 1, y)] != id) ||
                           (x + 1 < layers.width && layers.segment_id[layers.index(x + 1, y)] != id) ||
                           (y > 0 && layers.segment_id[layers.index(x, y - 1)] != id) ||
                           (y + 1 < layers.height && layers.segment_id[layers.index(x, y + 1)] != id);
      e[layers.index(x, y)] = differs ? 1 : 0;
    }
  }
  return e;
}

}  // namespace cityalign
