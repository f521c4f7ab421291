#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cityalign/city_model.hpp"
#include "cityalign/geometry.hpp"
#include "cityalign/image_io.hpp"
#include "cityalign/raycast.hpp"

namespace cityalign {

// Rendered label classes. Curbs have no mesh tag and fold into TerrainRoad.
enum class SemanticClass : std::uint8_t { Sky = 0, Building = 1, TerrainRoad = 2, Bridge = 3, Tree = 4, Water = 5, Other = 6 };

SemanticClass semantic_class(SemanticTag tag);
// Fixed RGB palette indexed by SemanticClass.
std::array<std::uint8_t, 3> semantic_color(SemanticClass c);

inline constexpr double kSkyDepth = std::numeric_limits<double>::infinity();

// Co-registered per-view layers. Depth is z-depth along the optical axis,
// +inf for sky. Normals are unit camera-frame vectors facing the viewer,
// zero for sky.
struct RasterLayers {
  int width = 0;
  int height = 0;
  Image rgb;
  std::vector<double> depth;
  std::vector<Vec3> normal;
  std::vector<SemanticClass> semantic;
  std::vector<std::uint32_t> segment_id;  // 0 = sky
  std::vector<std::int32_t> polygon;      // depth-winning polygon, -1 = sky

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

struct RenderConfig {
  PerspectiveIntrinsics intrinsics;
  CameraPose pose;
  double near = 0.1;

  void validate() const;
};

// Triangulation and per-polygon normals computed once per mesh and shared by
// every view rendered from it.
struct PreparedMesh {
  const CityMesh* mesh = nullptr;
  std::vector<MeshTriangle> triangles;
  std::vector<Vec3> normals;  // world-frame Newell normals, zero if degenerate

  explicit PreparedMesh(const CityMesh& m);
};

// Bilinear resampling (longitude wraps) of the panorama into the view
// described by cfg.intrinsics (yaw/pitch relative to the panorama frame).
Image resample_pano_to_perspective(const Image& pano, const RenderConfig& cfg);

// Z-buffer rasterization of the mesh. `segments` maps polygon -> segment id
// (> 0); when empty, polygon index + 1 is used.
RasterLayers render_cad_view(const PreparedMesh& prepared, const std::vector<std::uint32_t>& segments,
                             const RenderConfig& cfg);
RasterLayers render_cad_view(const CityMesh& mesh, const std::vector<std::uint32_t>& segments,
                             const RenderConfig& cfg);

struct ViewProducts {
  int index = 0;
  PerspectiveIntrinsics intrinsics;
  RasterLayers layers;  // includes rgb
};

// Eight views from make_view_set(seed), each with panorama resampling and
// CAD layers.
std::vector<ViewProducts> render_viewpoint_products(const CityMesh& mesh, const std::vector<std::uint32_t>& segments,
                                                    const Image& pano, const CameraPose& pose, std::uint64_t seed);

// Product files for view k: <pano_id>_<k>_{imag.png|dpth.pfm|nrml.pfm|semt.png|segm.png}.
inline constexpr std::array<const char*, 5> kProductSuffixes{"imag.png", "dpth.pfm", "nrml.pfm", "semt.png",
                                                             "segm.png"};
std::string product_filename(const std::string& pano_id, int view, const char* suffix);

// Writes the five product files per view plus <pano_id>_views.json with the
// yaw/pitch of every view. Throws DomainError when a view shows segment ids
// above 65535.
void write_viewpoint_products(const std::filesystem::path& dir, const std::string& pano_id,
                              const std::vector<ViewProducts>& products);

// (n + 1) / 2 per channel, 0 for sky.
std::vector<float> encode_normals(const RasterLayers& layers);
std::vector<float> encode_depth(const RasterLayers& layers);

// Pixels whose segment id differs from a 4-neighbor.
std::vector<std::uint8_t> segment_edges(const RasterLayers& layers);

}  // namespace cityalign
