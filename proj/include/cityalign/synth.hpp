#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cityalign/city_model.hpp"
#include "cityalign/geometry.hpp"
#include "cityalign/image_io.hpp"
#include "cityalign/pose.hpp"
#include "cityalign/raycast.hpp"

namespace cityalign {

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_buildings = 9;
  double area = 200.0 * 200.0;  // m^2, square
  double min_height = 8.0;
  double max_height = 40.0;
  // Footprints turn by up to this angle about world up; 0 keeps every box
  // axis-aligned.
  double max_rotation_deg = 30.0;

  void validate() const;
};

struct BoxFootprint {
  std::array<Vec2, 4> corners;  // counter-clockwise seen from above
  double height = 0.0;
  double rotation = 0.0;  // radians
};

// Terrain of g x g square cells on z = 0 with one box per occupied cell.
// Occupied cells are framed by four terrain quads joining the cell corners to
// the footprint corners. Boxes keep their bottom face, which shares its
// vertices with the frame and so merges into the terrain segment.
struct SyntheticCity {
  SceneSpec spec;
  CityMesh mesh;
  // Ground truth label per polygon: 0 for terrain and box bottoms, then
  // 1 + 5 b + k for wall k (k < 4) and roof (k = 4) of box b.
  std::vector<std::uint32_t> truth;
  std::vector<BoxFootprint> boxes;
  int grid = 1;
  double cell = 0.0;
  Vec2 origin = Vec2::Zero();
};

SyntheticCity generate_city(const SceneSpec& spec);

// A camera standing on a street line (cell boundary) at camera height above
// the terrain, with a random heading and an up direction tilted by at most
// max_tilt_deg.
CameraPose random_street_pose(const SyntheticCity& city, std::mt19937_64& rng, double max_tilt_deg = 0.0);

// Mesh vertices with no occluder closer than their distance minus
// tolerance along the line of sight from `pose`.
std::vector<std::uint32_t> visible_vertices(const CityMesh& mesh, const RayCaster& caster, const CameraPose& pose,
                                            double tolerance = 0.1);

// `count` correspondences drawn from the visible vertices (distinct, in
// random order); the ray of each is rotated by a Gaussian angle of
// noise_deg standard deviation per tangent axis.
std::vector<Correspondence> synthetic_correspondences(const CityMesh& mesh, const RayCaster& caster,
                                                      const CameraPose& pose, std::size_t count,
                                                      std::mt19937_64& rng, double noise_deg = 0.0);

inline constexpr std::array<std::uint8_t, 3> kSkyColor{135, 206, 235};

// Flat colour per segment id; never equal to the sky colour.
std::array<std::uint8_t, 3> segment_color(std::uint32_t segment_id);

// Equirectangular image whose pixel centres are ray cast into the mesh and
// painted with the hit polygon's segment colour (polygon + 1 when
// `segments` is empty), sky elsewhere.
Image synth_panorama(const CityMesh& mesh, const std::vector<std::uint32_t>& segments, const CameraPose& pose,
                     const EquirectGrid& size);
Image synth_panorama(const RayCaster& caster, const std::vector<std::uint32_t>& segments, const CameraPose& pose,
                     const EquirectGrid& size);

}  // namespace cityalign
