#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cityalign/geometry.hpp"

namespace cityalign {

enum class SemanticTag : std::uint8_t { Building, Terrain, Bridge, Tree, Water, Other };

std::string_view tag_name(SemanticTag tag);
// Case-insensitive; returns false for names outside the vocabulary.
bool parse_tag(std::string_view name, SemanticTag& out);

using Polygon = std::vector<std::uint32_t>;

// Polygon soup with per-polygon semantic tags. Polygons are vertex-index
// rings kept as authored; only non-planar faces are split on load.
struct CityMesh {
  std::vector<Vec3> vertices;
  std::vector<Polygon> polygons;
  std::vector<SemanticTag> tags;
  // OBJ group each polygon came from; empty when generated in memory.
  std::vector<std::string> groups;
  // Distinct group names whose prefix is not a known tag.
  std::size_t unknown_tag_warnings = 0;

  std::size_t size() const { return polygons.size(); }
  // Throws DomainError on out-of-range indices or rings with fewer than
  // three distinct vertices.
  void validate() const;
};

inline constexpr double kPlanarityTolerance = 1e-3;
inline constexpr double kDefaultMergeDistance = 0.05;

// Reads the OBJ subset (v, f, g; 1-based or negative indices). The semantic
// tag is the group name prefix before the first underscore.
CityMesh load_mesh(const std::filesystem::path& path);
CityMesh parse_obj(std::string_view text);
void save_mesh(const std::filesystem::path& path, const CityMesh& mesh);
std::string format_obj(const CityMesh& mesh);

// Newell normal, oriented by winding. Throws DegenerateInputError for
// zero-area polygons.
UnitDir3 polygon_normal(const CityMesh& mesh, std::size_t index);
double polygon_area(const CityMesh& mesh, std::size_t index);
Vec3 polygon_centroid(const CityMesh& mesh, std::size_t index);
// Largest vertex distance to the least-squares plane of the ring.
double planarity_error(const CityMesh& mesh, std::size_t index);

struct PolygonAdjacency {
  std::vector<std::vector<std::uint32_t>> neighbors;  // sorted, no self
  double merge_distance = kDefaultMergeDistance;

  const std::vector<std::uint32_t>& operator[](std::size_t i) const { return neighbors[i]; }
  std::size_t size() const { return neighbors.size(); }
};

// Two polygons are adjacent when some vertex of one lies strictly closer
// than merge_distance to some vertex of the other. A uniform spatial hash
// with cell size merge_distance finds the candidate pairs.
PolygonAdjacency build_adjacency(const CityMesh& mesh, double merge_distance = kDefaultMergeDistance);

// Height of the highest TERRAIN polygon above (x, y). Throws
// NotCoveredError when none covers the point.
double terrain_elevation_at(const CityMesh& mesh, double x, double y);

// Appends `other` with re-based indices.
void append_mesh(CityMesh& into, const CityMesh& other);

}  // namespace cityalign
