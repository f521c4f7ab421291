#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cityalign/city_model.hpp"
#include "cityalign/geometry.hpp"
#include "cityalign/render.hpp"

namespace cityalign {

inline constexpr double kDefaultMaxDihedralDeg = 30.0;

struct SurfaceSegment {
  std::uint32_t id = 0;  // 1-based, discovery order
  std::vector<std::uint32_t> polygon_ids;
  UnitDir3 mean_normal;  // area-weighted; meaningful for near-planar segments
  double area = 0.0;
};

struct Segmentation {
  std::vector<SurfaceSegment> segments;
  std::vector<std::uint32_t> polygon_segment;  // polygon -> segment id
  double max_dihedral_deg = kDefaultMaxDihedralDeg;
  double merge_distance = kDefaultMergeDistance;
};

// Angle between the normal axes of two polygons, degrees, ignoring winding.
double dihedral_deg(const CityMesh& mesh, std::size_t a, std::size_t b);

// Breadth-first flood fill from the lowest unvisited polygon; a neighbor
// joins when its dihedral angle to the polygon it was reached from is below
// max_dihedral_deg. Zero-area polygons form singleton segments.
Segmentation segment_surfaces(const CityMesh& mesh, const PolygonAdjacency& adj,
                              double max_dihedral_deg = kDefaultMaxDihedralDeg);

// Renders the views of one viewpoint; index is the position in the pose list.
using ViewpointRenderer = std::function<std::vector<RasterLayers>(const CameraPose& pose, std::size_t index)>;

// Eight make_view_set(seed + index) views at 512^2 per viewpoint.
ViewpointRenderer default_viewpoint_renderer(const CityMesh& mesh, const std::vector<std::uint32_t>& polygon_segment,
                                             std::uint64_t seed);

inline constexpr std::uint32_t kOccurrenceMinPixels = 50;

struct OccurrenceStats {
  std::vector<std::uint32_t> per_segment;  // index = segment id - 1
  std::vector<std::uint32_t> histogram;    // [c] = segments seen in exactly c viewpoints
};

// A segment occurs in a viewpoint when it covers at least min_pixels pixels
// summed over that viewpoint's rendered views.
OccurrenceStats plane_occurrence(const Segmentation& seg, const std::vector<CameraPose>& poses,
                                 const ViewpointRenderer& render, std::uint32_t min_pixels = kOccurrenceMinPixels);

// DBSCAN over axes with d(a, b) = arccos(|<a, b>|). Neighborhoods include
// the point itself and use d <= eps. Clusters are numbered from 0 in
// discovery order; -1 marks noise.
std::vector<int> dbscan_directions(const std::vector<Vec3>& dirs, double eps_deg, std::size_t min_pts);

struct VisibleSegment {
  std::uint32_t id = 0;
  Vec3 normal = Vec3::UnitZ();  // world frame
  double area = 0.0;            // visible pixels
};

// Pixel counts of every segment in a rendered view, paired with the
// segments' mean normals.
std::vector<VisibleSegment> visible_segments(const RasterLayers& layers, const Segmentation& seg);

enum class VpKind { Vertical, Horizontal };

struct VanishingPoint {
  UnitDir3 direction;  // perspective camera frame, largest component positive
  Vec3 world_direction = Vec3::UnitZ();
  VpKind kind = VpKind::Vertical;
};

inline constexpr double kDefaultVpEpsDeg = 3.0;
inline constexpr std::size_t kDefaultVpMinPts = 1;
inline constexpr double kVerticalSkipDeg = 5.0;

// Flips a direction so its largest-magnitude component is positive.
Vec3 canonicalize_direction(const Vec3& d);

// The vertical VP, then one horizontal VP per normal cluster whose
// area-weighted mean normal is more than 5 degrees from vertical.
std::vector<VanishingPoint> extract_vps(const std::vector<VisibleSegment>& visible, const CameraPose& pose,
                                        const PerspectiveIntrinsics& intr, double eps_deg = kDefaultVpEpsDeg,
                                        std::size_t min_pts = kDefaultVpMinPts);

}  // namespace cityalign
