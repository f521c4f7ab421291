#include "cityalign/holistic.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <memory>

namespace cityalign {

double dihedral_deg(const CityMesh& mesh, std::size_t a, std::size_t b) {
  const Vec3 na = polygon_normal(mesh, a).vec();
  const Vec3 nb = polygon_normal(mesh, b).vec();
  return rad2deg(std::atan2(na.cross(nb).norm(), std::abs(na.dot(nb))));
}

Segmentation segment_surfaces(const CityMesh& mesh, const PolygonAdjacency& adj, double max_dihedral_deg) {
  if (!(max_dihedral_deg > 0.0 && max_dihedral_deg < 180.0)) {
    throw DomainError("max dihedral angle must lie in (0, 180) degrees");
  }
  if (adj.size() != mesh.polygons.size()) throw DomainError("adjacency was built for a different mesh");

  const std::size_t n = mesh.polygons.size();
  std::vector<Vec3> normals(n, Vec3::Zero());
  std::vector<double> areas(n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    areas[p] = polygon_area(mesh, p);
    if (areas[p] > 0.0) normals[p] = polygon_normal(mesh, p).vec();
  }
  auto joins = [&](std::size_t a, std::size_t b) {
    if (!(areas[a] > 0.0) || !(areas[b] > 0.0)) return false;
    const Vec3& na = normals[a];
    const Vec3& nb = normals[b];
    return rad2deg(std::atan2(na.cross(nb).norm(), std::abs(na.dot(nb)))) < max_dihedral_deg;
  };

  Segmentation out;
  out.max_dihedral_deg = max_dihedral_deg;
  out.merge_distance = adj.merge_distance;
  out.polygon_segment.assign(n, 0);
  std::deque<std::uint32_t> queue;
  for (std::uint32_t seed = 0; seed < n; ++seed) {
    if (out.polygon_segment[seed] != 0) continue;
    SurfaceSegment seg;
    seg.id = static_cast<std::uint32_t>(out.segments.size() + 1);
    out.polygon_segment[seed] = seg.id;
    queue.push_back(seed);
    while (!queue.empty()) {
      const auto p = queue.front();
      queue.pop_front();
      seg.polygon_ids.push_back(p);
      for (auto q : adj[p]) {
        if (out.polygon_segment[q] == 0 && joins(p, q)) {
          out.polygon_segment[q] = seg.id;
          queue.push_back(q);
        }
      }
    }
    std::sort(seg.polygon_ids.begin(), seg.polygon_ids.end());

    // Area-weighted normal with every member flipped toward the first
    // member's side; winding is not trusted.
    Vec3 sum = Vec3::Zero();
    const Vec3 ref = normals[seg.polygon_ids.front()];
    for (auto p : seg.polygon_ids) {
      const double sgn = normals[p].dot(ref) < 0.0 ? -1.0 : 1.0;
      sum += sgn * areas[p] * normals[p];
      seg.area += areas[p];
    }
    if (sum.norm() > 0.0) {
      seg.mean_normal = UnitDir3(sum);
    } else if (ref.norm() > 0.0) {
      seg.mean_normal = UnitDir3(ref);
    }
    out.segments.push_back(std::move(seg));
  }
  return out;
}

ViewpointRenderer default_viewpoint_renderer(const CityMesh& mesh, const std::vector<std::uint32_t>& polygon_segment,
                                             std::uint64_t seed) {
  auto prepared = std::make_shared<PreparedMesh>(mesh);
  return [prepared, polygon_segment, seed](const CameraPose& pose, std::size_t index) {
    std::vector<RasterLayers> layers;
    for (const auto& view : make_view_set(seed + index)) {
      RenderConfig cfg;
      cfg.intrinsics = view;
      cfg.pose = pose;
      layers.push_back(render_cad_view(*prepared, polygon_segment, cfg));
    }
    return layers;
  };
}

OccurrenceStats plane_occurrence(const Segmentation& seg, const std::vector<CameraPose>& poses,
                                 const ViewpointRenderer& render, std::uint32_t min_pixels) {
  if (poses.empty()) throw DomainError("plane occurrence needs at least one viewpoint");
  OccurrenceStats stats;
  const std::size_t nseg = seg.segments.size();
  stats.per_segment.assign(nseg, 0);
  std::vector<std::uint64_t> pixels(nseg + 1);
  for (std::size_t v = 0; v < poses.size(); ++v) {
    std::fill(pixels.begin(), pixels.end(), 0);
    for (const auto& layers : render(poses[v], v)) {
      for (auto id : layers.segment_id) {
        if (id > 0 && id <= nseg) ++pixels[id];
      }
    }
    for (std::size_t id = 1; id <= nseg; ++id) {
      if (pixels[id] >= min_pixels) ++stats.per_segment[id - 1];
    }
  }
  stats.histogram.assign(poses.size() + 1, 0);
  for (auto c : stats.per_segment) ++stats.histogram[c];
  return stats;
}

std::vector<int> dbscan_directions(const std::vector<Vec3>& dirs, double eps_deg, std::size_t min_pts) {
  if (!(eps_deg > 0.0)) throw DomainError("eps must be positive");
  if (min_pts < 1) throw DomainError("min_pts must be at least 1");
  const std::size_t n = dirs.size();
  const double eps = deg2rad(eps_deg);

  std::vector<Vec3> unit(n);
  for (std::size_t i = 0; i < n; ++i) unit[i] = UnitDir3(dirs[i]).vec();
  auto region = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::atan2(unit[i].cross(unit[j]).norm(), std::abs(unit[i].dot(unit[j])));
      if (d <= eps) out.push_back(j);
    }
    return out;
  };

  constexpr int kUnvisited = -2, kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    const auto seeds = region(i);
    if (seeds.size() < min_pts) {
      label[i] = kNoise;
      continue;
    }
    label[i] = cluster;
    std::deque<std::size_t> frontier(seeds.begin(), seeds.end());
    while (!frontier.empty()) {
      const auto q = frontier.front();
      frontier.pop_front();
      if (label[q] == kNoise) label[q] = cluster;  // border point
      if (label[q] != kUnvisited) continue;
      label[q] = cluster;
      const auto more = region(q);
      if (more.size() >= min_pts) frontier.insert(frontier.end(), more.begin(), more.end());
    }
    ++cluster;
  }
  return label;
}

std::vector<VisibleSegment> visible_segments(const RasterLayers& layers, const Segmentation& seg) {
  std::map<std::uint32_t, double> count;
  for (auto id : layers.segment_id) {
    if (id > 0) count[id] += 1.0;
  }
  std::vector<VisibleSegment> out;
  for (const auto& [id, area] : count) {
    if (id > seg.segments.size()) continue;
    out.push_back({id, seg.segments[id - 1].mean_normal.vec(), area});
  }
  return out;
}

Vec3 canonicalize_direction(const Vec3& d) {
  int k = 0;
  d.cwiseAbs().maxCoeff(&k);
  return d[k] < 0.0 ? Vec3(-d) : d;
}

std::vector<VanishingPoint> extract_vps(const std::vector<VisibleSegment>& visible, const CameraPose& pose,
                                        const PerspectiveIntrinsics& intr, double eps_deg, std::size_t min_pts) {
  pose.validate();
  intr.validate();
  const Mat3 to_cam = camera_to_world(pose, intr).transpose();

  std::vector<VanishingPoint> vps;
  VanishingPoint vertical;
  vertical.kind = VpKind::Vertical;
  vertical.world_direction = kWorldUp;
  vertical.direction = UnitDir3(canonicalize_direction(to_cam * kWorldUp));
  vps.push_back(vertical);
  if (visible.empty()) return vps;

  std::vector<Vec3> normals;
  normals.reserve(visible.size());
  for (const auto& v : visible) normals.push_back(v.normal);
  const auto labels = dbscan_directions(normals, eps_deg, min_pts);
  const int nclusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;

  for (int c = 0; c < nclusters; ++c) {
    Vec3 sum = Vec3::Zero();
    Vec3 ref = Vec3::Zero();
    for (std::size_t i = 0; i < visible.size(); ++i) {
      if (labels[i] != c) continue;
      const Vec3 n = visible[i].normal.normalized();
      if (ref.isZero()) ref = n;
      sum += (n.dot(ref) < 0.0 ? -1.0 : 1.0) * visible[i].area * n;
    }
    if (!(sum.norm() > 0.0)) continue;
    const Vec3 mean = sum.normalized();
    if (rad2deg(std::atan2(mean.cross(kWorldUp).norm(), std::abs(mean.dot(kWorldUp)))) < kVerticalSkipDeg) continue;
    const Vec3 h = mean.cross(kWorldUp).normalized();
    VanishingPoint vp;
    vp.kind = VpKind::Horizontal;
    vp.world_direction = h;
    vp.direction = UnitDir3(canonicalize_direction(to_cam * h));
    vps.push_back(vp);
  }
  return vps;
}

}  // namespace cityalign
