#include "cityalign/raycast.hpp"

#include <algorithm>
#include <numeric>

namespace cityalign {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Strictly inside triangle (a, b, c) given counter-clockwise order.
bool strictly_inside(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
  return cross2(b - a, p - a) > 0.0 && cross2(c - b, p - b) > 0.0 && cross2(a - c, p - c) > 0.0;
}

}  // namespace

std::vector<TriangleIndices> triangulate_polygon(const CityMesh& mesh, std::size_t index) {
  const auto& ring = mesh.polygons.at(index);
  std::vector<TriangleIndices> out;
  if (ring.size() == 3) {
    out.push_back({ring[0], ring[1], ring[2]});
    return out;
  }
  const Vec3 n = polygon_normal(mesh, index).vec();
  // Drop the dominant axis; keep orientation counter-clockwise.
  int axis = 0;
  n.cwiseAbs().maxCoeff(&axis);
  const int u = (axis + 1) % 3, v = (axis + 2) % 3;
  const double sign = n[axis] >= 0.0 ? 1.0 : -1.0;
  std::vector<Vec2> pts;
  pts.reserve(ring.size());
  for (auto i : ring) pts.emplace_back(mesh.vertices[i][u], sign * mesh.vertices[i][v]);

  std::vector<std::size_t> remaining(ring.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::size_t guard = 0;
  while (remaining.size() > 3 && guard < ring.size() * ring.size()) {
    ++guard;
    bool clipped = false;
    const std::size_t m = remaining.size();
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t ip = remaining[(k + m - 1) % m], ic = remaining[k], in = remaining[(k + 1) % m];
      const Vec2 &a = pts[ip], &b = pts[ic], &c = pts[in];
      if (cross2(b - a, c - b) <= 0.0) continue;  // reflex or collinear
      bool ear = true;
      for (std::size_t q : remaining) {
        if (q == ip || q == ic || q == in) continue;
        if (strictly_inside(pts[q], a, b, c)) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      out.push_back({ring[ip], ring[ic], ring[in]});
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(k));
      clipped = true;
      break;
    }
    if (!clipped) break;
  }
  if (remaining.size() > 3) {
    for (std::size_t k = 1; k + 1 < remaining.size(); ++k) {
      out.push_back({ring[remaining[0]], ring[remaining[k]], ring[remaining[k + 1]]});
    }
  } else {
    out.push_back({ring[remaining[0]], ring[remaining[1]], ring[remaining[2]]});
  }
  return out;
}

std::vector<MeshTriangle> triangulate_mesh(const CityMesh& mesh) {
  std::vector<MeshTriangle> tris;
  for (std::size_t p = 0; p < mesh.polygons.size(); ++p) {
    if (!(polygon_area(mesh, p) > 0.0)) continue;
    for (const auto& t : triangulate_polygon(mesh, p)) {
      tris.push_back({mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], static_cast<std::uint32_t>(p)});
    }
  }
  return tris;
}

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-300) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  return e2.dot(qv) * inv;
}

RayCaster::RayCaster(const CityMesh& mesh) : tris_(triangulate_mesh(mesh)) { build(); }

RayCaster::RayCaster(std::vector<MeshTriangle> triangles) : tris_(std::move(triangles)) { build(); }

void RayCaster::build() {
  nodes_.clear();
  if (tris_.empty()) return;
  nodes_.reserve(2 * tris_.size());
  build_node(0, static_cast<std::uint32_t>(tris_.size()));
}

std::uint32_t RayCaster::build_node(std::uint32_t first, std::uint32_t count) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d centers;
  for (std::uint32_t k = first; k < first + count; ++k) {
    const auto& t = tris_[k];
    box.extend(t.a).extend(t.b).extend(t.c);
    centers.extend(Vec3((t.a + t.b + t.c) / 3.0));
  }
  nodes_[id].box = box;
  if (count <= 4) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  centers.sizes().maxCoeff(&axis);
  const auto mid = first + count / 2;
  std::nth_element(tris_.begin() + first, tris_.begin() + mid, tris_.begin() + first + count,
                   [axis](const MeshTriangle& x, const MeshTriangle& y) {
                     return (x.a + x.b + x.c)[axis] < (y.a + y.b + y.c)[axis];
                   });
  const std::uint32_t left = build_node(first, mid - first);
  const std::uint32_t right = build_node(mid, first + count - mid);
  nodes_[id].first = left;
  nodes_[id].right = right;
  nodes_[id].count = 0;
  return id;
}

std::optional<RayHit> RayCaster::intersect(const Vec3& origin, const Vec3& dir, double t_min, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv(1.0 / dir.x(), 1.0 / dir.y(), 1.0 / dir.z());
  auto slab = [&](const Eigen::AlignedBox3d& b, double limit) {
    double lo = t_min, hi = limit;
    for (int k = 0; k < 3; ++k) {
      double t0 = (b.min()[k] - origin[k]) * inv[k];
      double t1 = (b.max()[k] - origin[k]) * inv[k];
      if (t0 > t1) std::swap(t0, t1);
      // NaN from 0 * inf means the ray lies in the slab plane; keep the range.
      if (t0 > lo) lo = t0;
      if (t1 < hi) hi = t1;
      if (lo > hi) return false;
    }
    return true;
  };

  RayHit best;
  best.t = t_max;
  bool found = false;
  std::uint32_t stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!slab(node.box, best.t)) continue;
    if (node.count > 0) {
      for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
        const auto& t = tris_[k];
        const auto hit = intersect_triangle(origin, dir, t.a, t.b, t.c);
        if (hit && *hit > t_min && (*hit < best.t || (*hit == best.t && found && t.polygon < best.polygon))) {
          best.t = *hit;
          best.polygon = t.polygon;
          found = true;
        }
      }
    } else {
      stack[top++] = node.first;
      stack[top++] = node.right;
    }
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace cityalign
