#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cityalign/city_model.hpp"

namespace cityalign {

using TriangleIndices = std::array<std::uint32_t, 3>;

// Ear-clipping triangulation of one ring in its own plane. Falls back to a
// fan for rings the clipper cannot resolve (self-touching input).
std::vector<TriangleIndices> triangulate_polygon(const CityMesh& mesh, std::size_t index);

struct MeshTriangle {
  Vec3 a, b, c;
  std::uint32_t polygon = 0;
};

// Triangles of every non-degenerate polygon, in polygon order.
std::vector<MeshTriangle> triangulate_mesh(const CityMesh& mesh);

struct RayHit {
  double t = std::numeric_limits<double>::infinity();  // distance along the unit ray
  std::uint32_t polygon = 0;
};

// Bounding-volume hierarchy over the mesh triangles for nearest-hit
// queries.
class RayCaster {
 public:
  RayCaster() = default;
  explicit RayCaster(const CityMesh& mesh);
  explicit RayCaster(std::vector<MeshTriangle> triangles);

  // Nearest hit with t in (t_min, t_max). `dir` must be unit length.
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_min = 1e-9,
                                  double t_max = std::numeric_limits<double>::infinity()) const;

  const std::vector<MeshTriangle>& triangles() const { return tris_; }

 private:
  struct Node {
    Eigen::AlignedBox3d box;
    std::uint32_t first = 0;  // leaf: first triangle; inner: left child
    std::uint32_t count = 0;  // leaf triangle count; 0 for inner nodes
    std::uint32_t right = 0;
  };

  void build();
  std::uint32_t build_node(std::uint32_t first, std::uint32_t count);

  std::vector<MeshTriangle> tris_;
  std::vector<Node> nodes_;
};

// Moller-Trumbore. Returns the ray parameter or nothing when the ray misses.
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                         const Vec3& c);

}  // namespace cityalign
