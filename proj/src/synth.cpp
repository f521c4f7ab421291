#include "cityalign/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cityalign/errors.hpp"
#include "cityalign/random.hpp"

namespace cityalign {

void SceneSpec::validate() const {
  if (n_buildings < 0) throw DomainError("n_buildings must be non-negative");
  if (!(area > 0.0) || !std::isfinite(area)) throw DomainError("area must be positive");
  if (!(min_height > 0.0) || !(max_height >= min_height)) throw DomainError("invalid height range");
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg <= 30.0)) {
    throw DomainError("footprint rotation must lie in [0, 30] degrees");
  }
}

SyntheticCity generate_city(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  SyntheticCity city;
  city.spec = spec;
  city.grid = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_buildings)) - 1e-9)));
  const int g = city.grid;
  const double side = std::sqrt(spec.area);
  city.cell = side / g;
  city.origin = Vec2(-0.5 * side, -0.5 * side);

  std::vector<int> cells(static_cast<std::size_t>(g) * g);
  std::iota(cells.begin(), cells.end(), 0);
  shuffle(cells, rng);
  std::vector<int> box_of_cell(cells.size(), -1);
  for (int b = 0; b < spec.n_buildings; ++b) box_of_cell[cells[b]] = b;

  // Footprints: half-extents up to 0.225 cell keep every rotated corner in
  // its own quadrant of the cell and leave streets of at least 0.18 cell.
  city.boxes.resize(spec.n_buildings);
  for (int c = 0; c < g * g; ++c) {
    const int b = box_of_cell[c];
    if (b < 0) continue;
    const int i = c % g, j = c / g;
    const Vec2 center = city.origin + city.cell * Vec2(i + 0.5, j + 0.5);
    const double w = uniform(rng, 0.3, 0.45) * city.cell;
    const double d = uniform(rng, 0.3, 0.45) * city.cell;
    const double rot = deg2rad(uniform(rng, -spec.max_rotation_deg, spec.max_rotation_deg));
    auto& box = city.boxes[b];
    box.rotation = rot;
    box.height = uniform(rng, spec.min_height, spec.max_height);
    const Eigen::Rotation2Dd r(rot);
    const std::array<Vec2, 4> local{Vec2(-w / 2, -d / 2), Vec2(w / 2, -d / 2), Vec2(w / 2, d / 2), Vec2(-w / 2, d / 2)};
    for (int k = 0; k < 4; ++k) box.corners[k] = center + r * local[k];
  }

  CityMesh& mesh = city.mesh;
  auto corner_vertex = [g](int i, int j) { return static_cast<std::uint32_t>(j * (g + 1) + i); };
  for (int j = 0; j <= g; ++j) {
    for (int i = 0; i <= g; ++i) {
      const Vec2 p = city.origin + city.cell * Vec2(i, j);
      mesh.vertices.emplace_back(p.x(), p.y(), 0.0);
    }
  }
  std::vector<std::array<std::uint32_t, 4>> base(spec.n_buildings), top(spec.n_buildings);
  for (int b = 0; b < spec.n_buildings; ++b) {
    for (int k = 0; k < 4; ++k) {
      base[b][k] = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.emplace_back(city.boxes[b].corners[k].x(), city.boxes[b].corners[k].y(), 0.0);
    }
    for (int k = 0; k < 4; ++k) {
      top[b][k] = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.emplace_back(city.boxes[b].corners[k].x(), city.boxes[b].corners[k].y(), city.boxes[b].height);
    }
  }

  auto add = [&](Polygon poly, SemanticTag tag, const std::string& group, std::uint32_t label) {
    mesh.polygons.push_back(std::move(poly));
    mesh.tags.push_back(tag);
    mesh.groups.push_back(group);
    city.truth.push_back(label);
  };

  for (int j = 0; j < g; ++j) {
    for (int i = 0; i < g; ++i) {
      const std::array<std::uint32_t, 4> c{corner_vertex(i, j), corner_vertex(i + 1, j), corner_vertex(i + 1, j + 1),
                                           corner_vertex(i, j + 1)};
      const int b = box_of_cell[j * g + i];
      if (b < 0) {
        add({c[0], c[1], c[2], c[3]}, SemanticTag::Terrain, "TERRAIN_ground", 0);
        continue;
      }
      for (int k = 0; k < 4; ++k) {
        const int n = (k + 1) % 4;
        add({c[k], c[n], base[b][n], base[b][k]}, SemanticTag::Terrain, "TERRAIN_ground", 0);
      }
    }
  }
  for (int b = 0; b < spec.n_buildings; ++b) {
    const std::string group = "BUILDING_" + std::to_string(b);
    const auto& f = base[b];
    const auto& t = top[b];
    add({f[0], f[3], f[2], f[1]}, SemanticTag::Building, group, 0);
    for (int k = 0; k < 4; ++k) {
      const int n = (k + 1) % 4;
      add({f[k], f[n], t[n], t[k]}, SemanticTag::Building, group, static_cast<std::uint32_t>(1 + 5 * b + k));
    }
    add({t[0], t[1], t[2], t[3]}, SemanticTag::Building, group, static_cast<std::uint32_t>(1 + 5 * b + 4));
  }
  mesh.validate();
  return city;
}

CameraPose random_street_pose(const SyntheticCity& city, std::mt19937_64& rng, double max_tilt_deg) {
  const int g = city.grid;
  const double side = city.cell * g;
  // Outer lines are pulled 0.05 cell inside so the camera stays on terrain.
  const int line = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(g + 1)));
  double across = line * city.cell;
  if (line == 0) across = 0.05 * city.cell;
  if (line == g) across = side - 0.05 * city.cell;
  const double along = uniform(rng, 0.05, 0.95) * side;
  const bool vertical = uniform01(rng) < 0.5;
  const Vec2 p = city.origin + (vertical ? Vec2(across, along) : Vec2(along, across));

  CameraPose pose;
  pose.location = Vec3(p.x(), p.y(), kCameraHeight);
  pose.azimuth = uniform(rng, -kPi, kPi);
  const double tilt = deg2rad(uniform(rng, 0.0, max_tilt_deg));
  const double dir = uniform(rng, -kPi, kPi);
  pose.up = UnitDir3(std::sin(tilt) * std::cos(dir), std::sin(tilt) * std::sin(dir), std::cos(tilt));
  return pose;
}

std::vector<std::uint32_t> visible_vertices(const CityMesh& mesh, const RayCaster& caster, const CameraPose& pose,
                                            double tolerance) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3 d = mesh.vertices[v] - pose.location;
    const double dist = d.norm();
    if (!(dist > tolerance)) continue;
    if (!caster.intersect(pose.location, d / dist, 1e-9, dist - tolerance)) out.push_back(v);
  }
  return out;
}

std::vector<Correspondence> synthetic_correspondences(const CityMesh& mesh, const RayCaster& caster,
                                                      const CameraPose& pose, std::size_t count,
                                                      std::mt19937_64& rng, double noise_deg) {
  auto visible = visible_vertices(mesh, caster, pose);
  if (visible.size() < count) {
    throw InsufficientDataError("only " + std::to_string(visible.size()) + " visible vertices, need " +
                                std::to_string(count));
  }
  shuffle(visible, rng);
  visible.resize(count);

  const double sigma = deg2rad(noise_deg);
  std::vector<Correspondence> corr;
  for (auto v : visible) {
    Vec3 ray = world_to_pano(pose, mesh.vertices[v]).vec();
    if (sigma > 0.0) {
      const Vec3 e1 = ray.unitOrthogonal();
      const Vec3 e2 = ray.cross(e1);
      const double a = sigma * standard_normal(rng);
      const double b = sigma * standard_normal(rng);
      const double theta = std::hypot(a, b);
      if (theta > 0.0) ray = std::cos(theta) * ray + std::sin(theta) * (a * e1 + b * e2) / theta;
    }
    corr.push_back({UnitDir3(ray), mesh.vertices[v]});
  }
  return corr;
}

std::array<std::uint8_t, 3> segment_color(std::uint32_t segment_id) {
  // splitmix64 finalizer
  std::uint64_t z = segment_id + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  z ^= z >> 31;
  std::array<std::uint8_t, 3> c{static_cast<std::uint8_t>(z), static_cast<std::uint8_t>(z >> 8),
                                static_cast<std::uint8_t>(z >> 16)};
  if (c == kSkyColor) c[0] ^= 1;
  return c;
}

Image synth_panorama(const RayCaster& caster, const std::vector<std::uint32_t>& segments, const CameraPose& pose,
                     const EquirectGrid& size) {
  size.validate();
  pose.validate();
  const Mat3 r = pose_rotation(pose);
  Image img(size.width, size.height, 3);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      const Vec3 d = (r * equirect_pixel_to_ray(size, x + 0.5, y + 0.5).vec()).normalized();
      auto color = kSkyColor;
      if (const auto hit = caster.intersect(pose.location, d)) {
        const std::uint32_t id = segments.empty() ? hit->polygon + 1 : segments.at(hit->polygon);
        color = segment_color(id);
      }
      std::copy(color.begin(), color.end(), img.pixel(x, y));
    }
  }
  return img;
}

Image synth_panorama(const CityMesh& mesh, const std::vector<std::uint32_t>& segments, const CameraPose& pose,
                     const EquirectGrid& size) {
  return synth_panorama(RayCaster(mesh), segments, pose, size);
}

}  // namespace cityalign
