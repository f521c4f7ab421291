#include "cityalign/city_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>

namespace cityalign {

namespace {

constexpr std::array<std::pair<SemanticTag, std::string_view>, 6> kTagNames{{
    {SemanticTag::Building, "BUILDING"},
    {SemanticTag::Terrain, "TERRAIN"},
    {SemanticTag::Bridge, "BRIDGE"},
    {SemanticTag::Tree, "TREE"},
    {SemanticTag::Water, "WATER"},
    {SemanticTag::Other, "OTHER"},
}};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw FormatError("invalid number '" + std::string(s) + "'", line);
  }
  return value;
}

long parse_index(std::string_view s, std::size_t line) {
  // Only the position index of "v/vt/vn" is used.
  const auto slash = s.find('/');
  if (slash != std::string_view::npos) s = s.substr(0, slash);
  long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || value == 0) {
    throw FormatError("invalid face index '" + std::string(s) + "'", line);
  }
  return value;
}

Vec3 newell(const CityMesh& mesh, const Polygon& ring) {
  Vec3 n = Vec3::Zero();
  for (std::size_t k = 0; k < ring.size(); ++k) {
    const Vec3& a = mesh.vertices[ring[k]];
    const Vec3& b = mesh.vertices[ring[(k + 1) % ring.size()]];
    n.x() += (a.y() - b.y()) * (a.z() + b.z());
    n.y() += (a.z() - b.z()) * (a.x() + b.x());
    n.z() += (a.x() - b.x()) * (a.y() + b.y());
  }
  return n;
}

double ring_planarity(const std::vector<Vec3>& vertices, const Polygon& ring) {
  if (ring.size() <= 3) return 0.0;
  Vec3 c = Vec3::Zero();
  for (auto i : ring) c += vertices[i];
  c /= static_cast<double>(ring.size());
  Mat3 cov = Mat3::Zero();
  for (auto i : ring) {
    const Vec3 d = vertices[i] - c;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 n = es.eigenvectors().col(0);
  double worst = 0.0;
  for (auto i : ring) worst = std::max(worst, std::abs(n.dot(vertices[i] - c)));
  return worst;
}

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Crossing-number test on the xy projection; half-open so that points on a
// shared edge belong to exactly one of the two neighbors.
bool inside_xy(const CityMesh& mesh, const Polygon& ring, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const Vec3& a = mesh.vertices[ring[i]];
    const Vec3& b = mesh.vertices[ring[j]];
    if ((a.y() > y) != (b.y() > y)) {
      const double xc = a.x() + (y - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (x < xc) inside = !inside;
    }
  }
  return inside;
}

}  // namespace

std::string_view tag_name(SemanticTag tag) {
  for (const auto& [t, name] : kTagNames) {
    if (t == tag) return name;
  }
  return "OTHER";
}

bool parse_tag(std::string_view name, SemanticTag& out) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (const auto& [t, n] : kTagNames) {
    if (upper == n) {
      out = t;
      return true;
    }
  }
  return false;
}

void CityMesh::validate() const {
  if (tags.size() != polygons.size()) throw DomainError("tag count does not match polygon count");
  for (std::size_t p = 0; p < polygons.size(); ++p) {
    std::set<std::uint32_t> distinct;
    for (auto i : polygons[p]) {
      if (i >= vertices.size()) throw DomainError("polygon " + std::to_string(p) + " has an out-of-range index");
      distinct.insert(i);
    }
    if (distinct.size() < 3) throw DomainError("polygon " + std::to_string(p) + " has fewer than 3 distinct vertices");
  }
}

CityMesh parse_obj(std::string_view text) {
  CityMesh mesh;
  std::string group;
  SemanticTag tag = SemanticTag::Other;
  std::set<std::string> unknown_groups;
  bool tag_known = false;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = split_ws(line);
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }

    if (tok[0] == "v") {
      if (tok.size() < 4) throw FormatError("vertex needs three coordinates", line_no);
      mesh.vertices.emplace_back(parse_double(tok[1], line_no), parse_double(tok[2], line_no),
                                 parse_double(tok[3], line_no));
    } else if (tok[0] == "g" || tok[0] == "o") {
      group = tok.size() > 1 ? std::string(tok[1]) : std::string();
      const auto prefix = std::string_view(group).substr(0, group.find('_'));
      tag_known = parse_tag(prefix, tag);
      if (!tag_known) tag = SemanticTag::Other;
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw FormatError("face needs at least three vertices", line_no);
      Polygon ring;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        long idx = parse_index(tok[k], line_no);
        const long n = static_cast<long>(mesh.vertices.size());
        idx = idx > 0 ? idx - 1 : n + idx;
        if (idx < 0 || idx >= n) throw FormatError("face index out of range", line_no);
        const auto u = static_cast<std::uint32_t>(idx);
        if (ring.empty() || ring.back() != u) ring.push_back(u);
      }
      while (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
      if (std::set<std::uint32_t>(ring.begin(), ring.end()).size() < 3) {
        throw FormatError("face has fewer than three distinct vertices", line_no);
      }
      if (!tag_known) unknown_groups.insert(group);

      auto emit = [&](Polygon r) {
        mesh.polygons.push_back(std::move(r));
        mesh.tags.push_back(tag);
        mesh.groups.push_back(group);
      };
      if (ring_planarity(mesh.vertices, ring) > kPlanarityTolerance) {
        for (std::size_t k = 1; k + 1 < ring.size(); ++k) emit({ring[0], ring[k], ring[k + 1]});
      } else {
        emit(std::move(ring));
      }
    }
    // vn, vt, usemtl, mtllib, s and the rest carry nothing we use.
    if (end == text.size()) break;
  }
  mesh.unknown_tag_warnings = unknown_groups.size();
  return mesh;
}

CityMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open mesh file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_obj(ss.str());
}

std::string format_obj(const CityMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  std::string current;
  bool first = true;
  for (std::size_t p = 0; p < mesh.polygons.size(); ++p) {
    std::string group = p < mesh.groups.size() && !mesh.groups[p].empty()
                            ? mesh.groups[p]
                            : std::string(tag_name(mesh.tags[p])) + "_" + std::to_string(p);
    if (first || group != current) {
      out << "g " << group << '\n';
      current = group;
      first = false;
    }
    out << 'f';
    for (auto i : mesh.polygons[p]) out << ' ' << (i + 1);
    out << '\n';
  }
  return out.str();
}

void save_mesh(const std::filesystem::path& path, const CityMesh& mesh) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write mesh file " + path.string());
  out << format_obj(mesh);
}

UnitDir3 polygon_normal(const CityMesh& mesh, std::size_t index) {
  if (index >= mesh.polygons.size()) throw DomainError("polygon index out of range");
  const Vec3 n = newell(mesh, mesh.polygons[index]);
  const double len = n.norm();
  if (!(len > 1e-300)) throw DegenerateInputError("polygon has zero area", static_cast<std::ptrdiff_t>(index));
  return UnitDir3(n / len);
}

double polygon_area(const CityMesh& mesh, std::size_t index) {
  return 0.5 * newell(mesh, mesh.polygons.at(index)).norm();
}

Vec3 polygon_centroid(const CityMesh& mesh, std::size_t index) {
  const auto& ring = mesh.polygons.at(index);
  Vec3 c = Vec3::Zero();
  for (auto i : ring) c += mesh.vertices[i];
  return c / static_cast<double>(ring.size());
}

double planarity_error(const CityMesh& mesh, std::size_t index) {
  return ring_planarity(mesh.vertices, mesh.polygons.at(index));
}

PolygonAdjacency build_adjacency(const CityMesh& mesh, double merge_distance) {
  if (!(merge_distance > 0.0)) throw DomainError("merge distance must be positive");
  PolygonAdjacency adj;
  adj.merge_distance = merge_distance;
  adj.neighbors.resize(mesh.polygons.size());

  // vertex -> polygons using it
  std::vector<std::vector<std::uint32_t>> incident(mesh.vertices.size());
  for (std::uint32_t p = 0; p < mesh.polygons.size(); ++p) {
    for (auto v : mesh.polygons[p]) {
      auto& list = incident[v];
      if (list.empty() || list.back() != p) list.push_back(p);
    }
  }

  auto key_of = [merge_distance](const Vec3& x) {
    return CellKey{static_cast<std::int64_t>(std::floor(x.x() / merge_distance)),
                   static_cast<std::int64_t>(std::floor(x.y() / merge_distance)),
                   static_cast<std::int64_t>(std::floor(x.z() / merge_distance))};
  };
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellKeyHash> cells;
  for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!incident[v].empty()) cells[key_of(mesh.vertices[v])].push_back(v);
  }

  auto link = [&](std::uint32_t a, std::uint32_t b) {
    for (auto p : incident[a]) {
      for (auto q : incident[b]) {
        if (p != q) {
          adj.neighbors[p].push_back(q);
          adj.neighbors[q].push_back(p);
        }
      }
    }
  };

  const double d2 = merge_distance * merge_distance;
  for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v) {
    if (incident[v].empty()) continue;
    link(v, v);
    const Vec3& x = mesh.vertices[v];
    const CellKey k = key_of(x);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = cells.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == cells.end()) continue;
          for (auto w : it->second) {
            if (w > v && (mesh.vertices[w] - x).squaredNorm() < d2) link(v, w);
          }
        }
      }
    }
  }
  for (auto& list : adj.neighbors) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

double terrain_elevation_at(const CityMesh& mesh, double x, double y) {
  bool found = false;
  double best = 0.0;
  for (std::size_t p = 0; p < mesh.polygons.size(); ++p) {
    if (mesh.tags[p] != SemanticTag::Terrain) continue;
    const auto& ring = mesh.polygons[p];
    const Vec3 n = newell(mesh, ring);
    if (std::abs(n.z()) < 1e-12 * n.norm() || n.norm() == 0.0) continue;  // vertical face
    if (!inside_xy(mesh, ring, x, y)) continue;
    const Vec3& p0 = mesh.vertices[ring[0]];
    const double z = p0.z() - (n.x() * (x - p0.x()) + n.y() * (y - p0.y())) / n.z();
    if (!found || z > best) best = z;
    found = true;
  }
  if (!found) {
    throw NotCoveredError("no terrain under (" + std::to_string(x) + ", " + std::to_string(y) + ")");
  }
  return best;
}

void append_mesh(CityMesh& into, const CityMesh& other) {
  const auto base = static_cast<std::uint32_t>(into.vertices.size());
  into.vertices.insert(into.vertices.end(), other.vertices.begin(), other.vertices.end());
  into.groups.resize(into.polygons.size());
  for (std::size_t p = 0; p < other.polygons.size(); ++p) {
    Polygon ring = other.polygons[p];
    for (auto& i : ring) i += base;
    into.polygons.push_back(std::move(ring));
    into.tags.push_back(other.tags[p]);
    into.groups.push_back(p < other.groups.size() ? other.groups[p] : std::string());
  }
}

}  // namespace cityalign
