#include "cityalign/json_io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "cityalign/errors.hpp"

namespace cityalign {

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_atomic(const std::filesystem::path& path, const Json& doc) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << doc.dump(2) << '\n';
    out.flush();
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot replace " + path.string() + ": " + ec.message());
}

Json vec_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json pose_to_json(const CameraPose& pose) {
  return {{"location", vec_to_json(pose.location)},
          {"azimuth_deg", rad2deg(pose.azimuth)},
          {"up", vec_to_json(pose.up.vec())}};
}

CameraPose pose_from_json(const Json& j) {
  CameraPose p;
  p.location = vec3_from_json(j.at("location"));
  p.azimuth = deg2rad(j.at("azimuth_deg").get<double>());
  p.up = j.contains("up") ? UnitDir3(vec3_from_json(j["up"])) : UnitDir3();
  p.validate();
  return p;
}

Json field_to_json(const StoredField& f) {
  Json values = Json::array();
  for (const auto& v : f.field.values) values.push_back({v.x(), v.y()});
  Json doc{{"origin", {f.field.grid.origin.x(), f.field.grid.origin.y()}},
           {"cell", f.field.grid.cell},
           {"nx", f.field.grid.nx},
           {"ny", f.field.grid.ny},
           {"lambda", f.lambda},
           {"values", values}};
  if (f.reference) doc["reference"] = {{"lat0", f.reference->lat0}, {"lon0", f.reference->lon0}};
  return doc;
}

StoredField field_from_json(const Json& j) {
  try {
    StoredField f;
    f.field.grid.origin = Vec2(j.at("origin")[0].get<double>(), j.at("origin")[1].get<double>());
    f.field.grid.cell = j.at("cell").get<double>();
    f.field.grid.nx = j.at("nx").get<int>();
    f.field.grid.ny = j.at("ny").get<int>();
    f.lambda = j.value("lambda", 0.0);
    for (const auto& v : j.at("values")) f.field.values.emplace_back(v[0].get<double>(), v[1].get<double>());
    if (j.contains("reference")) {
      f.reference = GeoReference{j["reference"].at("lat0").get<double>(), j["reference"].at("lon0").get<double>()};
    }
    f.field.validate();
    return f;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("deformation field: ") + e.what());
  }
}

std::vector<GeodeticPair> read_geodetic_pairs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<GeodeticPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (pairs.empty() && lineno == 1) continue;  // header
      throw FormatError("non-numeric pair row in " + path.string(), lineno);
    }
    if (vals.size() != 4) throw FormatError("expected x_cad,y_cad,lat,lon in " + path.string(), lineno);
    pairs.push_back({Vec2(vals[0], vals[1]), vals[2], vals[3]});
  }
  return pairs;
}

CorrespondenceFile correspondences_from_json(const Json& j) {
  try {
    CorrespondenceFile c;
    c.pano_id = j.value("pano_id", std::string());
    c.grid = {j.at("width").get<int>(), j.at("height").get<int>()};
    c.grid.validate();
    for (const auto& p : j.at("pairs")) {
      const PixelCoord px{p.at("u").get<double>(), p.at("v").get<double>()};
      c.pixels.push_back(px);
      c.corr.push_back({equirect_pixel_to_ray(c.grid, px.u, px.v), vec3_from_json(p.at("world"))});
    }
    if (j.contains("init")) c.init = pose_from_json(j["init"]);
    return c;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("correspondence file: ") + e.what());
  }
}

Json correspondences_to_json(const CorrespondenceFile& c) {
  Json pairs = Json::array();
  for (std::size_t k = 0; k < c.corr.size(); ++k) {
    pairs.push_back({{"u", c.pixels[k].u}, {"v", c.pixels[k].v}, {"world", vec_to_json(c.corr[k].world)}});
  }
  Json doc{{"pano_id", c.pano_id}, {"width", c.grid.width}, {"height", c.grid.height}, {"pairs", pairs}};
  if (c.init) doc["init"] = pose_to_json(*c.init);
  return doc;
}

Json solution_to_json(const PoseSolution& s) {
  Json doc = pose_to_json(s.pose);
  doc["residuals_deg"] = s.residuals_deg;
  doc["iterations"] = s.iterations;
  doc["converged"] = s.converged;
  doc["rank_warning"] = s.rank_warning;
  doc["few_pairs_warning"] = s.few_pairs_warning;
  doc["objective"] = s.objective;
  if (!s.residuals_deg.empty()) {
    doc["median_deg"] = percentile_nearest_rank(s.residuals_deg, 50.0);
    doc["p95_deg"] = percentile_nearest_rank(s.residuals_deg, 95.0);
  }
  return doc;
}

Json segmentation_to_json(const Segmentation& seg) {
  Json segs = Json::array();
  for (const auto& s : seg.segments) {
    segs.push_back({{"id", s.id},
                    {"polygon_ids", s.polygon_ids},
                    {"mean_normal", vec_to_json(s.mean_normal.vec())},
                    {"area", s.area}});
  }
  return {{"params", {{"max_dihedral_deg", seg.max_dihedral_deg}, {"merge_distance", seg.merge_distance}}},
          {"segments", segs}};
}

Segmentation segmentation_from_json(const Json& j) {
  try {
    Segmentation seg;
    seg.max_dihedral_deg = j.at("params").at("max_dihedral_deg").get<double>();
    seg.merge_distance = j.at("params").at("merge_distance").get<double>();
    std::size_t n = 0;
    for (const auto& s : j.at("segments")) {
      SurfaceSegment out;
      out.id = s.at("id").get<std::uint32_t>();
      out.polygon_ids = s.at("polygon_ids").get<std::vector<std::uint32_t>>();
      if (s.contains("mean_normal")) out.mean_normal = UnitDir3(vec3_from_json(s["mean_normal"]));
      out.area = s.value("area", 0.0);
      for (auto p : out.polygon_ids) n = std::max<std::size_t>(n, p + 1);
      seg.segments.push_back(std::move(out));
    }
    seg.polygon_segment.assign(n, 0);
    for (const auto& s : seg.segments) {
      for (auto p : s.polygon_ids) seg.polygon_segment[p] = s.id;
    }
    return seg;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("segmentation: ") + e.what());
  }
}

Json vps_to_json(const std::vector<VanishingPoint>& vps) {
  Json out = Json::array();
  for (const auto& vp : vps) {
    out.push_back({{"kind", vp.kind == VpKind::Vertical ? "vertical" : "horizontal"},
                   {"direction", vec_to_json(vp.direction.vec())},
                   {"world_direction", vec_to_json(vp.world_direction)}});
  }
  return out;
}

Json occurrence_to_json(const OccurrenceStats& stats) {
  return {{"per_segment", stats.per_segment}, {"histogram", stats.histogram}};
}

Json record_to_json(const ViewpointRecord& r) {
  return {{"pano_id", r.pano_id},
          {"pose", pose_to_json(r.pose)},
          {"capture_date", r.capture_date},
          {"indoor", r.indoor},
          {"n_annotations", r.n_annotations},
          {"quality_ok", r.quality_ok}};
}

ViewpointRecord record_from_json(const Json& j) {
  try {
    ViewpointRecord r;
    r.pano_id = j.at("pano_id").get<std::string>();
    r.pose = pose_from_json(j.at("pose"));
    r.capture_date = j.value("capture_date", std::string());
    r.indoor = j.value("indoor", false);
    r.n_annotations = j.value("n_annotations", 0u);
    r.quality_ok = j.value("quality_ok", true);
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("viewpoint record: ") + e.what());
  }
}

Json records_to_json(const std::vector<ViewpointRecord>& records) {
  Json out = Json::array();
  for (const auto& r : records) out.push_back(record_to_json(r));
  return out;
}

std::vector<ViewpointRecord> records_from_json(const Json& j) {
  const Json& arr = j.is_object() && j.contains("records") ? j["records"] : j;
  if (!arr.is_array()) throw FormatError("expected an array of viewpoint records");
  std::vector<ViewpointRecord> out;
  for (const auto& r : arr) out.push_back(record_from_json(r));
  return out;
}

Json manifest_to_json(const Manifest& m) {
  Json entries = Json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"view_id", e.view_id},
                       {"pano_id", e.pano_id},
                       {"view", e.view},
                       {"yaw_deg", e.yaw_deg},
                       {"pitch_deg", e.pitch_deg},
                       {"files", e.files},
                       {"split", split_name(e.split)},
                       {"quality_ok", e.quality_ok}});
  }
  Json missing = Json::array();
  for (const auto& mv : m.missing) missing.push_back({{"view_id", mv.view_id}, {"files", mv.files}});
  return {{"entries", entries},
          {"missing", missing},
          {"quality_passed", m.quality_passed},
          {"pass_ratio", m.pass_ratio}};
}

Json count_stats_to_json(const CountStats& s) {
  Json hist = Json::object();
  for (const auto& [count, n] : s.histogram) hist[std::to_string(count)] = n;
  Json doc{{"histogram", hist}};
  if (!s.histogram.empty()) {
    doc["min"] = s.min;
    doc["median"] = s.median;
    doc["max"] = s.max;
  }
  return doc;
}

}  // namespace cityalign
