#include "cityalign/annotation.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <httplib.h>

#include "cityalign/errors.hpp"
#include "cityalign/render.hpp"

namespace cityalign {

SnapResult snap_vertex(const CityMesh& mesh, const RayCaster& caster, const CameraPose& pose, const UnitDir3& click_ray,
                       double max_snap_deg) {
  if (!(max_snap_deg > 0.0)) throw DomainError("max_snap_deg must be positive");
  pose.validate();
  const Vec3 ray = pose_rotation(pose) * click_ray.vec();
  const double max_rad = deg2rad(max_snap_deg);

  std::vector<std::pair<double, std::uint32_t>> candidates;
  for (std::uint32_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3 d = mesh.vertices[v] - pose.location;
    if (!(d.norm() > 0.0)) continue;
    const double a = angle_between(ray, d);
    if (a < max_rad) candidates.emplace_back(a, v);
  }
  std::sort(candidates.begin(), candidates.end());
  for (const auto& [angle, v] : candidates) {
    const Vec3 d = mesh.vertices[v] - pose.location;
    const double dist = d.norm();
    const double t_max = dist - kSnapDepthTolerance;
    if (t_max > 0.0 && caster.intersect(pose.location, d / dist, 1e-9, t_max)) continue;
    return {true, v, mesh.vertices[v], rad2deg(angle)};
  }
  return {};
}

Json session_to_json(const AnnotationSession& s) {
  Json pairs = Json::array();
  for (const auto& p : s.pairs) {
    Json j{{"u", p.u}, {"v", p.v}, {"world", vec_to_json(p.world)}};
    if (p.vertex) j["vertex"] = *p.vertex;
    pairs.push_back(std::move(j));
  }
  return {{"pano_id", s.pano_id},
          {"pose",
           {{"location", vec_to_json(s.pose.location)},
            {"azimuth", s.pose.azimuth},
            {"up", vec_to_json(s.pose.up.vec())}}},
          {"pairs", pairs},
          {"revision", s.revision},
          {"residuals_deg", s.residuals_deg}};
}

AnnotationSession session_from_json(const Json& j) {
  try {
    AnnotationSession s;
    s.pano_id = j.at("pano_id").get<std::string>();
    s.pose.location = vec3_from_json(j.at("pose").at("location"));
    s.pose.azimuth = j.at("pose").at("azimuth").get<double>();
    s.pose.up = UnitDir3(vec3_from_json(j.at("pose").at("up")));
    for (const auto& p : j.at("pairs")) {
      AnnotatedPair a;
      a.u = p.at("u").get<double>();
      a.v = p.at("v").get<double>();
      a.world = vec3_from_json(p.at("world"));
      if (p.contains("vertex")) a.vertex = p["vertex"].get<std::uint32_t>();
      s.pairs.push_back(a);
    }
    s.revision = j.at("revision").get<std::uint64_t>();
    s.residuals_deg = j.value("residuals_deg", std::vector<double>{});
    return s;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("session document: ") + e.what());
  }
}

CityMesh extract_box(const CityMesh& mesh, const Vec3& lo, const Vec3& hi) {
  const Eigen::AlignedBox3d box(lo, hi);
  CityMesh out;
  std::vector<std::int64_t> remap(mesh.vertices.size(), -1);
  for (std::size_t p = 0; p < mesh.polygons.size(); ++p) {
    const auto& poly = mesh.polygons[p];
    const bool inside = std::any_of(poly.begin(), poly.end(), [&](auto v) { return box.contains(mesh.vertices[v]); });
    if (!inside) continue;
    Polygon ring;
    for (auto v : poly) {
      if (remap[v] < 0) {
        remap[v] = static_cast<std::int64_t>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
      }
      ring.push_back(static_cast<std::uint32_t>(remap[v]));
    }
    out.polygons.push_back(std::move(ring));
    out.tags.push_back(mesh.tags[p]);
    if (!mesh.groups.empty()) out.groups.push_back(mesh.groups[p]);
  }
  return out;
}

Image reproject_overlay(const Image& pano, const PreparedMesh& prepared, const std::vector<std::uint32_t>& segments,
                        const CameraPose& pose, const PerspectiveIntrinsics& view) {
  RenderConfig cfg;
  cfg.intrinsics = view;
  cfg.pose = pose;
  Image img = resample_pano_to_perspective(pano, cfg);
  const auto layers = render_cad_view(prepared, segments, cfg);
  const auto edges = segment_edges(layers);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (edges[layers.index(x, y)]) std::copy(kOverlayColor.begin(), kOverlayColor.end(), img.pixel(x, y));
    }
  }
  return img;
}

AnnotationService::AnnotationService(CityMesh mesh, std::filesystem::path data_dir, double max_snap_deg)
    : mesh_(std::move(mesh)), data_dir_(std::move(data_dir)), max_snap_deg_(max_snap_deg) {
  if (!(max_snap_deg_ > 0.0)) throw DomainError("max_snap_deg must be positive");
  mesh_.validate();
  const auto vp_file = data_dir_ / "viewpoints.json";
  if (std::filesystem::exists(vp_file)) records_ = records_from_json(read_json(vp_file));
  for (std::size_t i = 0; i < records_.size(); ++i) record_index_[records_[i].pano_id] = i;
  std::filesystem::create_directories(data_dir_ / "sessions");
  segmentation_ = segment_surfaces(mesh_, build_adjacency(mesh_));
  caster_ = std::make_unique<RayCaster>(mesh_);
  prepared_ = std::make_unique<PreparedMesh>(mesh_);
}

AnnotationService::~AnnotationService() = default;

Json AnnotationService::viewpoints() const { return records_to_json(records_); }

const ViewpointRecord& AnnotationService::record(const std::string& pano_id) const {
  const auto it = record_index_.find(pano_id);
  if (it == record_index_.end()) throw NotFoundError("unknown viewpoint " + pano_id);
  return records_[it->second];
}

std::shared_ptr<const Image> AnnotationService::pano(const std::string& pano_id) {
  record(pano_id);
  {
    std::lock_guard lock(pano_mutex_);
    const auto it = panos_.find(pano_id);
    if (it != panos_.end()) return it->second;
  }
  const auto path = data_dir_ / "panos" / (pano_id + ".png");
  if (!std::filesystem::exists(path)) throw NotFoundError("no panorama for " + pano_id);
  auto img = std::make_shared<const Image>(read_png(path));
  std::lock_guard lock(pano_mutex_);
  return panos_.emplace(pano_id, std::move(img)).first->second;
}

Image AnnotationService::crop(const std::string& pano_id, const PerspectiveIntrinsics& view) {
  RenderConfig cfg;
  cfg.intrinsics = view;
  cfg.pose = record(pano_id).pose;
  cfg.validate();
  return resample_pano_to_perspective(*pano(pano_id), cfg);
}

std::shared_ptr<AnnotationService::Slot> AnnotationService::slot(const std::string& id) {
  record(id);
  std::lock_guard lock(slots_mutex_);
  auto& s = slots_[id];
  if (!s) s = std::make_shared<Slot>();
  return s;
}

void AnnotationService::ensure_loaded(Slot& s, const std::string& id) {
  if (s.loaded) return;
  const auto path = data_dir_ / "sessions" / (id + ".json");
  if (std::filesystem::exists(path)) {
    s.doc = read_json(path);
    s.session = session_from_json(s.doc);
  } else {
    s.session = AnnotationSession{};
    s.session.pano_id = id;
    s.session.pose = record(id).pose;
    s.doc = session_to_json(s.session);
  }
  s.loaded = true;
}

void AnnotationService::persist(Slot& s, const std::string& id) {
  Json doc = session_to_json(s.session);
  write_json_atomic(data_dir_ / "sessions" / (id + ".json"), doc);
  s.doc = std::move(doc);
}

void AnnotationService::check_revision(const Slot& s, std::optional<std::uint64_t> expected) {
  if (expected && *expected != s.session.revision) {
    throw ConflictError("stale revision " + std::to_string(*expected) + ", current is " +
                        std::to_string(s.session.revision));
  }
}

Json AnnotationService::session(const std::string& id) {
  auto s = slot(id);
  std::lock_guard lock(s->mutex);
  ensure_loaded(*s, id);
  return s->doc;
}

SnapResult AnnotationService::snap(const std::string& id, const UnitDir3& click_ray, std::optional<CameraPose> pose,
                                   std::optional<double> max_snap_deg) {
  if (!pose) {
    auto s = slot(id);
    std::lock_guard lock(s->mutex);
    ensure_loaded(*s, id);
    pose = s->session.pose;
  }
  return snap_vertex(mesh_, *caster_, *pose, click_ray, max_snap_deg.value_or(max_snap_deg_));
}

Json AnnotationService::add_pair(const std::string& id, AnnotatedPair pair, std::optional<std::uint64_t> expected) {
  const auto img = pano(id);
  equirect_pixel_to_ray(EquirectGrid{img->width, img->height}, pair.u, pair.v);  // range check
  if (pair.vertex) {
    if (*pair.vertex >= mesh_.vertices.size()) throw DomainError("vertex index out of range");
    pair.world = mesh_.vertices[*pair.vertex];
  }
  if (!pair.world.allFinite()) throw DomainError("world point must be finite");
  auto s = slot(id);
  std::lock_guard lock(s->mutex);
  ensure_loaded(*s, id);
  check_revision(*s, expected);
  s->session.pairs.push_back(pair);
  ++s->session.revision;
  persist(*s, id);
  return s->doc;
}

Json AnnotationService::delete_pair(const std::string& id, std::size_t k, std::optional<std::uint64_t> expected) {
  auto s = slot(id);
  std::lock_guard lock(s->mutex);
  ensure_loaded(*s, id);
  check_revision(*s, expected);
  if (k >= s->session.pairs.size()) throw NotFoundError("no pair " + std::to_string(k));
  s->session.pairs.erase(s->session.pairs.begin() + static_cast<std::ptrdiff_t>(k));
  ++s->session.revision;
  persist(*s, id);
  return s->doc;
}

Json AnnotationService::optimize(const std::string& id, std::optional<std::uint64_t> expected) {
  const auto img = pano(id);
  const EquirectGrid grid{img->width, img->height};
  auto s = slot(id);
  std::lock_guard lock(s->mutex);
  ensure_loaded(*s, id);
  check_revision(*s, expected);
  const auto& pairs = s->session.pairs;
  if (pairs.size() < kMinCorrespondences) {
    throw InsufficientDataError("optimization needs at least " + std::to_string(kMinCorrespondences) +
                                " pairs, session has " + std::to_string(pairs.size()));
  }
  std::vector<Correspondence> corr;
  for (const auto& p : pairs) corr.push_back({equirect_pixel_to_ray(grid, p.u, p.v), p.world});

  std::vector<double> before = residuals(s->session.pose, corr);
  for (auto& r : before) r = rad2deg(r);
  const auto sol = solve_pose(s->session.pose, corr);
  s->session.pose = sol.pose;
  s->session.residuals_deg = sol.residuals_deg;
  ++s->session.revision;
  persist(*s, id);

  Json out = solution_to_json(sol);
  out["initial_median_deg"] = percentile_nearest_rank(before, 50.0);
  out["revision"] = s->session.revision;
  return out;
}

Image AnnotationService::overlay(const std::string& id, const PerspectiveIntrinsics& view) {
  CameraPose pose;
  {
    auto s = slot(id);
    std::lock_guard lock(s->mutex);
    ensure_loaded(*s, id);
    pose = s->session.pose;
  }
  return reproject_overlay(*pano(id), *prepared_, segmentation_.polygon_segment, pose, view);
}

std::string AnnotationService::mesh_region(const Vec3& lo, const Vec3& hi) const {
  return format_obj(extract_box(mesh_, lo, hi));
}

namespace {

int status_for(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return 404;
  if (dynamic_cast<const ConflictError*>(&e)) return 409;
  if (dynamic_cast<const InsufficientDataError*>(&e)) return 422;
  // std::stod and friends report malformed numbers as logic errors
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const Json::exception*>(&e) ||
      dynamic_cast<const std::logic_error*>(&e)) {
    return 400;
  }
  return 500;
}

void reply_error(httplib::Response& res, const std::exception& e) {
  res.status = status_for(e);
  Json body{{"error", e.what()}};
  if (res.status == 422) body["required_pairs"] = kMinCorrespondences;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const std::exception& e) {
      reply_error(res, e);
    }
  };
}

void reply_json(httplib::Response& res, const Json& doc) { res.set_content(doc.dump(), "application/json"); }

void reply_png(httplib::Response& res, const Image& img) {
  const auto bytes = encode_png(img);
  res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
}

double param(const httplib::Request& req, const char* name, double fallback) {
  return req.has_param(name) ? std::stod(req.get_param_value(name)) : fallback;
}

PerspectiveIntrinsics view_from_query(const httplib::Request& req) {
  PerspectiveIntrinsics v;
  v.yaw = deg2rad(param(req, "yaw", 0.0));
  v.pitch = deg2rad(param(req, "pitch", 0.0));
  v.fov_deg = param(req, "fov", 90.0);
  v.width = static_cast<int>(param(req, "w", 512));
  v.height = static_cast<int>(param(req, "h", 512));
  v.validate();
  return v;
}

Json body_json(const httplib::Request& req) { return req.body.empty() ? Json::object() : Json::parse(req.body); }

std::optional<std::uint64_t> revision_of(const httplib::Request& req, const Json& body) {
  if (body.contains("revision")) return body["revision"].get<std::uint64_t>();
  if (req.has_param("revision")) return std::stoull(req.get_param_value("revision"));
  return std::nullopt;
}

Vec3 vec_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw DomainError(std::string("missing query parameter ") + name);
  std::stringstream ss(req.get_param_value(name));
  std::string tok;
  std::vector<double> v;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 3) throw DomainError(std::string(name) + " must be x,y,z");
  return Vec3(v[0], v[1], v[2]);
}

}  // namespace

void AnnotationService::register_routes(httplib::Server& server) {
  server.Get("/viewpoints", guarded([this](const httplib::Request&, httplib::Response& res) {
               reply_json(res, viewpoints());
             }));
  server.Get(R"(/pano/([^/]+)/crop)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               reply_png(res, crop(req.matches[1], view_from_query(req)));
             }));
  server.Get(R"(/session/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               reply_json(res, session(req.matches[1]));
             }));
  server.Post(R"(/session/([^/]+)/snap)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = body_json(req);
                std::optional<CameraPose> pose;
                if (body.contains("pose")) pose = pose_from_json(body["pose"]);
                std::optional<double> max_deg;
                if (body.contains("max_snap_deg")) max_deg = body["max_snap_deg"].get<double>();
                const auto r = snap(req.matches[1], UnitDir3(vec3_from_json(body.at("ray"))), pose, max_deg);
                Json out{{"snapped", r.snapped}};
                if (r.snapped) {
                  out["vertex"] = r.vertex;
                  out["world"] = vec_to_json(r.world);
                  out["angle_deg"] = r.angle_deg;
                }
                reply_json(res, out);
              }));
  server.Post(R"(/session/([^/]+)/pairs)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = body_json(req);
                AnnotatedPair p;
                p.u = body.at("u").get<double>();
                p.v = body.at("v").get<double>();
                if (body.contains("vertex")) {
                  p.vertex = body["vertex"].get<std::uint32_t>();
                } else {
                  p.world = vec3_from_json(body.at("world"));
                }
                reply_json(res, add_pair(req.matches[1], p, revision_of(req, body)));
              }));
  server.Delete(R"(/session/([^/]+)/pairs/(\d+))",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const Json body = body_json(req);
                  reply_json(res, delete_pair(req.matches[1], std::stoul(req.matches[2]), revision_of(req, body)));
                }));
  server.Post(R"(/session/([^/]+)/optimize)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const Json body = body_json(req);
                reply_json(res, optimize(req.matches[1], revision_of(req, body)));
              }));
  server.Get(R"(/session/([^/]+)/overlay)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               reply_png(res, overlay(req.matches[1], view_from_query(req)));
             }));
  server.Get("/mesh", guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.set_content(mesh_region(vec_param(req, "min"), vec_param(req, "max")), "text/plain");
             }));
}

}  // namespace cityalign
