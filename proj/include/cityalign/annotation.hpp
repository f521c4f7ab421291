#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cityalign/city_model.hpp"
#include "cityalign/dataset.hpp"
#include "cityalign/holistic.hpp"
#include "cityalign/image_io.hpp"
#include "cityalign/json_io.hpp"
#include "cityalign/pose.hpp"
#include "cityalign/raycast.hpp"

namespace httplib {
class Server;
}

namespace cityalign {

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Stale revision on an optimistic mutation.
class ConflictError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kDefaultMaxSnapDeg = 0.5;
inline constexpr double kSnapDepthTolerance = 0.1;  // meters

struct SnapResult {
  bool snapped = false;
  std::uint32_t vertex = 0;
  Vec3 world = Vec3::Zero();
  double angle_deg = 0.0;
};

// Angularly nearest visible vertex within max_snap_deg of the click ray
// (panorama frame of `pose`). A vertex is visible when nothing is hit closer
// than its distance minus 0.1 m. Ties go to the lower vertex index.
SnapResult snap_vertex(const CityMesh& mesh, const RayCaster& caster, const CameraPose& pose, const UnitDir3& click_ray,
                       double max_snap_deg = kDefaultMaxSnapDeg);

struct AnnotatedPair {
  double u = 0.0;  // panorama pixel, continuous
  double v = 0.0;
  std::optional<std::uint32_t> vertex;
  Vec3 world = Vec3::Zero();
};

struct AnnotationSession {
  std::string pano_id;
  CameraPose pose;
  std::vector<AnnotatedPair> pairs;
  std::uint64_t revision = 0;
  std::vector<double> residuals_deg;  // from the last optimization
};

Json session_to_json(const AnnotationSession& s);
AnnotationSession session_from_json(const Json& j);

// Polygons with at least one vertex inside the box, re-indexed.
CityMesh extract_box(const CityMesh& mesh, const Vec3& lo, const Vec3& hi);

// Segment boundaries of the CAD render drawn in red over the panorama crop.
Image reproject_overlay(const Image& pano, const PreparedMesh& prepared, const std::vector<std::uint32_t>& segments,
                        const CameraPose& pose, const PerspectiveIntrinsics& view);

inline constexpr std::array<std::uint8_t, 3> kOverlayColor{255, 0, 0};

// Data directory layout:
//   viewpoints.json          array of viewpoint records
//   panos/<pano_id>.png      equirectangular panoramas
//   sessions/<pano_id>.json  one document per session, replaced atomically
class AnnotationService {
 public:
  AnnotationService(CityMesh mesh, std::filesystem::path data_dir, double max_snap_deg = kDefaultMaxSnapDeg);
  ~AnnotationService();

  Json viewpoints() const;
  Image crop(const std::string& pano_id, const PerspectiveIntrinsics& view);
  Json session(const std::string& id);

  // `pose` defaults to the session's working pose.
  SnapResult snap(const std::string& id, const UnitDir3& click_ray, std::optional<CameraPose> pose = std::nullopt,
                  std::optional<double> max_snap_deg = std::nullopt);

  // Mutations bump the revision by one. When `expected_revision` is given
  // and differs from the current one, ConflictError is thrown.
  Json add_pair(const std::string& id, AnnotatedPair pair, std::optional<std::uint64_t> expected_revision = {});
  Json delete_pair(const std::string& id, std::size_t k, std::optional<std::uint64_t> expected_revision = {});
  // Needs at least four pairs (InsufficientDataError otherwise).
  Json optimize(const std::string& id, std::optional<std::uint64_t> expected_revision = {});

  Image overlay(const std::string& id, const PerspectiveIntrinsics& view);
  std::string mesh_region(const Vec3& lo, const Vec3& hi) const;

  void register_routes(httplib::Server& server);

 private:
  struct Slot {
    std::mutex mutex;
    bool loaded = false;
    AnnotationSession session;
    Json doc;  // last persisted form
  };

  const ViewpointRecord& record(const std::string& pano_id) const;
  std::shared_ptr<const Image> pano(const std::string& pano_id);
  std::shared_ptr<Slot> slot(const std::string& id);
  void ensure_loaded(Slot& s, const std::string& id);
  void persist(Slot& s, const std::string& id);
  static void check_revision(const Slot& s, std::optional<std::uint64_t> expected);

  CityMesh mesh_;
  std::filesystem::path data_dir_;
  double max_snap_deg_;
  std::vector<ViewpointRecord> records_;
  std::map<std::string, std::size_t> record_index_;
  Segmentation segmentation_;
  std::unique_ptr<RayCaster> caster_;
  std::unique_ptr<PreparedMesh> prepared_;

  std::mutex slots_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::mutex pano_mutex_;
  std::map<std::string, std::shared_ptr<const Image>> panos_;
};

}  // namespace cityalign
