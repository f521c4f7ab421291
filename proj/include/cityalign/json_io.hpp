#pragma once

// File formats used by the command-line tools and the annotation service.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cityalign/dataset.hpp"
#include "cityalign/georeg.hpp"
#include "cityalign/holistic.hpp"
#include "cityalign/pose.hpp"

namespace cityalign {

using Json = nlohmann::json;

Json read_json(const std::filesystem::path& path);
// Written to a sibling temp file, then renamed over the target.
void write_json_atomic(const std::filesystem::path& path, const Json& doc);

Json vec_to_json(const Vec3& v);
Vec3 vec3_from_json(const Json& j);

// Azimuth is stored in degrees.
Json pose_to_json(const CameraPose& pose);
CameraPose pose_from_json(const Json& j);

struct StoredField {
  DeformationField field;
  std::optional<GeoReference> reference;
  double lambda = 0.0;
};

Json field_to_json(const StoredField& f);
StoredField field_from_json(const Json& j);

// CSV with columns x_cad,y_cad,lat,lon; a header line is optional.
std::vector<GeodeticPair> read_geodetic_pairs_csv(const std::filesystem::path& path);

// Labeled pixels of one panorama with their CAD points:
// {pano_id, width, height, pairs: [{u, v, world: [x, y, z]}], init?: pose}.
struct CorrespondenceFile {
  std::string pano_id;
  EquirectGrid grid;
  std::vector<PixelCoord> pixels;
  std::vector<Correspondence> corr;
  std::optional<CameraPose> init;
};

CorrespondenceFile correspondences_from_json(const Json& j);
Json correspondences_to_json(const CorrespondenceFile& c);

Json solution_to_json(const PoseSolution& s);

Json segmentation_to_json(const Segmentation& seg);
Segmentation segmentation_from_json(const Json& j);

Json vps_to_json(const std::vector<VanishingPoint>& vps);
Json occurrence_to_json(const OccurrenceStats& stats);

Json record_to_json(const ViewpointRecord& r);
ViewpointRecord record_from_json(const Json& j);
Json records_to_json(const std::vector<ViewpointRecord>& records);
std::vector<ViewpointRecord> records_from_json(const Json& j);

Json manifest_to_json(const Manifest& m);
Json count_stats_to_json(const CountStats& s);

}  // namespace cityalign
