#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cityalign/geometry.hpp"

namespace cityalign {

struct ViewpointRecord {
  std::string pano_id;
  CameraPose pose;
  std::string capture_date;  // ISO 8601 date
  bool indoor = false;
  std::uint32_t n_annotations = 0;
  bool quality_ok = true;
};

enum class SplitKind { Random, Spatial };
enum class SplitLabel : std::int8_t { Excluded = -1, Train = 0, Valid = 1, Test = 2 };

const char* split_name(SplitLabel label);

inline constexpr double kDefaultSpatialCell = 200.0;

struct SplitSpec {
  SplitKind kind = SplitKind::Random;
  std::uint64_t seed = 0;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};  // train, valid, test
  double spatial_cell = kDefaultSpatialCell;       // meters

  void validate() const;
};

// Split sizes for n items: each fraction floored, the remainder handed out
// one at a time to train, valid, test, train, ...
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

// Labels parallel to `records`; indoor records are Excluded. Eligible records
// are shuffled by the seed and cut into consecutive runs by split_sizes.
std::vector<SplitLabel> split_random(const std::vector<ViewpointRecord>& records, const SplitSpec& spec);

// Cell key of a plan position: (floor(x / cell), floor(y / cell)).
std::pair<std::int64_t, std::int64_t> spatial_cell_key(const Vec3& location, double cell);

// Distinct cells of eligible records are sorted, shuffled by the seed and cut
// by split_sizes; every record takes its cell's label.
std::vector<SplitLabel> split_spatial(const std::vector<ViewpointRecord>& records, const SplitSpec& spec);

std::vector<SplitLabel> split_records(const std::vector<ViewpointRecord>& records, const SplitSpec& spec);

inline constexpr int kViewsPerViewpoint = 8;

struct ManifestEntry {
  std::string view_id;  // <pano_id>_<k>
  std::string pano_id;
  int view = 0;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  std::vector<std::string> files;  // relative to the products directory
  SplitLabel split = SplitLabel::Excluded;
  bool quality_ok = false;
};

struct MissingView {
  std::string view_id;
  std::vector<std::string> files;  // absent product files
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<MissingView> missing;
  std::size_t quality_passed = 0;
  double pass_ratio = 0.0;  // quality_passed / entries, 0 when empty
};

// Newline-delimited view ids; blank lines and surrounding whitespace ignored.
std::set<std::string> read_quality_list(const std::filesystem::path& path);

// One entry per complete view of every non-indoor record. A view missing any
// product file is listed under `missing` instead. Views pass quality when
// their id is in `quality` or, without a list, when the record is marked ok.
Manifest build_manifest(const std::vector<ViewpointRecord>& records, const std::vector<SplitLabel>& labels,
                        const std::filesystem::path& products_dir,
                        const std::optional<std::set<std::string>>& quality = std::nullopt);

struct CountStats {
  std::map<std::uint32_t, std::size_t> histogram;
  std::uint32_t min = 0;
  std::uint32_t median = 0;  // nearest rank
  std::uint32_t max = 0;
};

CountStats annotation_count_stats(const std::vector<ViewpointRecord>& records);

// Scale-invariant log error: variance of log(pred) - log(gt) over pixels
// where both depths are positive and finite and the mask (if given) is set.
double compute_sil(const std::vector<double>& pred, const std::vector<double>& gt,
                   const std::vector<std::uint8_t>& mask = {});

}  // namespace cityalign
