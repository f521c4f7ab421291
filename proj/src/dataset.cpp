#include "cityalign/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "cityalign/errors.hpp"
#include "cityalign/random.hpp"
#include "cityalign/render.hpp"

namespace cityalign {

const char* split_name(SplitLabel label) {
  switch (label) {
    case SplitLabel::Train: return "train";
    case SplitLabel::Valid: return "valid";
    case SplitLabel::Test: return "test";
    case SplitLabel::Excluded: break;
  }
  return "excluded";
}

void SplitSpec::validate() const {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw DomainError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split fractions must sum to 1");
  if (kind == SplitKind::Spatial && !(spatial_cell > 0.0 && std::isfinite(spatial_cell))) {
    throw DomainError("spatial cell must be positive");
  }
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> sizes{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    sizes[k] = static_cast<std::size_t>(std::floor(fractions[k] * static_cast<double>(n) + 1e-9));
    used += sizes[k];
  }
  // Floors can only undershoot, except through the epsilon on exact products.
  while (used > n) {
    for (int k = 2; k >= 0 && used > n; --k) {
      if (sizes[k] > 0) {
        --sizes[k];
        --used;
      }
    }
  }
  for (int k = 0; used < n; k = (k + 1) % 3, ++used) ++sizes[k];
  return sizes;
}

namespace {

std::vector<std::size_t> eligible_indices(const std::vector<ViewpointRecord>& records) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].indoor) idx.push_back(i);
  }
  return idx;
}

SplitLabel label_for_position(std::size_t pos, const std::array<std::size_t, 3>& sizes) {
  if (pos < sizes[0]) return SplitLabel::Train;
  if (pos < sizes[0] + sizes[1]) return SplitLabel::Valid;
  return SplitLabel::Test;
}

}  // namespace

std::vector<SplitLabel> split_random(const std::vector<ViewpointRecord>& records, const SplitSpec& spec) {
  if (spec.kind != SplitKind::Random) throw DomainError("split_random needs a random split spec");
  spec.validate();
  auto idx = eligible_indices(records);
  if (idx.empty()) throw DomainError("no outdoor records to split");

  std::mt19937_64 rng(spec.seed);
  shuffle(idx, rng);
  const auto sizes = split_sizes(idx.size(), spec.fractions);
  std::vector<SplitLabel> labels(records.size(), SplitLabel::Excluded);
  for (std::size_t pos = 0; pos < idx.size(); ++pos) labels[idx[pos]] = label_for_position(pos, sizes);
  return labels;
}

std::pair<std::int64_t, std::int64_t> spatial_cell_key(const Vec3& location, double cell) {
  return {static_cast<std::int64_t>(std::floor(location.x() / cell)),
          static_cast<std::int64_t>(std::floor(location.y() / cell))};
}

std::vector<SplitLabel> split_spatial(const std::vector<ViewpointRecord>& records, const SplitSpec& spec) {
  if (spec.kind != SplitKind::Spatial) throw DomainError("split_spatial needs a spatial split spec");
  spec.validate();
  const auto idx = eligible_indices(records);
  if (idx.empty()) throw DomainError("no outdoor records to split");

  using Key = std::pair<std::int64_t, std::int64_t>;
  std::vector<Key> cells;
  for (auto i : idx) cells.push_back(spatial_cell_key(records[i].pose.location, spec.spatial_cell));
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  std::mt19937_64 rng(spec.seed);
  shuffle(cells, rng);
  const auto sizes = split_sizes(cells.size(), spec.fractions);
  std::map<Key, SplitLabel> cell_label;
  for (std::size_t pos = 0; pos < cells.size(); ++pos) cell_label[cells[pos]] = label_for_position(pos, sizes);

  std::vector<SplitLabel> labels(records.size(), SplitLabel::Excluded);
  for (auto i : idx) labels[i] = cell_label.at(spatial_cell_key(records[i].pose.location, spec.spatial_cell));
  return labels;
}

std::vector<SplitLabel> split_records(const std::vector<ViewpointRecord>& records, const SplitSpec& spec) {
  return spec.kind == SplitKind::Random ? split_random(records, spec) : split_spatial(records, spec);
}

std::set<std::string> read_quality_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.insert(line.substr(b, e - b + 1));
  }
  return ids;
}

namespace {

struct ViewAngles {
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
};

// Yaw/pitch per view index from <pano_id>_views.json; empty when unreadable.
std::map<int, ViewAngles> read_view_angles(const std::filesystem::path& path) {
  std::map<int, ViewAngles> out;
  std::ifstream in(path);
  if (!in) return out;
  const auto doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.contains("views")) return out;
  for (const auto& v : doc["views"]) {
    out[v.value("index", 0)] = {v.value("yaw_deg", 0.0), v.value("pitch_deg", 0.0)};
  }
  return out;
}

}  // namespace

Manifest build_manifest(const std::vector<ViewpointRecord>& records, const std::vector<SplitLabel>& labels,
                        const std::filesystem::path& products_dir,
                        const std::optional<std::set<std::string>>& quality) {
  if (labels.size() != records.size()) throw DomainError("one split label per record is required");
  Manifest m;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.indoor) continue;
    const std::string views_file = rec.pano_id + "_views.json";
    const bool have_views = std::filesystem::exists(products_dir / views_file);
    const auto angles = read_view_angles(products_dir / views_file);

    for (int k = 0; k < kViewsPerViewpoint; ++k) {
      const std::string view_id = rec.pano_id + "_" + std::to_string(k);
      std::vector<std::string> files, absent;
      for (const char* suffix : kProductSuffixes) {
        auto name = product_filename(rec.pano_id, k, suffix);
        (std::filesystem::exists(products_dir / name) ? files : absent).push_back(std::move(name));
      }
      const auto it = angles.find(k);
      if (!have_views || it == angles.end()) absent.push_back(views_file);
      if (!absent.empty()) {
        m.missing.push_back({view_id, std::move(absent)});
        continue;
      }
      ManifestEntry e;
      e.view_id = view_id;
      e.pano_id = rec.pano_id;
      e.view = k;
      e.yaw_deg = it->second.yaw_deg;
      e.pitch_deg = it->second.pitch_deg;
      e.files = std::move(files);
      e.split = labels[r];
      e.quality_ok = quality ? quality->count(view_id) > 0 : rec.quality_ok;
      m.quality_passed += e.quality_ok ? 1 : 0;
      m.entries.push_back(std::move(e));
    }
  }
  m.pass_ratio = m.entries.empty() ? 0.0 : static_cast<double>(m.quality_passed) / m.entries.size();
  return m;
}

CountStats annotation_count_stats(const std::vector<ViewpointRecord>& records) {
  CountStats s;
  if (records.empty()) return s;
  std::vector<std::uint32_t> counts;
  counts.reserve(records.size());
  for (const auto& r : records) {
    counts.push_back(r.n_annotations);
    ++s.histogram[r.n_annotations];
  }
  std::sort(counts.begin(), counts.end());
  s.min = counts.front();
  s.max = counts.back();
  const auto rank = static_cast<std::size_t>(std::ceil(0.5 * counts.size() - 1e-9));
  s.median = counts[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

double compute_sil(const std::vector<double>& pred, const std::vector<double>& gt, const std::vector<std::uint8_t>& mask) {
  if (pred.size() != gt.size()) throw DomainError("depth maps differ in size");
  if (!mask.empty() && mask.size() != pred.size()) throw DomainError("mask differs in size from depth maps");
  std::vector<double> d;
  d.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double p = pred[i], g = gt[i];
    if (!(p > 0.0 && g > 0.0 && std::isfinite(p) && std::isfinite(g))) continue;
    d.push_back(std::log(p) - std::log(g));
  }
  if (d.empty()) throw DomainError("no valid pixels for the SIL error");
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= d.size();
  // Centered second moment; equal to mean(d^2) - mean(d)^2 without the
  // cancellation.
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  return var / d.size();
}

}  // namespace cityalign
