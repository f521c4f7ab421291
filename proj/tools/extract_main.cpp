#include <iostream>

#include "cityalign/holistic.hpp"
#include "cityalign/json_io.hpp"
#include "cli_common.hpp"

using namespace cityalign;

namespace {

std::vector<std::uint32_t> load_segments(const std::string& path, const CityMesh& mesh, Segmentation& seg) {
  seg = segmentation_from_json(read_json(path));
  auto ids = seg.polygon_segment;
  if (ids.size() > mesh.size()) throw FormatError("segments reference polygons beyond the mesh");
  ids.resize(mesh.size(), 0);
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Holistic structure extraction"};
  app.require_subcommand(1);

  std::string mesh_path, segments_path, pose_path, records_path, out_path;
  double max_dihedral = kDefaultMaxDihedralDeg, merge = kDefaultMergeDistance;
  double eps = kDefaultVpEpsDeg;
  std::size_t min_pts = kDefaultVpMinPts;
  std::uint32_t min_pixels = kOccurrenceMinPixels;
  std::uint64_t seed = 0;

  auto* segs = app.add_subcommand("segments", "Group polygons into surface segments");
  segs->add_option("--mesh", mesh_path)->required();
  segs->add_option("--max-dihedral", max_dihedral, "Degrees");
  segs->add_option("--merge-distance", merge, "Meters");
  segs->add_option("--out", out_path)->required();

  auto* vps = app.add_subcommand("vps", "Vanishing directions of the eight views of a viewpoint");
  vps->add_option("--mesh", mesh_path)->required();
  vps->add_option("--segments", segments_path)->required();
  vps->add_option("--pose", pose_path)->required();
  vps->add_option("--seed", seed, "View pitch seed");
  vps->add_option("--eps", eps, "DBSCAN radius, degrees");
  vps->add_option("--min-pts", min_pts);
  vps->add_option("--out", out_path)->required();

  auto* occ = app.add_subcommand("occurrence", "Viewpoints in which each segment appears");
  occ->add_option("--mesh", mesh_path)->required();
  occ->add_option("--segments", segments_path)->required();
  occ->add_option("--records", records_path, "Viewpoint records JSON")->required();
  occ->add_option("--seed", seed, "View pitch seed");
  occ->add_option("--min-pixels", min_pixels);
  occ->add_option("--out", out_path)->required();

  return cli::run(app, argc, argv, [&] {
    const auto mesh = load_mesh(mesh_path);
    if (*segs) {
      const auto seg = segment_surfaces(mesh, build_adjacency(mesh, merge), max_dihedral);
      write_json_atomic(out_path, segmentation_to_json(seg));
      std::cout << seg.segments.size() << " segments\n";
      return;
    }
    Segmentation seg;
    const auto ids = load_segments(segments_path, mesh, seg);
    if (*vps) {
      const auto pose = pose_from_json(read_json(pose_path));
      const PreparedMesh prepared(mesh);
      Json views = Json::array();
      int k = 0;
      for (const auto& view : make_view_set(seed)) {
        const auto layers = render_cad_view(prepared, ids, RenderConfig{view, pose});
        const auto found = extract_vps(visible_segments(layers, seg), pose, view, eps, min_pts);
        views.push_back({{"view", k++},
                         {"yaw_deg", rad2deg(view.yaw)},
                         {"pitch_deg", rad2deg(view.pitch)},
                         {"vps", vps_to_json(found)}});
      }
      write_json_atomic(out_path, Json{{"views", views}});
      std::cout << views.dump(2) << '\n';
      return;
    }
    std::vector<CameraPose> poses;
    for (const auto& r : records_from_json(read_json(records_path))) {
      if (!r.indoor) poses.push_back(r.pose);
    }
    const auto stats = plane_occurrence(seg, poses, default_viewpoint_renderer(mesh, ids, seed), min_pixels);
    write_json_atomic(out_path, occurrence_to_json(stats));
    std::cout << Json(stats.histogram).dump() << '\n';
  });
}
