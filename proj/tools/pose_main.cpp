#include <iostream>

#include "cityalign/json_io.hpp"
#include "cityalign/pose.hpp"
#include "cli_common.hpp"

int main(int argc, char** argv) {
  using namespace cityalign;
  CLI::App app{"Panorama pose refinement"};
  app.require_subcommand(1);

  std::string pano_id, corr_path, field_path, mesh_path, out_path, init_path;
  double lat = 0.0, lon = 0.0, azimuth_deg = 0.0;
  auto* solve = app.add_subcommand("solve", "Refine a panorama pose from labeled correspondences");
  solve->add_option("--pano", pano_id, "Panorama id (checked against the correspondence file)");
  solve->add_option("--corr", corr_path, "Correspondence JSON")->required();
  solve->add_option("--field", field_path, "Deformation field JSON (for geodetic initialization)");
  solve->add_option("--mesh", mesh_path, "OBJ city mesh (for terrain height)");
  solve->add_option("--init", init_path, "Initial pose JSON");
  auto* olat = solve->add_option("--lat", lat, "Capture latitude, degrees");
  solve->add_option("--lon", lon, "Capture longitude, degrees");
  solve->add_option("--azimuth", azimuth_deg, "Capture heading, degrees");
  solve->add_option("--out", out_path, "Output pose JSON")->required();

  return cli::run(app, argc, argv, [&] {
    const auto c = correspondences_from_json(read_json(corr_path));
    if (!pano_id.empty() && !c.pano_id.empty() && pano_id != c.pano_id) {
      throw DomainError("correspondences belong to " + c.pano_id + ", not " + pano_id);
    }
    CameraPose init;
    if (!init_path.empty()) {
      init = pose_from_json(read_json(init_path));
    } else if (c.init) {
      init = *c.init;
    } else if (olat->count()) {
      if (field_path.empty() || mesh_path.empty()) throw DomainError("--lat/--lon need --field and --mesh");
      const auto stored = field_from_json(read_json(field_path));
      if (!stored.reference) throw DomainError("field has no geodetic reference");
      init = init_pose(lat, lon, deg2rad(azimuth_deg), *stored.reference, stored.field, load_mesh(mesh_path));
    } else {
      throw DomainError("no initial pose: pass --init, --lat/--lon, or include init in the correspondence file");
    }
    const auto sol = solve_pose(init, c.corr);
    Json out = solution_to_json(sol);
    out["pano_id"] = c.pano_id.empty() ? pano_id : c.pano_id;
    write_json_atomic(out_path, out);
    if (sol.few_pairs_warning) std::cerr << "warning: fewer than " << kRecommendedCorrespondences << " pairs\n";
    if (sol.rank_warning) std::cerr << "warning: pose is poorly constrained by these pairs\n";
    std::cout << out.dump(2) << '\n';
  });
}
