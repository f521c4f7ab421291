#include <iostream>

#include "cityalign/json_io.hpp"
#include "cityalign/render.hpp"
#include "cli_common.hpp"

int main(int argc, char** argv) {
  using namespace cityalign;
  CLI::App app{"Perspective products for a viewpoint"};
  app.require_subcommand(1);

  std::string pano_path, pano_id, pose_path, mesh_path, segments_path, out_dir;
  std::uint64_t seed = 0;
  auto* vp = app.add_subcommand("viewpoint", "Render the eight views of one panorama");
  vp->add_option("--pano", pano_path, "Equirectangular PNG")->required()->check(CLI::ExistingFile);
  vp->add_option("--pano-id", pano_id, "Product file prefix (default: panorama file stem)");
  vp->add_option("--pose", pose_path, "Pose JSON")->required();
  vp->add_option("--mesh", mesh_path, "OBJ city mesh")->required();
  vp->add_option("--segments", segments_path, "Segments JSON (default: one segment per polygon)");
  vp->add_option("--seed", seed, "View pitch seed");
  vp->add_option("--out-dir", out_dir)->required();

  return cli::run(app, argc, argv, [&] {
    const auto mesh = load_mesh(mesh_path);
    std::vector<std::uint32_t> segments;
    if (!segments_path.empty()) {
      segments = segmentation_from_json(read_json(segments_path)).polygon_segment;
      if (segments.size() > mesh.size()) throw FormatError("segments reference polygons beyond the mesh");
      segments.resize(mesh.size(), 0);
    }
    const auto pose = pose_from_json(read_json(pose_path));
    const auto pano = read_png(pano_path);
    if (pano_id.empty()) pano_id = std::filesystem::path(pano_path).stem().string();
    std::filesystem::create_directories(out_dir);
    const auto products = render_viewpoint_products(mesh, segments, pano, pose, seed);
    write_viewpoint_products(out_dir, pano_id, products);
    std::cout << "wrote " << products.size() << " views for " << pano_id << " to " << out_dir << '\n';
  });
}
