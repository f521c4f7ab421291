#include <iostream>

#include "cityalign/json_io.hpp"
#include "cityalign/random.hpp"
#include "cityalign/synth.hpp"
#include "cli_common.hpp"

using namespace cityalign;

int main(int argc, char** argv) {
  CLI::App app{"Synthetic city fixtures"};
  app.require_subcommand(1);

  SceneSpec spec;
  std::string out_path, truth_path, mesh_path, pose_path, segments_path, out_dir;
  int width = 1024;
  int viewpoints = 4;
  double max_tilt = 0.0;
  int pairs = 12;
  double noise_deg = 0.0, perturb_m = 5.0, perturb_deg = 5.0;

  auto add_scene = [&](CLI::App* sub) {
    sub->add_option("--seed", spec.seed);
    sub->add_option("--buildings", spec.n_buildings);
    sub->add_option("--area", spec.area, "Square meters");
    sub->add_option("--min-height", spec.min_height);
    sub->add_option("--max-height", spec.max_height);
    sub->add_option("--max-rotation", spec.max_rotation_deg, "Degrees, 0 for axis-aligned boxes");
  };

  auto* city = app.add_subcommand("city", "Boxes on a terrain grid");
  add_scene(city);
  city->add_option("--out", out_path, "OBJ output")->required();
  city->add_option("--truth", truth_path, "Per-polygon ground-truth labels (JSON)");

  auto* pano = app.add_subcommand("pano", "Flat-colour equirectangular panorama by ray casting");
  pano->add_option("--mesh", mesh_path)->required();
  pano->add_option("--pose", pose_path)->required();
  pano->add_option("--segments", segments_path, "Segments JSON (default: one colour per polygon)");
  pano->add_option("--width", width, "Panorama width; height is half");
  pano->add_option("--out", out_path)->required();

  auto* scene = app.add_subcommand("scene", "City, street poses and panoramas laid out for the annotation service");
  add_scene(scene);
  scene->add_option("--viewpoints", viewpoints);
  scene->add_option("--width", width);
  scene->add_option("--max-tilt", max_tilt, "Degrees");
  scene->add_option("--pairs", pairs, "Correspondences written per viewpoint, 0 for none");
  scene->add_option("--noise", noise_deg, "Ray noise of the correspondences, degrees");
  scene->add_option("--perturb-m", perturb_m, "Offset of the initial pose in the correspondence file");
  scene->add_option("--perturb-deg", perturb_deg, "Heading offset of the initial pose");
  scene->add_option("--out-dir", out_dir)->required();

  return cli::run(app, argc, argv, [&] {
    if (*city) {
      const auto c = generate_city(spec);
      save_mesh(out_path, c.mesh);
      if (!truth_path.empty()) write_json_atomic(truth_path, Json{{"labels", c.truth}});
      std::cout << c.mesh.size() << " polygons\n";
      return;
    }
    if (*pano) {
      const auto mesh = load_mesh(mesh_path);
      std::vector<std::uint32_t> segs;
      if (!segments_path.empty()) {
        segs = segmentation_from_json(read_json(segments_path)).polygon_segment;
        segs.resize(mesh.size(), 0);
      }
      write_png(out_path, synth_panorama(mesh, segs, pose_from_json(read_json(pose_path)), {width, width / 2}));
      return;
    }
    const auto c = generate_city(spec);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir / "panos");
    if (pairs > 0) std::filesystem::create_directories(dir / "corr");
    save_mesh(dir / "city.obj", c.mesh);
    const RayCaster caster(c.mesh);
    std::mt19937_64 rng(spec.seed ^ 0x5eedULL);
    std::vector<ViewpointRecord> records;
    for (int k = 0; k < viewpoints; ++k) {
      ViewpointRecord r;
      r.pano_id = "pano" + std::to_string(k);
      r.pose = random_street_pose(c, rng, max_tilt);
      r.capture_date = "2020-01-01";
      const EquirectGrid grid{width, width / 2};
      write_png(dir / "panos" / (r.pano_id + ".png"), synth_panorama(caster, c.truth, r.pose, grid));
      if (pairs > 0) {
        CorrespondenceFile cf;
        cf.pano_id = r.pano_id;
        cf.grid = grid;
        cf.corr = synthetic_correspondences(c.mesh, caster, r.pose, static_cast<std::size_t>(pairs), rng, noise_deg);
        for (const auto& corr : cf.corr) cf.pixels.push_back(ray_to_equirect_pixel(grid, corr.ray.vec()));
        CameraPose init = r.pose;
        const double dir_xy = uniform(rng, -kPi, kPi);
        init.location += perturb_m * Vec3(std::cos(dir_xy), std::sin(dir_xy), 0.0);
        init.azimuth += deg2rad(perturb_deg);
        cf.init = init;
        write_json_atomic(dir / "corr" / (r.pano_id + ".json"), correspondences_to_json(cf));
      }
      records.push_back(r);
    }
    write_json_atomic(dir / "viewpoints.json", records_to_json(records));
    std::cout << "wrote " << viewpoints << " viewpoints to " << out_dir << '\n';
  });
}
