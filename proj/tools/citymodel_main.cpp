#include <iomanip>
#include <iostream>

#include "cityalign/city_model.hpp"
#include "cli_common.hpp"

int main(int argc, char** argv) {
  using namespace cityalign;
  CLI::App app{"City mesh queries"};
  app.require_subcommand(1);

  auto* elev = app.add_subcommand("elevation", "Terrain height under a plan position");
  std::string mesh_path;
  double x = 0.0, y = 0.0;
  elev->add_option("--mesh", mesh_path, "OBJ city mesh")->required();
  elev->add_option("--x", x)->required();
  elev->add_option("--y", y)->required();

  auto* info = app.add_subcommand("info", "Vertex, polygon and tag counts");
  info->add_option("--mesh", mesh_path, "OBJ city mesh")->required();

  return cli::run(app, argc, argv, [&] {
    const auto mesh = load_mesh(mesh_path);
    if (*elev) {
      std::cout << std::setprecision(17) << terrain_elevation_at(mesh, x, y) << '\n';
      return;
    }
    std::size_t counts[6] = {};
    for (auto t : mesh.tags) ++counts[static_cast<int>(t)];
    std::cout << "vertices " << mesh.vertices.size() << "\npolygons " << mesh.polygons.size() << '\n';
    for (int t = 0; t < 6; ++t) std::cout << tag_name(static_cast<SemanticTag>(t)) << ' ' << counts[t] << '\n';
    if (mesh.unknown_tag_warnings) std::cout << "unknown tag groups " << mesh.unknown_tag_warnings << '\n';
  });
}
