#include <fstream>
#include <iomanip>
#include <iostream>

#include "cityalign/georeg.hpp"
#include "cityalign/json_io.hpp"
#include "cli_common.hpp"

int main(int argc, char** argv) {
  using namespace cityalign;
  CLI::App app{"CAD to geodetic plan registration"};
  app.require_subcommand(1);

  std::string pairs_path, field_path, out_path;
  double cell = 0.0;
  std::vector<double> lambdas{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  auto* fit = app.add_subcommand("fit", "Fit a deformation field to control pairs");
  fit->add_option("--pairs", pairs_path, "CSV x_cad,y_cad,lat,lon")->required();
  fit->add_option("--cell", cell, "Grid cell size in meters (default: diagonal / 32)");
  fit->add_option("--lambda-grid", lambdas, "Smoothness weights tried by leave-one-out")->delimiter(',');
  fit->add_option("--out", out_path, "Output field JSON")->required();

  double x = 0.0, y = 0.0, lat = 0.0, lon = 0.0;
  auto* wrp = app.add_subcommand("warp", "Map a CAD plan position to geodetic coordinates");
  wrp->add_option("--field", field_path)->required();
  wrp->add_option("--x", x)->required();
  wrp->add_option("--y", y)->required();

  auto* inv = app.add_subcommand("invert", "Map a geodetic position back to the CAD plan");
  inv->add_option("--field", field_path)->required();
  auto* ox = inv->add_option("--x", x, "Local plane x, meters");
  auto* oy = inv->add_option("--y", y, "Local plane y, meters");
  auto* olat = inv->add_option("--lat", lat, "Latitude, degrees");
  auto* olon = inv->add_option("--lon", lon, "Longitude, degrees");
  ox->needs(oy);
  olat->needs(olon);
  ox->excludes(olat);

  return cli::run(app, argc, argv, [&] {
    std::cout << std::setprecision(17);
    if (*fit) {
      const auto geo = read_geodetic_pairs_csv(pairs_path);
      if (geo.empty()) throw InsufficientDataError("no control pairs in " + pairs_path);
      const auto ref = centroid_reference(geo);
      const auto pairs = to_local_pairs(geo, ref);
      const auto grid = default_grid(pairs, cell);
      StoredField out;
      out.reference = ref;
      out.lambda = lambdas.at(0);
      Json report;
      if (lambdas.size() > 1) {
        const auto sel = select_lambda_cv(pairs, grid, lambdas);
        out.lambda = sel.lambda;
        report["cv_errors"] = sel.cv_errors;
      }
      FitReport fr;
      out.field = fit_field(pairs, grid, out.lambda, &fr);
      write_json_atomic(out_path, field_to_json(out));
      report["lambda"] = out.lambda;
      report["objective"] = fr.objective;
      report["iterations"] = fr.iterations;
      report["data_rmse_m"] = std::sqrt(fr.data / pairs.size());
      std::cout << report.dump(2) << '\n';
      return;
    }
    const auto stored = field_from_json(read_json(field_path));
    if (*wrp) {
      const Vec2 w = warp(stored.field, Vec2(x, y));
      Json out{{"x", w.x()}, {"y", w.y()}};
      if (stored.reference) {
        stored.reference->to_geodetic(w, lat, lon);
        out["lat"] = lat;
        out["lon"] = lon;
      }
      std::cout << out.dump(2) << '\n';
      return;
    }
    Vec2 target(x, y);
    if (olat->count()) {
      if (!stored.reference) throw DomainError("field has no geodetic reference; pass --x/--y");
      target = stored.reference->to_local(lat, lon);
    } else if (!ox->count()) {
      throw DomainError("invert needs --x/--y or --lat/--lon");
    }
    InversionResult info;
    const Vec2 c = invert_warp(stored.field, target, std::nullopt, &info);
    std::cout << Json{{"x", c.x()}, {"y", c.y()}, {"residual", info.residual}, {"iterations", info.iterations}}.dump(2)
              << '\n';
  });
}
