#include <cstdlib>
#include <iostream>

#include "cityalign/annotation.hpp"
#include "cli_common.hpp"

// after Eigen: <resolv.h> defines _res
#include <httplib.h>

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace cityalign;
  CLI::App app{"Annotation service"};
  std::string data_dir = env_or("CITYALIGN_DATA_DIR", "");
  std::string mesh_path = env_or("CITYALIGN_MESH", "");
  std::string host = env_or("CITYALIGN_HOST", "127.0.0.1");
  int port = std::atoi(env_or("CITYALIGN_PORT", "8080").c_str());
  double max_snap = kDefaultMaxSnapDeg;
  app.add_option("--data-dir", data_dir, "viewpoints.json, panos/, sessions/ (env CITYALIGN_DATA_DIR)");
  app.add_option("--mesh", mesh_path, "OBJ city mesh (env CITYALIGN_MESH)");
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--max-snap-deg", max_snap);

  return cli::run(app, argc, argv, [&] {
    if (data_dir.empty() || mesh_path.empty()) throw DomainError("--data-dir and --mesh are required");
    AnnotationService service(load_mesh(mesh_path), data_dir, max_snap);
    httplib::Server server;
    service.register_routes(server);
    std::cerr << "listening on " << host << ':' << port << '\n';
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  });
}
