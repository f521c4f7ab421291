#pragma once

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "cityalign/errors.hpp"

namespace cityalign::cli {

// Exit codes: 0 ok, 1 toolkit error, 2 usage error.
template <typename F>
int run(CLI::App& app, int argc, char** argv, F&& body) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    body();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cityalign::cli
