#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "emkat/evalharness.hpp"

namespace emkat::runconfig {

// A full run captured in one flat key = value file with per-module
// sections. Every key has a default except the data paths.
struct RunConfig {
  std::filesystem::path table_a;
  std::filesystem::path table_b;
  std::filesystem::path pairs;
  std::string id_column = "id";
  std::filesystem::path out = "out";
  evalharness::PipelineConfig pipeline;

  static RunConfig from_file(const std::filesystem::path& path);

  // Data paths must exist; rate must be in (0, 0.8].
  void validate() const;
};

}  // namespace emkat::runconfig
