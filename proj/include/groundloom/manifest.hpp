#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace groundloom::io {

// Reproducibility record written atomically alongside every output artifact.
// Re-running the recorded command with the recorded config reproduces the
// recorded output checksums.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, std::string>> inputs;   // (path, checksum)
  std::vector<std::pair<std::string, std::string>> outputs;  // (path, checksum)

  void add_input(const std::string& path);
  void add_output(const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace groundloom::io
