#include "groundloom/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "groundloom/serialize.hpp"
#include "groundloom/types.hpp"

namespace groundloom::io {

void RunManifest::add_input(const std::string& path) {
  inputs.emplace_back(path, checksum_file(path));
}

void RunManifest::add_output(const std::string& path) {
  outputs.emplace_back(path, checksum_file(path));
}

void RunManifest::write(const std::string& path) const {
  nlohmann::ordered_json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config;
  j["seeds"] = seeds;
  auto files = [](const std::vector<std::pair<std::string, std::string>>& v) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& [p, c] : v) arr.push_back({{"path", p}, {"checksum", c}});
    return arr;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write: " + path);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace groundloom::io
