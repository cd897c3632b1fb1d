#pragma once

// Record of one command invocation, written before any work starts.

#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

namespace skg {

struct RunManifest {
  std::string command;
  std::string config_path;  // empty when no config file was given
  nlohmann::json config;    // every resolved option, flags over file values
  std::string out_dir;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> hashes;  // artifact name -> content hash

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void write(const std::string& path) const;
};

RunManifest read_manifest(const std::string& path);

}  // namespace skg
