#include "skg/manifest.hpp"

#include <fstream>

#include "skg/errors.hpp"

namespace skg {

using nlohmann::json;

json RunManifest::to_json() const {
  return {{"command", command}, {"config_path", config_path}, {"config", config},
          {"out_dir", out_dir}, {"seed", seed},               {"hashes", hashes}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config_path = j.at("config_path").get<std::string>();
    m.config = j.at("config");
    m.out_dir = j.at("out_dir").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.hashes = j.at("hashes").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw SchemaError("$", std::string("manifest: ") + e.what());
  }
  return m;
}

void RunManifest::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest '" + path + "'");
  out << to_json().dump(1) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
  try {
    return RunManifest::from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(path, 1, e.what());
  }
}

}  // namespace skg
