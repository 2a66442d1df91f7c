#include "retgen/manifest.hpp"

#include <filesystem>

#include <json.hpp>

namespace retgen {

using nlohmann::json;

void RunManifest::add_input(const std::string& path) {
    inputs.emplace_back(path, hash_file(path));
}

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["config_path"] = config_path;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["code_version"] = code_version;
    json in = json::array();
    for (const auto& [path, hash] : inputs) in.push_back({{"path", path}, {"hash", hash}});
    j["inputs"] = in;
    j["outputs"] = outputs;
    j["counters"] = counters;
    j["duration_seconds"] = duration_seconds;
    return j.dump(2) + "\n";
}

void RunManifest::write(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    write_to((std::filesystem::path(dir) / "run_manifest.json").string());
}

void RunManifest::write_to(const std::string& path) const { write_text_file(path, to_json()); }

} // namespace retgen
