#pragma once

#include <map>
#include <string>
#include <vector>

#include "retgen/common.hpp"

namespace retgen {

inline constexpr const char* kCodeVersion = "0.1.0";

// One manifest per run: the command, its configuration and input hashes, and
// the declared outputs. Identical hashes plus an identical seed reproduce
// identical output bytes.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::string config_hash;
    uint64_t seed = 0;
    std::string code_version = kCodeVersion;
    std::vector<std::pair<std::string, std::string>> inputs; // path -> content hash
    std::vector<std::string> outputs;
    std::map<std::string, int64_t> counters;
    double duration_seconds = 0.0;

    void add_input(const std::string& path);
    void add_output(const std::string& path) { outputs.push_back(path); }
    std::string to_json() const;
    void write(const std::string& dir) const; // <dir>/run_manifest.json
    void write_to(const std::string& path) const;
};

} // namespace retgen
