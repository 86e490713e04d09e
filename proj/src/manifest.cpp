#include "genrec/manifest.hpp"

#include <fstream>

#include "genrec/common.hpp"
#include "json.hpp"

namespace genrec::manifest {

using nlohmann::json;

void RunManifest::add_input(const std::string& path) {
    inputs.push_back({path, fnv1a_hex_of_file(path)});
}

void RunManifest::add_output(const std::string& path) {
    outputs.push_back({path, fnv1a_hex_of_file(path)});
}

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    if (!config_json.empty()) {
        j["config"] = json::parse(config_json);
    } else {
        j["config"] = json::object();
    }
    j["seed"] = seed;
    const auto refs = [](const std::vector<FileRef>& files) {
        json arr = json::array();
        for (const auto& f : files) arr.push_back({{"path", f.path}, {"digest", f.digest}});
        return arr;
    };
    j["inputs"] = refs(inputs);
    j["outputs"] = refs(outputs);
    j["duration_seconds"] = duration_seconds;
    return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& manifest, const std::string& artifact_path) {
    const std::string path = artifact_path + ".manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << manifest.to_json();
    if (!out) throw DataError("manifest write failed: " + path);
}

}  // namespace genrec::manifest
