#pragma once

// Run manifests: every CLI command records its resolved config, seed, input
// and output digests, and wall-clock duration next to the artifact it wrote.

#include <cstdint>
#include <string>
#include <vector>

namespace genrec::manifest {

struct FileRef {
    std::string path;
    std::string digest;  // fnv1a-64 of the file bytes, hex
};

struct RunManifest {
    std::string command;
    std::string config_json;  // full resolved config, JSON text
    std::uint64_t seed = 0;
    std::vector<FileRef> inputs;
    std::vector<FileRef> outputs;
    double duration_seconds = 0.0;

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    std::string to_json() const;
};

// Writes `artifact_path + ".manifest.json"`.
void write_manifest(const RunManifest& manifest, const std::string& artifact_path);

}  // namespace genrec::manifest
