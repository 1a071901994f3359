#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace ssmg::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

// Record of one command's output directory. Artifact paths are relative to that
// directory and map to their content hashes.
struct RunManifest {
    std::string kind;  // "corpus" or "run"
    std::string tool_version = kToolVersion;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string corpus;
    std::string codebooks;
    std::string checkpoint_dir;
    std::string metrics_csv;
    std::map<std::string, std::string> artifacts;

    void add_artifact(const std::filesystem::path& dir, const std::string& relative);

    void save(const std::filesystem::path& dir) const;
    // Loads and verifies: every artifact must exist with its recorded hash.
    static RunManifest load(const std::filesystem::path& dir);
    void verify(const std::filesystem::path& dir) const;
};

}  // namespace ssmg::cli
