#include "manifest.hpp"

#include <json.hpp>

#include "ssmg/binary_io.hpp"
#include "ssmg/error.hpp"

namespace ssmg::cli {

void RunManifest::add_artifact(const std::filesystem::path& dir, const std::string& relative) {
    artifacts[relative] = file_content_hash(dir / relative);
}

void RunManifest::save(const std::filesystem::path& dir) const {
    nlohmann::ordered_json j;
    j["kind"] = kind;
    j["tool_version"] = tool_version;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["corpus"] = corpus;
    j["codebooks"] = codebooks;
    j["checkpoint_dir"] = checkpoint_dir;
    j["metrics_csv"] = metrics_csv;
    j["artifacts"] = artifacts;
    write_file(dir / kManifestName, j.dump(2) + "\n");
}

RunManifest RunManifest::load(const std::filesystem::path& dir) {
    const auto path = dir / kManifestName;
    if (!std::filesystem::exists(path)) throw DataError("E_MISSING", "no " + std::string(kManifestName) + " in " + dir.string());
    RunManifest m;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        m.kind = j.at("kind").get<std::string>();
        m.tool_version = j.at("tool_version").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.corpus = j.at("corpus").get<std::string>();
        m.codebooks = j.at("codebooks").get<std::string>();
        m.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
        m.metrics_csv = j.at("metrics_csv").get<std::string>();
        m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
    m.verify(dir);
    return m;
}

void RunManifest::verify(const std::filesystem::path& dir) const {
    for (const auto& [relative, hash] : artifacts) {
        const auto path = dir / relative;
        if (!std::filesystem::exists(path)) throw IntegrityError("manifest artifact missing: " + path.string());
        if (file_content_hash(path) != hash) throw IntegrityError("manifest artifact changed: " + path.string());
    }
}

}  // namespace ssmg::cli
