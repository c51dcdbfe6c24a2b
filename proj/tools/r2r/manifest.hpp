#pragma once

// Run manifests: what ran, with which configuration and seeds, on which
// inputs, producing which artifacts. Files are identified by SHA-256.

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace r2r::cli {

std::string sha256_file(const std::filesystem::path& path);
/// Hash over sorted relative paths and file contents; run manifests are skipped.
std::string sha256_tree(const std::filesystem::path& root);
std::string sha256_path(const std::filesystem::path& path);

inline constexpr const char* kRunManifestName = "run_manifest.json";

class RunManifest {
public:
    RunManifest(std::string command, std::vector<std::string> argv);

    void set_config(nlohmann::json config) { config_ = std::move(config); }
    void add_seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    void note(const std::string& key, nlohmann::json value) { notes_[key] = std::move(value); }

    /// Directory outputs get <dir>/run_manifest.json, files <file>.manifest.json.
    /// Returns the path written.
    std::filesystem::path write_next_to(const std::filesystem::path& artifact) const;
    nlohmann::json to_json() const;

private:
    std::string command_;
    std::vector<std::string> argv_;
    nlohmann::json config_ = nlohmann::json::object();
    nlohmann::json seeds_ = nlohmann::json::object();
    nlohmann::json inputs_ = nlohmann::json::array();
    nlohmann::json outputs_ = nlohmann::json::array();
    nlohmann::json notes_ = nlohmann::json::object();
    std::chrono::system_clock::time_point started_;
};

}  // namespace r2r::cli
