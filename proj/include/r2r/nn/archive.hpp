#pragma once

// Versioned checkpoint container: a JSON header (config echo and metadata)
// followed by named dense tensors in native little-endian doubles.

#include "r2r/nn/layers.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace r2r::nn {

inline constexpr const char* kCheckpointVersion = "r2r-ckpt/1";

struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Matrix> tensors;

    void put_params(const NamedParams& params, const std::string& prefix = "");
    /// Copies stored values into existing parameter storage; shapes must match.
    void get_params(const NamedParams& params, const std::string& prefix = "") const;

    const Matrix& tensor(const std::string& name) const;

    /// Embeds `other` under `prefix` (tensors) and meta[key].
    void embed(const Archive& other, const std::string& prefix, const std::string& key);
    Archive extract(const std::string& prefix, const std::string& key) const;
};

void write_archive(std::ostream& os, const Archive& archive);
Archive read_archive(std::istream& is);

void save_archive(const std::filesystem::path& path, const Archive& archive);
Archive load_archive(const std::filesystem::path& path);

}  // namespace r2r::nn
