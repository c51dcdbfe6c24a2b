#pragma once

// Layered run configuration: built-in defaults < key=value file < flags.
// Keys are dotted paths into the defaults ("policy.window",
// "stage2.batch"); a key not present in the defaults is an error.

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace r2r::cli {

class LayeredConfig {
public:
    explicit LayeredConfig(const nlohmann::json& defaults);

    /// Lines of `key = value`; '#' starts a comment.
    void load_file(const std::filesystem::path& path);
    /// Value text is interpreted by the type of the default.
    void set(const std::string& key, const std::string& value);
    /// "key=value" form used by --set.
    void set_assignment(const std::string& assignment);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const nlohmann::json& at(const std::string& key) const;
    /// Nested object for a top-level section.
    nlohmann::json section(const std::string& name) const;
    nlohmann::json tree() const;

private:
    std::map<std::string, nlohmann::json> values_;
};

}  // namespace r2r::cli
