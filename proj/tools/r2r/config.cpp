#include "config.hpp"

#include "r2r/common/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace r2r::cli {

using nlohmann::json;

namespace {

void flatten(const json& node, const std::string& prefix, std::map<std::string, json>& out) {
    if (node.is_object() && !node.empty()) {
        for (const auto& [k, v] : node.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
        return;
    }
    out[prefix] = node;
}

std::string trim(const std::string& s) {
    const auto b = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    const auto e = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
    return b < e ? std::string(b, e) : std::string();
}

json parse_as(const json& like, const std::string& key, const std::string& text) {
    const auto bad = [&](const char* kind) {
        return ConfigError("config key '" + key + "' expects " + kind + ", got '" + text + "'");
    };
    if (like.is_boolean()) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw bad("a boolean");
    }
    if (like.is_number_integer()) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(text, &used);
            if (used != text.size()) throw bad("an integer");
            if (like.is_number_unsigned() && v < 0) throw bad("a non-negative integer");
            return v;
        } catch (const std::logic_error&) {
            throw bad("an integer");
        }
    }
    if (like.is_number()) {
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw bad("a number");
            return v;
        } catch (const std::logic_error&) {
            throw bad("a number");
        }
    }
    if (like.is_string()) return text;
    const json parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded()) throw bad("JSON");
    return parsed;
}

}  // namespace

LayeredConfig::LayeredConfig(const json& defaults) { flatten(defaults, "", values_); }

void LayeredConfig::set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = parse_as(it->second, key, value);
}

void LayeredConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void LayeredConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(DataErrc::io_error, "cannot open config " + path.string());
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        if (body.find('=') == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
        try {
            set_assignment(body);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

const json& LayeredConfig::at(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

json LayeredConfig::tree() const {
    json out = json::object();
    for (const auto& [key, value] : values_) {
        std::string pointer = "/" + key;
        std::replace(pointer.begin(), pointer.end(), '.', '/');
        out[json::json_pointer(pointer)] = value;
    }
    return out;
}

json LayeredConfig::section(const std::string& name) const {
    const json t = tree();
    return t.contains(name) ? t.at(name) : json::object();
}

}  // namespace r2r::cli
