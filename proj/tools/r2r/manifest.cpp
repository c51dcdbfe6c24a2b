#include "manifest.hpp"

#include "r2r/common/error.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace r2r::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
            throw std::runtime_error("sha256 init failed");
    }
    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
    void update(const std::string& s) { update(s.data(), s.size()); }
    void update_file(const fs::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError(DataErrc::io_error, "cannot read " + path.string());
        std::array<char, 1 << 16> buf{};
        while (in) {
            in.read(buf.data(), buf.size());
            update(buf.data(), static_cast<std::size_t>(in.gcount()));
        }
    }
    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int n = 0;
        EVP_DigestFinal_ex(ctx_.get(), md.data(), &n);
        std::ostringstream os;
        for (unsigned int i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
        return os.str();
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

bool is_manifest(const fs::path& p) {
    const auto name = p.filename().string();
    return name == kRunManifestName || name.ends_with(".manifest.json");
}

std::string iso_time(std::chrono::system_clock::time_point t) {
    const std::time_t c = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&c, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

std::string sha256_file(const fs::path& path) {
    Sha256 h;
    h.update_file(path);
    return h.hex();
}

std::string sha256_tree(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && !is_manifest(e.path())) files.push_back(fs::relative(e.path(), root));
    std::sort(files.begin(), files.end());
    Sha256 h;
    for (const auto& f : files) {
        h.update(f.generic_string());
        h.update("\0", 1);
        h.update(sha256_file(root / f));
    }
    return h.hex();
}

std::string sha256_path(const fs::path& path) {
    if (fs::is_directory(path)) return sha256_tree(path);
    return sha256_file(path);
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)), argv_(std::move(argv)), started_(std::chrono::system_clock::now()) {}

void RunManifest::add_input(const fs::path& path) {
    inputs_.push_back({{"path", path.string()}, {"sha256", sha256_path(path)}});
}

void RunManifest::add_output(const fs::path& path) {
    outputs_.push_back({{"path", path.string()}, {"sha256", sha256_path(path)}});
}

json RunManifest::to_json() const {
    return {{"version", "r2r-run/1"},
            {"command", command_},
            {"argv", argv_},
            {"config", config_},
            {"seeds", seeds_},
            {"inputs", inputs_},
            {"outputs", outputs_},
            {"notes", notes_},
            {"started", iso_time(started_)},
            {"finished", iso_time(std::chrono::system_clock::now())}};
}

fs::path RunManifest::write_next_to(const fs::path& artifact) const {
    const fs::path target = fs::is_directory(artifact) ? artifact / kRunManifestName
                                                       : fs::path(artifact.string() + ".manifest.json");
    std::ofstream out(target);
    if (!out) throw DataError(DataErrc::io_error, "cannot write " + target.string());
    out << to_json().dump(2) << '\n';
    return target;
}

}  // namespace r2r::cli
