#include "r2r/nn/archive.hpp"

#include "r2r/common/error.hpp"

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

namespace r2r::nn {

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError(DataErrc::malformed_body, "truncated checkpoint");
    return v;
}

std::string take_string(std::istream& is, std::uint64_t n) {
    if (n > (1ull << 32)) throw DataError(DataErrc::malformed_body, "implausible string length in checkpoint");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw DataError(DataErrc::malformed_body, "truncated checkpoint string");
    return s;
}

}  // namespace

void Archive::put_params(const NamedParams& params, const std::string& prefix) {
    for (const auto& [name, p] : params) tensors[prefix + name] = p.value();
}

void Archive::get_params(const NamedParams& params, const std::string& prefix) const {
    for (const auto& [name, p] : params) {
        const Matrix& src = tensor(prefix + name);
        Tensor handle = p;
        if (src.rows() != handle.rows() || src.cols() != handle.cols()) {
            throw DataError(DataErrc::malformed_body, "shape mismatch for tensor " + prefix + name);
        }
        handle.mutable_value() = src;
    }
}

const Matrix& Archive::tensor(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError(DataErrc::malformed_body, "missing tensor " + name);
    return it->second;
}

void Archive::embed(const Archive& other, const std::string& prefix, const std::string& key) {
    for (const auto& [name, m] : other.tensors) tensors[prefix + name] = m;
    meta[key] = other.meta;
}

Archive Archive::extract(const std::string& prefix, const std::string& key) const {
    Archive out;
    if (!meta.contains(key)) throw DataError(DataErrc::malformed_header, "missing embedded archive " + key);
    out.meta = meta.at(key);
    for (const auto& [name, m] : tensors)
        if (name.rfind(prefix, 0) == 0) out.tensors[name.substr(prefix.size())] = m;
    return out;
}

void write_archive(std::ostream& os, const Archive& archive) {
    const std::string magic = kCheckpointVersion;
    put<std::uint32_t>(os, static_cast<std::uint32_t>(magic.size()));
    os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
    const std::string header = archive.meta.dump();
    put<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    put<std::uint64_t>(os, archive.tensors.size());
    for (const auto& [name, m] : archive.tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
        put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
        os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
}

Archive read_archive(std::istream& is) {
    const auto magic_len = take<std::uint32_t>(is);
    if (magic_len > 64) throw DataError(DataErrc::malformed_header, "not a checkpoint");
    const std::string magic = take_string(is, magic_len);
    if (magic.rfind("r2r-ckpt/", 0) != 0) throw DataError(DataErrc::malformed_header, "not a checkpoint");
    if (magic != kCheckpointVersion) throw DataError(DataErrc::version_mismatch, "checkpoint version " + magic);
    Archive archive;
    const auto header_len = take<std::uint64_t>(is);
    try {
        archive.meta = nlohmann::json::parse(take_string(is, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(DataErrc::malformed_header, e.what());
    }
    const auto count = take<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = take_string(is, take<std::uint32_t>(is));
        const auto rows = take<std::uint64_t>(is);
        const auto cols = take<std::uint64_t>(is);
        if (rows * cols > (1ull << 31)) throw DataError(DataErrc::malformed_body, "implausible tensor size");
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!is) throw DataError(DataErrc::malformed_body, "truncated tensor " + name);
        archive.tensors.emplace(name, std::move(m));
    }
    return archive;
}

void save_archive(const std::filesystem::path& path, const Archive& archive) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError(DataErrc::io_error, "cannot write " + path.string());
    write_archive(os, archive);
    if (!os) throw DataError(DataErrc::io_error, "write failed for " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError(DataErrc::io_error, "cannot open " + path.string());
    return read_archive(is);
}

}  // namespace r2r::nn
