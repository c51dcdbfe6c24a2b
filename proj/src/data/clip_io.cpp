#include "r2r/data/clip_io.hpp"

#include "r2r/common/error.hpp"

#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace r2r::data {

using motion::MotionClip;
using motion::Quat;
using motion::Skeleton;
using motion::Vec3;
using nlohmann::json;

namespace {

bool positions_follow_fk(const Skeleton& skeleton, const motion::WorldPose& pose) {
    const auto fk = motion::forward_kinematics(skeleton, pose.root_translation, pose.rotations);
    return (fk - pose.positions).cwiseAbs().maxCoeff() <= 1e-9;
}

bool clip_needs_positions(const MotionClip& clip) {
    for (const auto& f : clip.frames)
        if (!positions_follow_fk(clip.skeleton, f)) return true;
    return false;
}

void check_version(const std::string& version) {
    if (version == kClipVersion) return;
    if (version.rfind("r2r-clip/", 0) == 0) throw DataError(DataErrc::version_mismatch, "clip version " + version);
    throw DataError(DataErrc::malformed_header, "unrecognised clip header '" + version + "'");
}

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, DataErrc code = DataErrc::malformed_body) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError(code, "truncated clip");
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is, DataErrc code) {
    const auto n = take<std::uint32_t>(is, code);
    if (n > (1u << 20)) throw DataError(code, "implausible string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError(code, "truncated string");
    return s;
}

void write_text(std::ostream& os, const MotionClip& clip) {
    const bool with_positions = clip_needs_positions(clip);
    json j;
    j["format"] = kClipVersion;
    j["skeleton"] = skeleton_to_json(clip.skeleton);
    j["fps"] = clip.fps;
    json frames = json::array();
    for (const auto& f : clip.frames) {
        json fr;
        fr["root_translation"] = {f.root_translation.x(), f.root_translation.y(), f.root_translation.z()};
        json rots = json::array();
        for (const auto& q : f.rotations) rots.push_back({q.w(), q.x(), q.y(), q.z()});
        fr["joint_rotations"] = std::move(rots);
        if (with_positions) {
            json pos = json::array();
            for (Eigen::Index i = 0; i < f.positions.rows(); ++i)
                pos.push_back({f.positions(i, 0), f.positions(i, 1), f.positions(i, 2)});
            fr["joint_positions"] = std::move(pos);
        }
        frames.push_back(std::move(fr));
    }
    j["frames"] = std::move(frames);
    os << j.dump();
}

MotionClip read_text(std::istream& is) {
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("clip JSON parse error: ") + e.what());
    }
    if (!j.is_object() || !j.contains("format") || !j["format"].is_string())
        throw DataError(DataErrc::malformed_header, "clip header missing 'format'");
    check_version(j["format"].get<std::string>());
    MotionClip clip;
    try {
        clip.skeleton = skeleton_from_json(j.at("skeleton"));
        clip.fps = j.at("fps").get<double>();
    } catch (const json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("clip header: ") + e.what());
    }
    const int joints = clip.skeleton.joint_count();
    try {
        for (const auto& fr : j.at("frames")) {
            const auto rt = fr.at("root_translation");
            const Vec3 root(rt.at(0).get<double>(), rt.at(1).get<double>(), rt.at(2).get<double>());
            std::vector<Quat> rots;
            for (const auto& q : fr.at("joint_rotations"))
                rots.emplace_back(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                                  q.at(3).get<double>());
            if (static_cast<int>(rots.size()) != joints)
                throw DataError(DataErrc::malformed_body, "frame rotation count differs from joint count");
            motion::WorldPose pose;
            pose.root_translation = root;
            if (fr.contains("joint_positions")) {
                pose.positions.resize(joints, 3);
                int i = 0;
                for (const auto& p : fr["joint_positions"]) {
                    if (i >= joints) throw DataError(DataErrc::malformed_body, "too many joint positions");
                    pose.positions.row(i++) << p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>();
                }
                if (i != joints) throw DataError(DataErrc::malformed_body, "joint position count differs");
            } else {
                pose.positions = motion::forward_kinematics(clip.skeleton, root, rots);
            }
            pose.rotations = std::move(rots);
            clip.frames.push_back(std::move(pose));
        }
    } catch (const json::exception& e) {
        throw DataError(DataErrc::malformed_body, std::string("clip frames: ") + e.what());
    }
    clip.validate();
    return clip;
}

void write_binary(std::ostream& os, const MotionClip& clip) {
    const bool with_positions = clip_needs_positions(clip);
    const Skeleton& s = clip.skeleton;
    put_string(os, kClipVersion);
    const auto j = static_cast<std::uint32_t>(s.joint_count());
    put<std::uint32_t>(os, j);
    for (int p : s.parents) put<std::int32_t>(os, p);
    for (const auto& o : s.offsets)
        for (int k = 0; k < 3; ++k) put<double>(os, o[k]);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.names.size()));
    for (const auto& n : s.names) put_string(os, n);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.foot_joints.size()));
    for (int f : s.foot_joints) put<std::int32_t>(os, f);
    for (int r : {s.head, s.left_hand, s.right_hand, s.left_shoulder, s.right_shoulder}) put<std::int32_t>(os, r);
    put<double>(os, clip.fps);
    put<std::uint64_t>(os, clip.frames.size());
    put<std::uint8_t>(os, with_positions ? 1 : 0);
    for (const auto& f : clip.frames) {
        for (int k = 0; k < 3; ++k) put<double>(os, f.root_translation[k]);
        for (const auto& q : f.rotations) {
            put<double>(os, q.w());
            put<double>(os, q.x());
            put<double>(os, q.y());
            put<double>(os, q.z());
        }
        if (with_positions)
            for (Eigen::Index i = 0; i < f.positions.rows(); ++i)
                for (int k = 0; k < 3; ++k) put<double>(os, f.positions(i, k));
    }
}

MotionClip read_binary(std::istream& is) {
    const auto version = take_string(is, DataErrc::malformed_header);
    check_version(version);
    MotionClip clip;
    Skeleton& s = clip.skeleton;
    const auto j = take<std::uint32_t>(is, DataErrc::malformed_header);
    if (j == 0 || j > 4096) throw DataError(DataErrc::malformed_header, "implausible joint count");
    for (std::uint32_t i = 0; i < j; ++i) s.parents.push_back(take<std::int32_t>(is, DataErrc::malformed_header));
    for (std::uint32_t i = 0; i < j; ++i) {
        Vec3 o;
        for (int k = 0; k < 3; ++k) o[k] = take<double>(is, DataErrc::malformed_header);
        s.offsets.push_back(o);
    }
    const auto names = take<std::uint32_t>(is, DataErrc::malformed_header);
    if (names > 4096) throw DataError(DataErrc::malformed_header, "implausible name count");
    for (std::uint32_t i = 0; i < names; ++i) s.names.push_back(take_string(is, DataErrc::malformed_header));
    const auto feet = take<std::uint32_t>(is, DataErrc::malformed_header);
    if (feet > j) throw DataError(DataErrc::malformed_header, "implausible foot count");
    for (std::uint32_t i = 0; i < feet; ++i) s.foot_joints.push_back(take<std::int32_t>(is, DataErrc::malformed_header));
    s.head = take<std::int32_t>(is, DataErrc::malformed_header);
    s.left_hand = take<std::int32_t>(is, DataErrc::malformed_header);
    s.right_hand = take<std::int32_t>(is, DataErrc::malformed_header);
    s.left_shoulder = take<std::int32_t>(is, DataErrc::malformed_header);
    s.right_shoulder = take<std::int32_t>(is, DataErrc::malformed_header);
    s.validate();
    clip.fps = take<double>(is, DataErrc::malformed_header);
    const auto count = take<std::uint64_t>(is, DataErrc::malformed_header);
    const auto with_positions = take<std::uint8_t>(is, DataErrc::malformed_header);
    if (count > (1ull << 26)) throw DataError(DataErrc::malformed_header, "implausible frame count");
    clip.frames.reserve(count);
    for (std::uint64_t f = 0; f < count; ++f) {
        motion::WorldPose pose;
        for (int k = 0; k < 3; ++k) pose.root_translation[k] = take<double>(is);
        pose.rotations.reserve(j);
        for (std::uint32_t i = 0; i < j; ++i) {
            const double w = take<double>(is);
            const double x = take<double>(is);
            const double y = take<double>(is);
            const double z = take<double>(is);
            pose.rotations.emplace_back(w, x, y, z);
        }
        if (with_positions) {
            pose.positions.resize(j, 3);
            for (std::uint32_t i = 0; i < j; ++i)
                for (int k = 0; k < 3; ++k) pose.positions(i, k) = take<double>(is);
        } else {
            pose.positions = motion::forward_kinematics(s, pose.root_translation, pose.rotations);
        }
        clip.frames.push_back(std::move(pose));
    }
    clip.validate();
    return clip;
}

}  // namespace

json skeleton_to_json(const Skeleton& s) {
    json j;
    j["joint_count"] = s.joint_count();
    j["parents"] = s.parents;
    json offsets = json::array();
    for (const auto& o : s.offsets) offsets.push_back({o.x(), o.y(), o.z()});
    j["offsets"] = std::move(offsets);
    j["names"] = s.names;
    j["roles"] = {{"feet", s.foot_joints}, {"head", s.head},
                  {"left_hand", s.left_hand}, {"right_hand", s.right_hand},
                  {"left_shoulder", s.left_shoulder}, {"right_shoulder", s.right_shoulder}};
    return j;
}

Skeleton skeleton_from_json(const json& j) {
    Skeleton s;
    s.parents = j.at("parents").get<std::vector<int>>();
    for (const auto& o : j.at("offsets")) s.offsets.emplace_back(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
    if (j.contains("names")) s.names = j["names"].get<std::vector<std::string>>();
    const auto& roles = j.at("roles");
    s.foot_joints = roles.at("feet").get<std::vector<int>>();
    s.head = roles.at("head").get<int>();
    s.left_hand = roles.at("left_hand").get<int>();
    s.right_hand = roles.at("right_hand").get<int>();
    s.left_shoulder = roles.value("left_shoulder", -1);
    s.right_shoulder = roles.value("right_shoulder", -1);
    if (j.contains("joint_count") && j["joint_count"].get<int>() != s.joint_count())
        throw DataError(DataErrc::malformed_header, "joint_count disagrees with parents");
    s.validate();
    return s;
}

void write_clip(std::ostream& os, const MotionClip& clip, ClipEncoding encoding) {
    if (encoding == ClipEncoding::text) {
        write_text(os, clip);
    } else {
        write_binary(os, clip);
    }
}

MotionClip read_clip(std::istream& is) {
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw DataError(DataErrc::malformed_header, "empty clip stream");
    const auto first = bytes.find_first_not_of(" \t\r\n");
    std::istringstream buffer(std::move(bytes));
    if (first != std::string::npos && buffer.str()[first] == '{') return read_text(buffer);
    return read_binary(buffer);
}

void save_clip(const std::filesystem::path& path, const MotionClip& clip, ClipEncoding encoding) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError(DataErrc::io_error, "cannot write " + path.string());
    write_clip(os, clip, encoding);
    if (!os) throw DataError(DataErrc::io_error, "write failed for " + path.string());
}

MotionClip load_clip(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError(DataErrc::io_error, "cannot open " + path.string());
    return read_clip(is);
}

}  // namespace r2r::data
