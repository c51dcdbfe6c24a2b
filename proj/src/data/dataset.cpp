#include "r2r/data/dataset.hpp"

#include "r2r/common/error.hpp"
#include "r2r/data/clip_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace r2r::data {

using nlohmann::json;

void InteractionClip::validate() const {
    clip_a.validate();
    clip_b.validate();
    if (clip_a.length() != clip_b.length())
        throw DataError(DataErrc::length_mismatch, "interaction clips have " + std::to_string(clip_a.length()) +
                                                       " and " + std::to_string(clip_b.length()) + " frames");
    if (clip_a.fps != clip_b.fps) throw DataError(DataErrc::length_mismatch, "interaction clips differ in fps");
    if (!(ring.radius > 0.0)) throw DataError(DataErrc::invalid_argument, "ring radius must be positive");
}

InteractionClip load_interaction(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                                 const RingGeometry& ring) {
    InteractionClip out{load_clip(path_a), load_clip(path_b), ring};
    out.validate();
    return out;
}

MotionClip downsample(const MotionClip& clip, double target_fps) {
    if (!(target_fps > 0.0)) throw DataError(DataErrc::invalid_argument, "target fps must be positive");
    const double ratio = clip.fps / target_fps;
    const long step = std::lround(ratio);
    if (step < 1 || std::abs(ratio - static_cast<double>(step)) > 1e-9)
        throw DataError(DataErrc::invalid_argument, "fps ratio must be a positive integer");
    MotionClip out;
    out.skeleton = clip.skeleton;
    out.fps = target_fps;
    for (std::size_t i = 0; i < clip.frames.size(); i += static_cast<std::size_t>(step)) out.frames.push_back(clip.frames[i]);
    return out;
}

RoleStream encode_role(const InteractionClip& interaction, int role) {
    const MotionClip& agent = role == 0 ? interaction.clip_a : interaction.clip_b;
    const MotionClip& opp = role == 0 ? interaction.clip_b : interaction.clip_a;
    const auto& skel = agent.skeleton;

    RoleStream s;
    auto enc = motion::encode_motion(agent.frames, skel);
    s.agent_roots = std::move(enc.roots);
    s.agent = std::move(enc.frames);

    std::vector<motion::RootFrame> opp_roots;
    opp_roots.reserve(opp.length());
    for (std::size_t i = 0; i < opp.length(); ++i)
        opp_roots.push_back(motion::extract_root_frame(opp.frames[i], opp.skeleton, i > 0 ? &opp_roots[i - 1] : nullptr));
    const auto opp_vel = motion::world_velocities(opp.frames);

    const std::size_t n = agent.length();
    s.opponent.reserve(n);
    s.roots.reserve(n);
    s.sparse.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.opponent.push_back(motion::encode_opponent_frame(opp.frames[i], opp_vel[i], s.agent_roots[i]));
        s.roots.push_back(motion::compute_root_info(s.agent_roots[i], opp_roots[i], interaction.ring.center));
        s.sparse.push_back(motion::extract_sparse_signal(agent.frames[i], s.agent_roots[i > 0 ? i - 1 : 0], skel));
    }
    return s;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, std::size_t stride) {
    std::vector<std::size_t> starts;
    if (window == 0 || stride == 0 || length < window) return starts;
    for (std::size_t s = 0; s + window <= length; s += stride) starts.push_back(s);
    return starts;
}

std::vector<TrainingWindow> make_windows(const InteractionClip& interaction, std::size_t window, std::size_t stride,
                                         std::size_t d, bool with_sparse) {
    if (d == 0 || window % d != 0) throw DataError(DataErrc::invalid_argument, "window must be divisible by d");
    interaction.validate();
    std::vector<TrainingWindow> out;
    const auto starts = window_starts(interaction.length(), window, stride);
    if (starts.empty()) return out;
    for (int role = 0; role < 2; ++role) {
        const RoleStream s = encode_role(interaction, role);
        for (std::size_t start : starts) {
            TrainingWindow w;
            w.role = role;
            w.start = start;
            const auto b = static_cast<std::ptrdiff_t>(start);
            const auto e = static_cast<std::ptrdiff_t>(start + window);
            w.agent_frames.assign(s.agent.begin() + b, s.agent.begin() + e);
            w.opponent_frames.assign(s.opponent.begin() + b, s.opponent.begin() + e);
            w.root_infos.assign(s.roots.begin() + b, s.roots.begin() + e);
            if (with_sparse) w.sparse_signals.emplace(s.sparse.begin() + b, s.sparse.begin() + e);
            out.push_back(std::move(w));
        }
    }
    return out;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.json";
    std::ifstream is(path);
    if (!is) throw DataError(DataErrc::io_error, "cannot open " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw DataError(DataErrc::malformed_header, std::string("manifest parse error: ") + e.what());
    }
    if (!j.contains("format") || !j["format"].is_string())
        throw DataError(DataErrc::malformed_header, "manifest missing 'format'");
    const auto version = j["format"].get<std::string>();
    if (version != kManifestVersion) {
        if (version.rfind("r2r-dataset/", 0) == 0) throw DataError(DataErrc::version_mismatch, "manifest " + version);
        throw DataError(DataErrc::malformed_header, "unrecognised manifest format " + version);
    }
    DatasetManifest m;
    try {
        for (const auto& e : j.at("interactions")) {
            ManifestEntry entry;
            entry.name = e.at("name").get<std::string>();
            entry.clip_a = e.at("clip_a").get<std::string>();
            entry.clip_b = e.at("clip_b").get<std::string>();
            const auto& c = e.at("ring_center");
            entry.ring.center = Vec2(c.at(0).get<double>(), c.at(1).get<double>());
            entry.ring.radius = e.at("ring_radius").get<double>();
            entry.split = e.at("split").get<std::string>();
            m.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw DataError(DataErrc::malformed_body, std::string("manifest entries: ") + e.what());
    }
    return m;
}

void save_manifest(const std::filesystem::path& root, const DatasetManifest& manifest) {
    json j;
    j["format"] = kManifestVersion;
    json list = json::array();
    for (const auto& e : manifest.entries) {
        list.push_back({{"name", e.name},
                        {"clip_a", e.clip_a},
                        {"clip_b", e.clip_b},
                        {"ring_center", {e.ring.center.x(), e.ring.center.y()}},
                        {"ring_radius", e.ring.radius},
                        {"split", e.split}});
    }
    j["interactions"] = std::move(list);
    const auto path = root / "manifest.json";
    std::ofstream os(path);
    if (!os) throw DataError(DataErrc::io_error, "cannot write " + path.string());
    os << j.dump(2) << '\n';
}

std::vector<NamedInteraction> load_dataset(const std::filesystem::path& root, const std::string& split) {
    const auto manifest = load_manifest(root);
    std::vector<NamedInteraction> out;
    for (const auto& e : manifest.entries) {
        if (!split.empty() && e.split != split) continue;
        out.push_back({e.name, load_interaction(root / e.clip_a, root / e.clip_b, e.ring)});
    }
    return out;
}

std::vector<std::string> assign_splits(std::size_t count, double train_fraction, unsigned long long seed) {
    std::vector<std::size_t> perm(count);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(count)));
    std::vector<std::string> split(count, "test");
    for (std::size_t i = 0; i < std::min(train, count); ++i) split[perm[i]] = "train";
    return split;
}

}  // namespace r2r::data
