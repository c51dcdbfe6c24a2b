#pragma once

#include "r2r/motion/clip.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace r2r::data {

using motion::MotionClip;
using motion::Vec2;

struct RingGeometry {
    Vec2 center = Vec2::Zero();
    double radius = 3.0;
};

struct InteractionClip {
    MotionClip clip_a;
    MotionClip clip_b;
    RingGeometry ring;

    std::size_t length() const { return clip_a.length(); }
    /// Throws DataError(length_mismatch) when lengths or fps differ.
    void validate() const;
};

InteractionClip load_interaction(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                                 const RingGeometry& ring);

/// Keeps every k-th frame where k = fps / target_fps must be a positive integer.
MotionClip downsample(const MotionClip& clip, double target_fps);

/// One character's view of an interaction: its own encoded motion plus the
/// opponent, root-info and sparse-signal streams, all per frame.
struct RoleStream {
    std::vector<motion::RootFrame> agent_roots;
    std::vector<motion::MotionFrame> agent;
    std::vector<motion::OpponentFrame> opponent;
    std::vector<motion::RootInfo> roots;
    std::vector<motion::SparseSignal> sparse;

    std::size_t length() const { return agent.size(); }
};

/// role 0: agent = clip_a, opponent = clip_b; role 1: swapped.
RoleStream encode_role(const InteractionClip& interaction, int role);

struct TrainingWindow {
    int role = 0;
    std::size_t start = 0;
    std::vector<motion::MotionFrame> agent_frames;
    std::vector<motion::OpponentFrame> opponent_frames;
    std::vector<motion::RootInfo> root_infos;
    std::optional<std::vector<motion::SparseSignal>> sparse_signals;
};

/// Window start offsets for a stream of `length` frames: floor((L-W)/stride)+1
/// windows, none when L < W.
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window, std::size_t stride);

/// Windows for both roles (role-swap augmentation). W must be divisible by `d`.
std::vector<TrainingWindow> make_windows(const InteractionClip& interaction, std::size_t window, std::size_t stride,
                                         std::size_t d = 4, bool with_sparse = false);

// Dataset directory: <root>/manifest.json plus <root>/clips/*.

inline constexpr const char* kManifestVersion = "r2r-dataset/1";

struct ManifestEntry {
    std::string name;
    std::string clip_a;  // relative to the dataset root
    std::string clip_b;
    RingGeometry ring;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

DatasetManifest load_manifest(const std::filesystem::path& root);
void save_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);

struct NamedInteraction {
    std::string name;
    InteractionClip interaction;
};

/// Loads all interactions of a split ("" loads every entry).
std::vector<NamedInteraction> load_dataset(const std::filesystem::path& root, const std::string& split);

/// Deterministic clip-level split: the first round(0.8*n) clips of a seeded
/// permutation go to "train".
std::vector<std::string> assign_splits(std::size_t count, double train_fraction, unsigned long long seed);

}  // namespace r2r::data
