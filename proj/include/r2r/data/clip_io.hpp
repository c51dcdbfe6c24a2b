#pragma once

// Motion clip container, version "r2r-clip/1".
//
// Text encoding is a JSON object; binary encoding is a packed little-endian
// record stream. Both carry the skeleton (parents, offsets, names, joint
// roles), fps and per-frame {root_translation, joint_rotations (w,x,y,z)}.
// Frames whose joint positions do not follow from forward kinematics (model
// output) additionally carry joint_positions.

#include "r2r/motion/clip.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>

namespace r2r::data {

inline constexpr const char* kClipVersion = "r2r-clip/1";

enum class ClipEncoding { text, binary };

void write_clip(std::ostream& os, const motion::MotionClip& clip, ClipEncoding encoding);
motion::MotionClip read_clip(std::istream& is);

void save_clip(const std::filesystem::path& path, const motion::MotionClip& clip, ClipEncoding encoding);
/// Detects the encoding from the first byte.
motion::MotionClip load_clip(const std::filesystem::path& path);

nlohmann::json skeleton_to_json(const motion::Skeleton& skeleton);
motion::Skeleton skeleton_from_json(const nlohmann::json& j);

}  // namespace r2r::data
