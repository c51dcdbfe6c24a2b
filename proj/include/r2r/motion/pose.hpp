#pragma once

// Root-relative motion representations.
//
// A root frame is the ground projection of the root joint plus a horizontal
// facing direction. 2-vectors are (x, z) ground-plane coordinates. Local
// frames have the character facing +Z with +Y up.

#include "r2r/motion/skeleton.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace r2r::motion {

using JointMat3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using JointMat6 = Eigen::Matrix<double, Eigen::Dynamic, 6, Eigen::RowMajor>;

struct RootFrame {
    Vec2 position = Vec2::Zero();
    Vec2 facing = Vec2(0.0, 1.0);

    double yaw() const;
    /// Yaw rotation mapping local directions to world directions.
    Mat3 rotation() const;
    Vec3 to_local(const Vec3& world_point) const;
    Vec3 to_world(const Vec3& local_point) const;
    Vec3 dir_to_local(const Vec3& world_dir) const;
    Vec3 dir_to_world(const Vec3& local_dir) const;
    Vec2 to_local2(const Vec2& world_point) const;
    Vec2 dir_to_local2(const Vec2& world_dir) const;
    Vec2 dir_to_world2(const Vec2& local_dir) const;
};

/// World-space pose. `rotations` are global joint orientations; `positions`
/// are world joint positions (from FK for captured data, or the model's
/// explicit position channel for generated frames).
struct WorldPose {
    Vec3 root_translation = Vec3::Zero();
    std::vector<Quat> rotations;
    JointMat3 positions;
};

/// Agent frame: root motion relative to the previous root frame, joints
/// relative to the current root frame. Velocities are per frame.
struct MotionFrame {
    Vec2 r_off = Vec2::Zero();
    Vec2 r_dir = Vec2(0.0, 1.0);
    JointMat3 pos;
    JointMat6 rot;
    JointMat3 vel;
};

/// Opponent joints expressed in the agent's current root frame.
struct OpponentFrame {
    JointMat3 pos;
    JointMat6 rot;
    JointMat3 vel;
};

/// Agent root relative to the opponent's root frame plus distance to ring centre.
struct RootInfo {
    Vec2 offset = Vec2::Zero();
    Vec2 direction = Vec2(0.0, 1.0);
    double ring_dist = 0.0;
};

/// Head and hands relative to the previous frame's agent root frame.
struct SparseSignal {
    Vec3 head_pos = Vec3::Zero();
    Rot6 head_rot6d = matrix_to_rot6d(Mat3::Identity());
    Vec3 lhand_pos = Vec3::Zero();
    Rot6 lhand_rot6d = matrix_to_rot6d(Mat3::Identity());
    Vec3 rhand_pos = Vec3::Zero();
    Rot6 rhand_rot6d = matrix_to_rot6d(Mat3::Identity());
};

JointMat3 forward_kinematics(const Skeleton& skeleton, const Vec3& root_translation, const std::vector<Quat>& rotations);
WorldPose make_world_pose(const Skeleton& skeleton, const Vec3& root_translation, std::vector<Quat> rotations);

/// Root joint projected to the ground; facing is the root's local +Z projected
/// and normalised, falling back to (left - right shoulder) x up, then to the
/// previous facing. Throws NumericError when every option is degenerate.
RootFrame extract_root_frame(const WorldPose& pose, const Skeleton& skeleton, const RootFrame* previous = nullptr);

MotionFrame encode_agent_frame(const WorldPose& pose, const RootFrame& root, const WorldPose& prev_pose,
                               const RootFrame& prev_root);
MotionFrame encode_agent_frame(const WorldPose& pose, const WorldPose& prev_pose, const Skeleton& skeleton);

struct DecodedFrame {
    WorldPose pose;
    RootFrame root;
};

/// Integrates r_off/r_dir from `prev_root` and places joints in world space.
/// Rotation channels are orthonormalised; r_dir is renormalised and a zero
/// r_dir throws NumericError.
DecodedFrame decode_agent_frame(const MotionFrame& frame, const RootFrame& prev_root);

/// `world_velocity` holds the opponent's per-frame joint displacement in world space.
OpponentFrame encode_opponent_frame(const WorldPose& opponent, const JointMat3& world_velocity,
                                    const RootFrame& agent_root);
OpponentFrame encode_opponent_frame(const WorldPose& opponent, const WorldPose& opponent_prev,
                                    const RootFrame& agent_root);

RootInfo compute_root_info(const RootFrame& agent_root, const RootFrame& opponent_root, const Vec2& ring_center);

SparseSignal extract_sparse_signal(const WorldPose& pose, const RootFrame& prev_root, const Skeleton& skeleton);

/// Whole-clip encoding. Frame 0 is encoded against itself (stationary start).
struct EncodedMotion {
    std::vector<RootFrame> roots;
    std::vector<MotionFrame> frames;
};
EncodedMotion encode_motion(const std::vector<WorldPose>& poses, const Skeleton& skeleton);
/// Decodes a stream starting from the root frame preceding frames[0].
std::vector<DecodedFrame> decode_motion(const std::vector<MotionFrame>& frames, const RootFrame& start_root);

/// Per-frame world displacement of every joint; frame 0 is zero.
std::vector<JointMat3> world_velocities(const std::vector<WorldPose>& poses);

}  // namespace r2r::motion
