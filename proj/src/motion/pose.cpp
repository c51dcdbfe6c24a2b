#include "r2r/motion/pose.hpp"

#include "r2r/common/error.hpp"

#include <cmath>

namespace r2r::motion {

double RootFrame::yaw() const { return std::atan2(facing.x(), facing.y()); }

Mat3 RootFrame::rotation() const {
    const double c = facing.y();
    const double s = facing.x();
    Mat3 m;
    m << c, 0.0, s,  //
        0.0, 1.0, 0.0,  //
        -s, 0.0, c;
    return m;
}

Vec3 RootFrame::to_local(const Vec3& p) const {
    return rotation().transpose() * Vec3(p.x() - position.x(), p.y(), p.z() - position.y());
}

Vec3 RootFrame::to_world(const Vec3& p) const {
    const Vec3 w = rotation() * p;
    return {w.x() + position.x(), w.y(), w.z() + position.y()};
}

Vec3 RootFrame::dir_to_local(const Vec3& d) const { return rotation().transpose() * d; }
Vec3 RootFrame::dir_to_world(const Vec3& d) const { return rotation() * d; }

Vec2 RootFrame::dir_to_local2(const Vec2& d) const {
    const double c = facing.y();
    const double s = facing.x();
    return {c * d.x() - s * d.y(), s * d.x() + c * d.y()};
}

Vec2 RootFrame::dir_to_world2(const Vec2& d) const {
    const double c = facing.y();
    const double s = facing.x();
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

Vec2 RootFrame::to_local2(const Vec2& p) const { return dir_to_local2(p - position); }

JointMat3 forward_kinematics(const Skeleton& skeleton, const Vec3& root_translation, const std::vector<Quat>& rotations) {
    const int j = skeleton.joint_count();
    if (static_cast<int>(rotations.size()) != j) throw DataError(DataErrc::invalid_argument, "rotation count != joints");
    JointMat3 pos(j, 3);
    for (int i = 0; i < j; ++i) {
        const int p = skeleton.parents[i];
        if (p == kNoParent) {
            pos.row(i) = root_translation.transpose();
        } else {
            // Parents precede children in the joint ordering.
            pos.row(i) = pos.row(p) + (rotations[p] * skeleton.offsets[i]).transpose();
        }
    }
    return pos;
}

WorldPose make_world_pose(const Skeleton& skeleton, const Vec3& root_translation, std::vector<Quat> rotations) {
    WorldPose pose;
    pose.root_translation = root_translation;
    pose.positions = forward_kinematics(skeleton, root_translation, rotations);
    pose.rotations = std::move(rotations);
    return pose;
}

RootFrame extract_root_frame(const WorldPose& pose, const Skeleton& skeleton, const RootFrame* previous) {
    RootFrame root;
    root.position = Vec2(pose.positions(0, 0), pose.positions(0, 2));

    const Vec3 forward = pose.rotations.at(0).toRotationMatrix().col(2);
    Vec2 f(forward.x(), forward.z());
    if (f.norm() < 1e-8 && skeleton.left_shoulder >= 0 && skeleton.right_shoulder >= 0) {
        const Vec3 s = (pose.positions.row(skeleton.left_shoulder) - pose.positions.row(skeleton.right_shoulder)).transpose();
        const Vec3 c = s.cross(Vec3::UnitY());
        f = Vec2(c.x(), c.z());
    }
    if (f.norm() < 1e-8) {
        if (previous == nullptr) throw NumericError("degenerate facing direction with no previous frame");
        root.facing = previous->facing;
    } else {
        root.facing = f.normalized();
    }
    return root;
}

MotionFrame encode_agent_frame(const WorldPose& pose, const RootFrame& root, const WorldPose& prev_pose,
                               const RootFrame& prev_root) {
    const Eigen::Index j = pose.positions.rows();
    MotionFrame f;
    f.r_off = prev_root.to_local2(root.position);
    f.r_dir = prev_root.dir_to_local2(root.facing);
    f.pos.resize(j, 3);
    f.rot.resize(j, 6);
    f.vel.resize(j, 3);
    const Mat3 rt = root.rotation().transpose();
    for (Eigen::Index i = 0; i < j; ++i) {
        const Vec3 p = pose.positions.row(i).transpose();
        f.pos.row(i) = root.to_local(p).transpose();
        f.rot.row(i) = matrix_to_rot6d(rt * pose.rotations[i].toRotationMatrix()).transpose();
        f.vel.row(i) = (rt * (p - prev_pose.positions.row(i).transpose())).transpose();
    }
    return f;
}

MotionFrame encode_agent_frame(const WorldPose& pose, const WorldPose& prev_pose, const Skeleton& skeleton) {
    const RootFrame prev_root = extract_root_frame(prev_pose, skeleton);
    const RootFrame root = extract_root_frame(pose, skeleton, &prev_root);
    return encode_agent_frame(pose, root, prev_pose, prev_root);
}

DecodedFrame decode_agent_frame(const MotionFrame& frame, const RootFrame& prev_root) {
    const double n = frame.r_dir.norm();
    if (!(n > 1e-12) || !std::isfinite(n)) throw NumericError("zero or invalid r_dir in motion frame");
    DecodedFrame out;
    out.root.position = prev_root.position + prev_root.dir_to_world2(frame.r_off);
    out.root.facing = prev_root.dir_to_world2(frame.r_dir / n).normalized();

    const Eigen::Index j = frame.pos.rows();
    const Mat3 r = out.root.rotation();
    out.pose.positions.resize(j, 3);
    out.pose.rotations.resize(static_cast<std::size_t>(j));
    for (Eigen::Index i = 0; i < j; ++i) {
        out.pose.positions.row(i) = out.root.to_world(frame.pos.row(i).transpose()).transpose();
        const Rot6 v = frame.rot.row(i).transpose();
        out.pose.rotations[static_cast<std::size_t>(i)] = Quat(r * rot6d_to_matrix(v)).normalized();
    }
    out.pose.root_translation = out.pose.positions.row(0).transpose();
    return out;
}

OpponentFrame encode_opponent_frame(const WorldPose& opponent, const JointMat3& world_velocity,
                                    const RootFrame& agent_root) {
    const Eigen::Index j = opponent.positions.rows();
    OpponentFrame o;
    o.pos.resize(j, 3);
    o.rot.resize(j, 6);
    o.vel.resize(j, 3);
    const Mat3 rt = agent_root.rotation().transpose();
    for (Eigen::Index i = 0; i < j; ++i) {
        o.pos.row(i) = agent_root.to_local(opponent.positions.row(i).transpose()).transpose();
        o.rot.row(i) = matrix_to_rot6d(rt * opponent.rotations[static_cast<std::size_t>(i)].toRotationMatrix()).transpose();
        o.vel.row(i) = (rt * world_velocity.row(i).transpose()).transpose();
    }
    return o;
}

OpponentFrame encode_opponent_frame(const WorldPose& opponent, const WorldPose& opponent_prev,
                                    const RootFrame& agent_root) {
    const JointMat3 vel = opponent.positions - opponent_prev.positions;
    return encode_opponent_frame(opponent, vel, agent_root);
}

RootInfo compute_root_info(const RootFrame& agent_root, const RootFrame& opponent_root, const Vec2& ring_center) {
    RootInfo info;
    info.offset = opponent_root.to_local2(agent_root.position);
    info.direction = opponent_root.dir_to_local2(agent_root.facing);
    info.ring_dist = (agent_root.position - ring_center).norm();
    return info;
}

SparseSignal extract_sparse_signal(const WorldPose& pose, const RootFrame& prev_root, const Skeleton& skeleton) {
    const Mat3 rt = prev_root.rotation().transpose();
    auto local_pos = [&](int joint) { return prev_root.to_local(pose.positions.row(joint).transpose()); };
    auto local_rot = [&](int joint) {
        return matrix_to_rot6d(rt * pose.rotations[static_cast<std::size_t>(joint)].toRotationMatrix());
    };
    SparseSignal s;
    s.head_pos = local_pos(skeleton.head);
    s.head_rot6d = local_rot(skeleton.head);
    s.lhand_pos = local_pos(skeleton.left_hand);
    s.lhand_rot6d = local_rot(skeleton.left_hand);
    s.rhand_pos = local_pos(skeleton.right_hand);
    s.rhand_rot6d = local_rot(skeleton.right_hand);
    return s;
}

EncodedMotion encode_motion(const std::vector<WorldPose>& poses, const Skeleton& skeleton) {
    EncodedMotion out;
    out.roots.reserve(poses.size());
    out.frames.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        out.roots.push_back(extract_root_frame(poses[i], skeleton, i > 0 ? &out.roots[i - 1] : nullptr));
        const std::size_t p = i > 0 ? i - 1 : 0;
        out.frames.push_back(encode_agent_frame(poses[i], out.roots[i], poses[p], out.roots[p]));
    }
    return out;
}

std::vector<DecodedFrame> decode_motion(const std::vector<MotionFrame>& frames, const RootFrame& start_root) {
    std::vector<DecodedFrame> out;
    out.reserve(frames.size());
    RootFrame prev = start_root;
    for (const auto& f : frames) {
        out.push_back(decode_agent_frame(f, prev));
        prev = out.back().root;
    }
    return out;
}

std::vector<JointMat3> world_velocities(const std::vector<WorldPose>& poses) {
    std::vector<JointMat3> out;
    out.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
        if (i == 0) {
            out.push_back(JointMat3::Zero(poses[0].positions.rows(), 3));
        } else {
            out.push_back(poses[i].positions - poses[i - 1].positions);
        }
    }
    return out;
}

}  // namespace r2r::motion
