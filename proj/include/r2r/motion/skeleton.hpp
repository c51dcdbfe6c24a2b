#pragma once

#include "r2r/motion/rotation.hpp"

#include <string>
#include <vector>

namespace r2r::motion {

inline constexpr int kNoParent = -1;

/// Kinematic tree with the joint roles the engine needs (feet for contact,
/// head and hands for sparse control, shoulders for the facing fallback).
/// Y is up; the rest pose faces +Z.
struct Skeleton {
    std::vector<int> parents;
    std::vector<Vec3> offsets;
    std::vector<std::string> names;
    std::vector<int> foot_joints;
    int head = -1;
    int left_hand = -1;
    int right_hand = -1;
    int left_shoulder = -1;
    int right_shoulder = -1;

    int joint_count() const { return static_cast<int>(parents.size()); }

    /// Throws DataError(invalid_argument) if the tree or roles are inconsistent.
    void validate() const;

    /// 24-joint SMPL-ordered skeleton with approximate adult proportions.
    static Skeleton smpl_like();

    bool operator==(const Skeleton& other) const;
};

}  // namespace r2r::motion
