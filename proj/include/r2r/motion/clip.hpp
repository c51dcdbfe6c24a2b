#pragma once

#include "r2r/motion/pose.hpp"

#include <vector>

namespace r2r::motion {

struct MotionClip {
    Skeleton skeleton;
    double fps = 30.0;
    std::vector<WorldPose> frames;

    std::size_t length() const { return frames.size(); }
    /// Throws DataError if fps <= 0, the clip is empty, or a frame's joint
    /// count disagrees with the skeleton.
    void validate() const;
};

}  // namespace r2r::motion
