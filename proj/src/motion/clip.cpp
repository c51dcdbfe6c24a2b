#include "r2r/motion/clip.hpp"

#include "r2r/common/error.hpp"

namespace r2r::motion {

void MotionClip::validate() const {
    skeleton.validate();
    if (!(fps > 0.0)) throw DataError(DataErrc::invalid_argument, "clip fps must be positive");
    if (frames.empty()) throw DataError(DataErrc::invalid_argument, "clip has no frames");
    const auto j = static_cast<std::size_t>(skeleton.joint_count());
    for (const auto& f : frames) {
        if (f.rotations.size() != j || static_cast<std::size_t>(f.positions.rows()) != j)
            throw DataError(DataErrc::malformed_body, "frame joint count differs from skeleton");
    }
}

}  // namespace r2r::motion
