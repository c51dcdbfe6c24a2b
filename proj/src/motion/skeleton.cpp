#include "r2r/motion/skeleton.hpp"

#include "r2r/common/error.hpp"

#include <set>

namespace r2r::motion {

void Skeleton::validate() const {
    const int j = joint_count();
    auto fail = [](const std::string& what) { throw DataError(DataErrc::invalid_argument, "skeleton: " + what); };
    if (j <= 0) fail("no joints");
    if (static_cast<int>(offsets.size()) != j) fail("offset count differs from joint count");
    if (!names.empty() && static_cast<int>(names.size()) != j) fail("name count differs from joint count");

    int roots = 0;
    for (int i = 0; i < j; ++i) {
        if (parents[i] == kNoParent) {
            ++roots;
        } else if (parents[i] < 0 || parents[i] >= j || parents[i] == i) {
            fail("parent index out of range at joint " + std::to_string(i));
        }
    }
    if (roots != 1) fail("expected exactly one root");
    if (parents[0] != kNoParent) fail("joint 0 must be the root");
    // Every joint must reach the root without revisiting a joint.
    for (int i = 0; i < j; ++i) {
        int cur = i;
        int steps = 0;
        while (cur != kNoParent) {
            cur = parents[cur];
            if (++steps > j) fail("cycle in parent indices");
        }
    }

    std::vector<int> roles = foot_joints;
    roles.push_back(head);
    roles.push_back(left_hand);
    roles.push_back(right_hand);
    std::set<int> seen;
    for (int r : roles) {
        if (r < 0 || r >= j) fail("role joint index out of range");
        if (!seen.insert(r).second) fail("role joints must be distinct");
    }
    for (int s : {left_shoulder, right_shoulder})
        if (s != -1 && (s < 0 || s >= j)) fail("shoulder index out of range");
}

Skeleton Skeleton::smpl_like() {
    Skeleton s;
    s.names = {"pelvis",     "left_hip",       "right_hip",     "spine1",     "left_knee",   "right_knee",
               "spine2",     "left_ankle",     "right_ankle",   "spine3",     "left_foot",   "right_foot",
               "neck",       "left_collar",    "right_collar",  "head",       "left_shoulder", "right_shoulder",
               "left_elbow", "right_elbow",    "left_wrist",    "right_wrist", "left_hand",   "right_hand"};
    s.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
    s.offsets = {
        {0.0, 0.0, 0.0},     {0.07, -0.09, 0.0},   {-0.07, -0.09, 0.0},  {0.0, 0.11, -0.01},
        {0.03, -0.38, 0.0},  {-0.03, -0.38, 0.0},  {0.0, 0.13, 0.0},     {0.0, -0.40, -0.03},
        {0.0, -0.40, -0.03}, {0.0, 0.05, 0.02},    {0.02, -0.06, 0.12},  {-0.02, -0.06, 0.12},
        {0.0, 0.21, -0.03},  {0.07, 0.11, -0.02},  {-0.07, 0.11, -0.02}, {0.0, 0.09, 0.05},
        {0.11, 0.04, -0.01}, {-0.11, 0.04, -0.01}, {0.26, 0.0, -0.02},   {-0.26, 0.0, -0.02},
        {0.25, 0.0, 0.0},    {-0.25, 0.0, 0.0},    {0.08, 0.0, 0.0},     {-0.08, 0.0, 0.0},
    };
    s.foot_joints = {10, 11};
    s.head = 15;
    s.left_hand = 22;
    s.right_hand = 23;
    s.left_shoulder = 16;
    s.right_shoulder = 17;
    return s;
}

bool Skeleton::operator==(const Skeleton& o) const {
    if (parents != o.parents || names != o.names || foot_joints != o.foot_joints || head != o.head ||
        left_hand != o.left_hand || right_hand != o.right_hand || left_shoulder != o.left_shoulder ||
        right_shoulder != o.right_shoulder || offsets.size() != o.offsets.size())
        return false;
    for (std::size_t i = 0; i < offsets.size(); ++i)
        if (offsets[i] != o.offsets[i]) return false;
    return true;
}

}  // namespace r2r::motion
