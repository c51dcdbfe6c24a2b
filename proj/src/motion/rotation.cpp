#include "r2r/motion/rotation.hpp"

#include "r2r/common/error.hpp"

#include <algorithm>
#include <cmath>

namespace r2r::motion {

Rot6 matrix_to_rot6d(const Mat3& m) {
    Rot6 v;
    v.head<3>() = m.col(0);
    v.tail<3>() = m.col(1);
    return v;
}

Mat3 rot6d_to_matrix(const Rot6& v) {
    const Vec3 a1 = v.head<3>();
    const Vec3 a2 = v.tail<3>();
    const double n1 = a1.norm();
    if (!(n1 > 1e-12)) throw NumericError("degenerate 6D rotation (zero first column)");
    const Vec3 b1 = a1 / n1;
    const Vec3 u2 = a2 - b1.dot(a2) * b1;
    const double n2 = u2.norm();
    if (!(n2 > 1e-12)) throw NumericError("degenerate 6D rotation (parallel columns)");
    const Vec3 b2 = u2 / n2;
    Mat3 m;
    m.col(0) = b1;
    m.col(1) = b2;
    m.col(2) = b1.cross(b2);
    return m;
}

Mat3 yaw_matrix(double yaw) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Mat3 m;
    m << c, 0.0, s,  //
        0.0, 1.0, 0.0,  //
        -s, 0.0, c;
    return m;
}

double geodesic_angle(const Mat3& a, const Mat3& b) {
    const Mat3 r = a.transpose() * b;
    const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
    return std::acos(c);
}

}  // namespace r2r::motion
