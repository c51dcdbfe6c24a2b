#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace r2r::motion {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Rot6 = Eigen::Matrix<double, 6, 1>;

/// 6D rotation = first two columns of the matrix, stacked (c0, c1).
Rot6 matrix_to_rot6d(const Mat3& m);

/// Gram-Schmidt reconstruction. Always returns a proper rotation for
/// non-degenerate input (the two 3-vectors not parallel, neither zero).
Mat3 rot6d_to_matrix(const Rot6& v);

/// Rotation about +Y taking +Z to (sin(yaw), 0, cos(yaw)).
Mat3 yaw_matrix(double yaw);

/// Geodesic angle between two rotations, radians in [0, pi].
double geodesic_angle(const Mat3& a, const Mat3& b);

/// Projects onto SO(3) through the 6D parameterisation.
inline Mat3 orthonormalize(const Mat3& m) { return rot6d_to_matrix(matrix_to_rot6d(m)); }

}  // namespace r2r::motion
