#pragma once

#include "spineprog/types.hpp"

#include <Eigen/Geometry>

namespace spineprog {

/// A proper rigid transform: y = R x + t, with R a right-handed rotation
/// (orthonormal, det +1) and t in millimetres.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    /// Map a point through the transform.
    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Frobenius deviation of R^T R from the identity plus |det - 1|.
double rotation_defect(const Mat3& r);

/// True when rotation_defect is within tol (default 1e-9).
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Nearest rotation to an almost-orthonormal matrix (via SVD, det forced +1).
Mat3 orthonormalize(const Mat3& r);

/// Composition a then b in a's frame: {Ra Rb, Ra tb + ta}.
/// Re-orthonormalizes the product when drift exceeds 1e-12.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Inverse transform: compose(t, invert(t)) = identity.
RigidTransform invert(const RigidTransform& t);

/// Rodrigues exponential: rotation about v/|v| by angle |v|. Series expansion
/// near zero, so rot_exp(0) is exactly the identity.
Mat3 rot_exp(const Vec3& v);

/// Inverse of rot_exp; the returned vector has norm in [0, pi].
/// Angles within 1e-6 of pi are resolved deterministically by largest-diagonal
/// axis extraction; *near_pi (when non-null) flags that case.
Vec3 rot_log(const Mat3& r, bool* near_pi = nullptr);

/// Geodesic distance on the rotation group: |log(r1^T r2)|_F = sqrt(2) * theta,
/// with theta the relative rotation angle.
double geodesic_rotation_distance(const Mat3& r1, const Mat3& r2);

/// Relative rotation angle in radians, computed via atan2 for accuracy at
/// both ends of [0, pi].
double rotation_angle(const Mat3& r);

/// Unit quaternion (w, x, y, z) of a rotation, hemisphere-fixed: w >= 0, and
/// for w == 0 the first nonzero vector component is positive. Deterministic,
/// so equal rotations flatten to bitwise-equal quaternions.
Eigen::Vector4d quaternion_from_rotation(const Mat3& r);

/// Rotation matrix of a quaternion (normalized first, so the result is
/// orthonormal to machine precision).
Mat3 rotation_from_quaternion(const Eigen::Vector4d& wxyz);

}  // namespace spineprog
