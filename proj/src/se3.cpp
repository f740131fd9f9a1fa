#include "spineprog/se3.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace spineprog {

namespace {
constexpr double kPi = 3.14159265358979323846;

Mat3 skew(const Vec3& v) {
    Mat3 s;
    s << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
        -v.y(), v.x(), 0;
    return s;
}
}  // namespace

double rotation_defect(const Mat3& r) {
    double ortho = (r.transpose() * r - Mat3::Identity()).norm();
    return ortho + std::abs(r.determinant() - 1.0);
}

bool is_rotation(const Mat3& r, double tol) {
    return rotation_defect(r) <= tol;
}

Mat3 orthonormalize(const Mat3& r) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Mat3 out = u * v.transpose();
    if (out.determinant() < 0) {
        u.col(2) *= -1.0;
        out = u * v.transpose();
    }
    return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    RigidTransform out;
    out.rotation = a.rotation * b.rotation;
    out.translation = a.rotation * b.translation + a.translation;
    if (rotation_defect(out.rotation) > 1e-12) {
        out.rotation = orthonormalize(out.rotation);
    }
    return out;
}

RigidTransform invert(const RigidTransform& t) {
    RigidTransform out;
    out.rotation = t.rotation.transpose();
    out.translation = -(out.rotation * t.translation);
    return out;
}

Mat3 rot_exp(const Vec3& v) {
    const double theta2 = v.squaredNorm();
    const double theta = std::sqrt(theta2);
    double a, b;  // sin(t)/t and (1-cos(t))/t^2
    if (theta < 1e-4) {
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0;
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0;
    } else {
        a = std::sin(theta) / theta;
        b = (1.0 - std::cos(theta)) / theta2;
    }
    const Mat3 k = skew(v);
    return Mat3::Identity() + a * k + b * (k * k);
}

double rotation_angle(const Mat3& r) {
    // sin from the skew part, cos from the trace; atan2 is accurate at both
    // ends of [0, pi], where acos of the trace alone loses digits.
    const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    const double s = 0.5 * w.norm();
    const double c = 0.5 * (r.trace() - 1.0);
    return std::atan2(s, c);
}

Vec3 rot_log(const Mat3& r, bool* near_pi) {
    if (near_pi) *near_pi = false;
    const double theta = rotation_angle(r);
    if (theta < 1e-12) {
        return Vec3::Zero();
    }
    if (theta > kPi - 1e-6) {
        // Antipodal neighbourhood: the skew part vanishes, extract the axis
        // from B = (R + I)/2 ~= vv^T using its largest diagonal entry. The
        // axis sign is fixed by making that component positive.
        if (near_pi) *near_pi = true;
        const Mat3 b = 0.5 * (r + Mat3::Identity());
        int k = 0;
        b.diagonal().maxCoeff(&k);
        Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
        axis.normalize();
        if (axis(k) < 0) axis = -axis;
        return theta * axis;
    }
    const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
    return (theta / (2.0 * std::sin(theta))) * w;
}

double geodesic_rotation_distance(const Mat3& r1, const Mat3& r2) {
    // trace(r1^T r2) is the elementwise dot product; no full product needed.
    const double tr = (r1.array() * r2.array()).sum();
    const Mat3 rel = r1.transpose() * r2;
    const Vec3 w(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
    const double s = 0.5 * w.norm();
    const double c = 0.5 * (tr - 1.0);
    return std::sqrt(2.0) * std::atan2(s, c);
}

Eigen::Vector4d quaternion_from_rotation(const Mat3& r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    Eigen::Vector4d wxyz(q.w(), q.x(), q.y(), q.z());
    if (wxyz(0) < 0) {
        wxyz = -wxyz;
    } else if (wxyz(0) == 0.0) {
        for (int i = 1; i < 4; ++i) {
            if (wxyz(i) != 0.0) {
                if (wxyz(i) < 0) wxyz = -wxyz;
                break;
            }
        }
    }
    return wxyz;
}

Mat3 rotation_from_quaternion(const Eigen::Vector4d& wxyz) {
    Eigen::Quaterniond q(wxyz(0), wxyz(1), wxyz(2), wxyz(3));
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw ValidationError("quaternion has zero or non-finite norm");
    }
    q.normalize();
    return q.toRotationMatrix();
}

}  // namespace spineprog
