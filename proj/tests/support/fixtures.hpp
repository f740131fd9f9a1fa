#pragma once

#include "spineprog/articulated.hpp"
#include "spineprog/cohort.hpp"
#include "spineprog/se3.hpp"

#include <random>

namespace spineprog::test {

inline constexpr double kPi = 3.14159265358979323846;

inline Mat3 rot_z_deg(double deg) {
    const double r = deg * kPi / 180.0;
    Mat3 m;
    m << std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r), 0, 0, 0, 1;
    return m;
}

inline Mat3 rot_x_deg(double deg) {
    const double r = deg * kPi / 180.0;
    Mat3 m;
    m << 1, 0, 0, 0, std::cos(r), -std::sin(r), 0, std::sin(r), std::cos(r);
    return m;
}

inline Mat3 rot_y_deg(double deg) {
    const double r = deg * kPi / 180.0;
    Mat3 m;
    m << std::cos(r), 0, std::sin(r), 0, 1, 0, -std::sin(r), 0, std::cos(r);
    return m;
}

inline Mat3 random_rotation(std::mt19937_64& rng, double max_angle = kPi - 0.15) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec3 axis(u(rng), u(rng), u(rng));
    while (axis.norm() < 1e-6) axis = Vec3(u(rng), u(rng), u(rng));
    axis.normalize();
    std::uniform_real_distribution<double> ua(0.0, max_angle);
    return rot_exp(axis * ua(rng));
}

/// Straight spine with identity transforms and a simple centered landmark set.
inline ArticulatedSpine identity_spine() {
    ArticulatedSpine s;
    for (int c = 0; c < kNumLevels; ++c) {
        auto& v = s.vertebrae[static_cast<size_t>(c)];
        v.level = level_at_chain(c);
        v.landmarks = {Vec3(13, -8, 4),  Vec3(13, -8, -4), Vec3(-13, -8, 4),
                       Vec3(-13, -8, -4), Vec3(0, 4, 11),  Vec3(0, 4, -11)};
        Vec3 centroid = Vec3::Zero();
        for (const auto& p : v.landmarks) centroid += p;
        centroid /= kLandmarksPerVertebra;
        for (auto& p : v.landmarks) p -= centroid;
        s.relative_transforms[static_cast<size_t>(c)] = RigidTransform::identity();
    }
    return s;
}

/// Random valid spine: bounded relative rotations, ~25 mm segments, noisy
/// centered landmarks.
inline ArticulatedSpine random_spine(std::mt19937_64& rng, double max_rel_angle_rad = 0.25) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ArticulatedSpine s = identity_spine();
    for (int c = 0; c < kNumLevels; ++c) {
        auto& t = s.relative_transforms[static_cast<size_t>(c)];
        Vec3 axis(u(rng), u(rng), u(rng));
        while (axis.norm() < 1e-6) axis = Vec3(u(rng), u(rng), u(rng));
        axis.normalize();
        t.rotation = rot_exp(axis * (max_rel_angle_rad * std::abs(u(rng))));
        t.translation = Vec3(2.0 * u(rng), 2.0 * u(rng), 25.0 + 3.0 * u(rng));
        auto& v = s.vertebrae[static_cast<size_t>(c)];
        for (auto& p : v.landmarks) p += 0.5 * Vec3(u(rng), u(rng), u(rng));
        const Vec3 centroid = v.landmark_centroid();
        for (auto& p : v.landmarks) p -= centroid;
    }
    return s;
}

/// Apply a global rigid transform to a spine (left-multiplies the anchor).
inline ArticulatedSpine transform_spine(const ArticulatedSpine& s, const RigidTransform& g) {
    ArticulatedSpine out = s;
    out.relative_transforms[0] = compose(g, s.relative_transforms[0]);
    return out;
}

/// Small quickly-separable cohort config for model tests.
inline CohortConfig small_cohort_config(int n_patients, std::uint64_t seed) {
    CohortConfig cfg;
    cfg.n_patients = n_patients;
    cfg.seed = seed;
    cfg.visits_min = 3;
    cfg.visits_max = 4;
    return cfg;
}

}  // namespace spineprog::test
