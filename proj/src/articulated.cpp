#include "spineprog/articulated.hpp"

#include <cmath>

namespace spineprog {

Vec3 VertebraModel::landmark_centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : landmarks) c += p;
    return c / static_cast<double>(kLandmarksPerVertebra);
}

void validate_spine(const ArticulatedSpine& spine) {
    for (int c = 0; c < kNumLevels; ++c) {
        const auto& v = spine.vertebrae[static_cast<size_t>(c)];
        if (v.level != level_at_chain(c)) {
            throw ValidationError("vertebra at chain position " + std::to_string(c) +
                                  " is " + level_name(v.level) + ", expected " +
                                  level_name(level_at_chain(c)));
        }
        if (v.landmark_centroid().norm() > 1e-6) {
            throw ValidationError("landmarks of " + level_name(v.level) +
                                  " are not centered on the local origin");
        }
        const auto& t = spine.relative_transforms[static_cast<size_t>(c)];
        if (!is_rotation(t.rotation)) {
            throw ValidationError("relative rotation of " + level_name(v.level) +
                                  " is not orthonormal");
        }
        if (!t.translation.allFinite()) {
            throw ValidationError("relative translation of " + level_name(v.level) +
                                  " is not finite");
        }
    }
}

std::array<RigidTransform, kNumLevels> to_absolute(const ArticulatedSpine& spine) {
    std::array<RigidTransform, kNumLevels> abs;
    abs[0] = spine.relative_transforms[0];
    for (int c = 1; c < kNumLevels; ++c) {
        abs[static_cast<size_t>(c)] =
            compose(abs[static_cast<size_t>(c - 1)], spine.relative_transforms[static_cast<size_t>(c)]);
    }
    return abs;
}

std::array<RigidTransform, kNumLevels> to_relative(
    const std::array<RigidTransform, kNumLevels>& absolute) {
    std::array<RigidTransform, kNumLevels> rel;
    rel[0] = absolute[0];
    for (int c = 1; c < kNumLevels; ++c) {
        rel[static_cast<size_t>(c)] =
            compose(invert(absolute[static_cast<size_t>(c - 1)]), absolute[static_cast<size_t>(c)]);
    }
    return rel;
}

std::array<Vec3, kLandmarksPerVertebra> world_landmarks(const VertebraModel& vertebra,
                                                        const RigidTransform& absolute_pose) {
    std::array<Vec3, kLandmarksPerVertebra> out;
    for (int l = 0; l < kLandmarksPerVertebra; ++l) {
        out[static_cast<size_t>(l)] = absolute_pose.apply(vertebra.landmarks[static_cast<size_t>(l)]);
    }
    return out;
}

FeatureVector to_feature_vector(const ArticulatedSpine& spine, FeatureMode mode,
                                ClassLabel label, const std::string& patient_id,
                                double visit_time_months) {
    FeatureVector fv;
    fv.mode = mode;
    fv.label = label;
    fv.patient_id = patient_id;
    fv.visit_time_months = visit_time_months;
    fv.values.resize(mode_dimension(mode));

    const auto abs = to_absolute(spine);
    const int block = mode_block_size(mode);
    for (int c = 0; c < kNumLevels; ++c) {
        int off = c * block;
        if (mode_has_poses(mode)) {
            const Eigen::Vector4d q =
                quaternion_from_rotation(abs[static_cast<size_t>(c)].rotation);
            fv.values.segment<4>(off) = q;
            fv.values.segment<3>(off + 4) = abs[static_cast<size_t>(c)].translation;
            off += 7;
        }
        if (mode_has_shape(mode)) {
            const auto& lms = spine.vertebrae[static_cast<size_t>(c)].landmarks;
            for (int l = 0; l < kLandmarksPerVertebra; ++l) {
                fv.values.segment<3>(off + 3 * l) = lms[static_cast<size_t>(l)];
            }
        }
    }
    return fv;
}

std::array<RigidTransform, kNumLevels> poses_from_feature_vector(const FeatureVector& fv) {
    if (!mode_has_poses(fv.mode)) {
        throw ValidationError("feature vector has no pose blocks");
    }
    if (fv.values.size() != mode_dimension(fv.mode)) {
        throw ValidationError("feature vector has wrong dimension for its mode");
    }
    std::array<RigidTransform, kNumLevels> abs;
    const int block = mode_block_size(fv.mode);
    for (int c = 0; c < kNumLevels; ++c) {
        const int off = c * block;
        abs[static_cast<size_t>(c)].rotation =
            rotation_from_quaternion(fv.values.segment<4>(off));
        abs[static_cast<size_t>(c)].translation = fv.values.segment<3>(off + 4);
    }
    return abs;
}

ArticulatedSpine from_feature_vector(const FeatureVector& fv) {
    if (fv.values.size() != mode_dimension(fv.mode)) {
        throw ValidationError("feature vector has wrong dimension for its mode");
    }
    ArticulatedSpine spine;
    std::array<RigidTransform, kNumLevels> abs;
    for (int c = 0; c < kNumLevels; ++c) abs[static_cast<size_t>(c)] = RigidTransform::identity();
    if (mode_has_poses(fv.mode)) {
        abs = poses_from_feature_vector(fv);
    }

    const int block = mode_block_size(fv.mode);
    const int shape_off = mode_has_poses(fv.mode) ? 7 : 0;
    for (int c = 0; c < kNumLevels; ++c) {
        auto& v = spine.vertebrae[static_cast<size_t>(c)];
        v.level = level_at_chain(c);
        if (mode_has_shape(fv.mode)) {
            const int off = c * block + shape_off;
            for (int l = 0; l < kLandmarksPerVertebra; ++l) {
                v.landmarks[static_cast<size_t>(l)] = fv.values.segment<3>(off + 3 * l);
            }
            // Reconstructed blocks can drift off-centroid; re-center locally
            // and push the offset into the frame so world positions hold.
            const Vec3 centroid = v.landmark_centroid();
            if (centroid.norm() > 0.0) {
                for (auto& p : v.landmarks) p -= centroid;
                abs[static_cast<size_t>(c)].translation +=
                    abs[static_cast<size_t>(c)].rotation * centroid;
            }
        } else {
            for (auto& p : v.landmarks) p = Vec3::Zero();
        }
    }
    spine.relative_transforms = to_relative(abs);
    return spine;
}

PoseDecomposition decompose_poses(const FeatureVector& fv) {
    PoseDecomposition d;
    const auto abs = poses_from_feature_vector(fv);
    for (int c = 0; c < kNumLevels; ++c) {
        d.rotations[static_cast<size_t>(c)] = abs[static_cast<size_t>(c)].rotation;
        d.translations[static_cast<size_t>(c)] = abs[static_cast<size_t>(c)].translation;
    }
    return d;
}

double articulated_distance(const PoseDecomposition& a, const PoseDecomposition& b) {
    double sum = 0.0;
    for (int c = 0; c < kNumLevels; ++c) {
        sum += (a.translations[static_cast<size_t>(c)] - b.translations[static_cast<size_t>(c)]).norm();
        sum += geodesic_rotation_distance(a.rotations[static_cast<size_t>(c)],
                                          b.rotations[static_cast<size_t>(c)]);
    }
    return sum;
}

double articulated_distance(const FeatureVector& y1, const FeatureVector& y2) {
    if (y1.mode != y2.mode) {
        throw ValidationError("articulated_distance: feature modes differ (" +
                              mode_name(y1.mode) + " vs " + mode_name(y2.mode) + ")");
    }
    if (y1.mode == FeatureMode::Shape) {
        return (y1.values - y2.values).norm();
    }
    return articulated_distance(decompose_poses(y1), decompose_poses(y2));
}

MatX pairwise_distances(const std::vector<FeatureVector>& features) {
    const int n = static_cast<int>(features.size());
    MatX d = MatX::Zero(n, n);
    if (n == 0) return d;
    if (features[0].mode == FeatureMode::Shape) {
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double v = articulated_distance(features[static_cast<size_t>(i)],
                                                      features[static_cast<size_t>(j)]);
                d(i, j) = v;
                d(j, i) = v;
            }
        }
        return d;
    }
    std::vector<PoseDecomposition> dec;
    dec.reserve(static_cast<size_t>(n));
    for (const auto& f : features) dec.push_back(decompose_poses(f));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double v =
                articulated_distance(dec[static_cast<size_t>(i)], dec[static_cast<size_t>(j)]);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

}  // namespace spineprog
