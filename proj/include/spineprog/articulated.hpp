#pragma once

#include "spineprog/se3.hpp"
#include "spineprog/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace spineprog {

/// One vertebra: its level and six anatomical landmarks in the local frame
/// (origin at the landmark centroid). Canonical landmark order: pedicle
/// left-sup, left-inf, right-sup, right-inf, endplate-sup-center,
/// endplate-inf-center.
struct VertebraModel {
    VertebraLevel level = VertebraLevel::L5;
    std::array<Vec3, kLandmarksPerVertebra> landmarks{};

    Vec3 landmark_centroid() const;
};

/// Articulated spine: 17 vertebrae in chain order (L5 first, T1 last) and the
/// matching relative transforms. relative_transforms[0] anchors L5 to the
/// world; relative_transforms[c] maps chain level c into level c-1's frame.
struct ArticulatedSpine {
    std::array<VertebraModel, kNumLevels> vertebrae{};
    std::array<RigidTransform, kNumLevels> relative_transforms{};
};

/// Checks level ordering, landmark centering and rotation validity.
/// Throws ValidationError with the first offending field.
void validate_spine(const ArticulatedSpine& spine);

/// Absolute pose per level: absolute[c] = T_0 o T_1 o ... o T_c.
std::array<RigidTransform, kNumLevels> to_absolute(const ArticulatedSpine& spine);

/// Relative transforms recovered from absolute poses (inverse of to_absolute).
std::array<RigidTransform, kNumLevels> to_relative(
    const std::array<RigidTransform, kNumLevels>& absolute);

/// World-frame positions of one vertebra's landmarks.
std::array<Vec3, kLandmarksPerVertebra> world_landmarks(
    const VertebraModel& vertebra, const RigidTransform& absolute_pose);

// ---------------------------------------------------------------------------
// Feature vectors
// ---------------------------------------------------------------------------

/// Fixed-length flattening of a spine with its label and visit time.
/// Per level, in chain order: [quaternion(w,x,y,z), translation] for pose
/// modes, then the 18 landmark coordinates for shape modes.
struct FeatureVector {
    VecX values;
    FeatureMode mode = FeatureMode::ShapePoses;
    ClassLabel label = ClassLabel::Unknown;
    std::string patient_id;
    double visit_time_months = 0.0;
};

FeatureVector to_feature_vector(const ArticulatedSpine& spine, FeatureMode mode,
                                ClassLabel label = ClassLabel::Unknown,
                                const std::string& patient_id = {},
                                double visit_time_months = 0.0);

/// Rebuild a spine from a feature vector. Pose modes restore absolute poses
/// (quaternions renormalized, so rotations are exactly orthonormal); the
/// shape-only mode leaves all transforms at identity. Landmark blocks are
/// re-centered onto the local origin with the centroid offset folded into the
/// absolute translation, so world-frame landmark positions are preserved.
ArticulatedSpine from_feature_vector(const FeatureVector& fv);

/// Absolute poses decoded straight from a pose-mode feature vector.
std::array<RigidTransform, kNumLevels> poses_from_feature_vector(const FeatureVector& fv);

/// Articulated deviation metric: per level, L2 distance of absolute
/// translations plus geodesic rotation distance, summed over the chain.
/// Shape-only vectors fall back to plain Euclidean distance on the landmark
/// coordinates. Throws ValidationError on mode mismatch.
double articulated_distance(const FeatureVector& y1, const FeatureVector& y2);

/// Cached per-level decomposition of a pose-mode feature vector, for bulk
/// pairwise distance computations.
struct PoseDecomposition {
    std::array<Mat3, kNumLevels> rotations;
    std::array<Vec3, kNumLevels> translations;
};

PoseDecomposition decompose_poses(const FeatureVector& fv);

double articulated_distance(const PoseDecomposition& a, const PoseDecomposition& b);

/// Pairwise distance matrix under the metric appropriate for the mode.
MatX pairwise_distances(const std::vector<FeatureVector>& features);

}  // namespace spineprog
