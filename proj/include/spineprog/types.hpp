#pragma once

#include <Eigen/Core>

#include <array>
#include <stdexcept>
#include <string>

namespace spineprog {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Raised on malformed inputs, files or configurations. CLI maps it to exit 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised on numerical failure (non-finite values, objective decrease,
/// extrapolation guards). CLI maps it to exit 2.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Vertebral levels
// ---------------------------------------------------------------------------

inline constexpr int kNumLevels = 17;
inline constexpr int kLandmarksPerVertebra = 6;

enum class VertebraLevel : int {
    T1 = 0, T2, T3, T4, T5, T6, T7, T8, T9, T10, T11, T12,
    L1, L2, L3, L4, L5
};

/// Chain position of a level: 0 = L5 (anchored to the world), 16 = T1.
/// Spines store vertebrae and transforms in chain order, inferior to superior.
inline constexpr int chain_index(VertebraLevel lv) {
    return kNumLevels - 1 - static_cast<int>(lv);
}

inline constexpr VertebraLevel level_at_chain(int chain) {
    return static_cast<VertebraLevel>(kNumLevels - 1 - chain);
}

const std::string& level_name(VertebraLevel lv);
VertebraLevel parse_level(const std::string& name);

// ---------------------------------------------------------------------------
// Labels and feature modes
// ---------------------------------------------------------------------------

enum class ClassLabel { P, NP, Unknown };

const std::string& label_name(ClassLabel l);
ClassLabel parse_label(const std::string& name);

/// What a flattened feature vector carries per level.
enum class FeatureMode { Shape, Poses, ShapePoses };

const std::string& mode_name(FeatureMode m);
FeatureMode parse_mode(const std::string& name);

/// Per-level block width of a feature mode.
inline constexpr int mode_block_size(FeatureMode m) {
    switch (m) {
        case FeatureMode::Shape: return 3 * kLandmarksPerVertebra;       // 18
        case FeatureMode::Poses: return 7;                               // quat + translation
        case FeatureMode::ShapePoses: return 7 + 3 * kLandmarksPerVertebra;  // 25
    }
    return 0;
}

/// Total feature dimension of a mode (306 / 119 / 425).
inline constexpr int mode_dimension(FeatureMode m) {
    return kNumLevels * mode_block_size(m);
}

inline bool mode_has_poses(FeatureMode m) { return m != FeatureMode::Shape; }
inline bool mode_has_shape(FeatureMode m) { return m != FeatureMode::Poses; }

}  // namespace spineprog
