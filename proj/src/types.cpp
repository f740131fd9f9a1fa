#include "spineprog/types.hpp"

#include <algorithm>

namespace spineprog {

namespace {

const std::array<std::string, kNumLevels> kLevelNames = {
    "T1", "T2", "T3", "T4", "T5", "T6", "T7", "T8", "T9", "T10", "T11", "T12",
    "L1", "L2", "L3", "L4", "L5"};

}  // namespace

const std::string& level_name(VertebraLevel lv) {
    return kLevelNames.at(static_cast<size_t>(lv));
}

VertebraLevel parse_level(const std::string& name) {
    auto it = std::find(kLevelNames.begin(), kLevelNames.end(), name);
    if (it == kLevelNames.end()) {
        throw ValidationError("unknown vertebra level: " + name);
    }
    return static_cast<VertebraLevel>(it - kLevelNames.begin());
}

const std::string& label_name(ClassLabel l) {
    static const std::array<std::string, 3> names = {"P", "NP", "unknown"};
    return names.at(static_cast<size_t>(l));
}

ClassLabel parse_label(const std::string& name) {
    if (name == "P") return ClassLabel::P;
    if (name == "NP") return ClassLabel::NP;
    if (name == "unknown") return ClassLabel::Unknown;
    throw ValidationError("unknown class label: " + name);
}

const std::string& mode_name(FeatureMode m) {
    static const std::array<std::string, 3> names = {"shape", "poses", "shape_poses"};
    return names.at(static_cast<size_t>(m));
}

FeatureMode parse_mode(const std::string& name) {
    if (name == "shape") return FeatureMode::Shape;
    if (name == "poses") return FeatureMode::Poses;
    if (name == "shape_poses") return FeatureMode::ShapePoses;
    throw ValidationError("unknown feature mode: " + name);
}

}  // namespace spineprog
