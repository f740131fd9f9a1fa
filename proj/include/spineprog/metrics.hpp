#pragma once

#include "spineprog/articulated.hpp"
#include "spineprog/types.hpp"

#include <vector>

namespace spineprog {

/// Clinical indices of a spine. World axes: x lateral (frontal offsets),
/// y anterior-posterior (sagittal offsets), z vertical.
struct ClinicalParameters {
    double cobb_pt_deg = 0.0;   // proximal thoracic, T1-T5
    double cobb_mt_deg = 0.0;   // main thoracic, T5-T12
    double cobb_l_deg = 0.0;    // lumbar, T12-L5
    double kyphosis_t4_t12_deg = 0.0;
    double lordosis_l1_l5_deg = 0.0;
    double pmc_pt_deg = 0.0;    // plane-of-maximum-curvature azimuth per region
    double pmc_mt_deg = 0.0;
    double pmc_l_deg = 0.0;
    double apex_axial_rotation_deg = 0.0;  // main-thoracic apex
    double frontal_balance_mm = 0.0;       // T1 minus L5 center, x
    double sagittal_balance_mm = 0.0;      // T1 minus L5 center, y

    double main_cobb_deg() const;
};

/// Per-vertebra frontal tilt: signed frontal-plane angle of the projected
/// local transverse (x) axis, degrees. Exposed for tests and the generator's
/// cross-checks.
std::array<double, kNumLevels> frontal_tilts_deg(
    const std::array<RigidTransform, kNumLevels>& absolute);

ClinicalParameters clinical_parameters(const ArticulatedSpine& spine);

/// Geometric errors between a predicted and a ground-truth spine:
/// AE   mean relative-rotation angle over levels (degrees),
/// MOD  max translation difference over levels (mm),
/// MCD  mean landmark-centroid distance over levels (mm),
/// plus the RMS over all 102 world-frame landmarks (mm).
struct PoseErrors {
    double ae_deg = 0.0;
    double mod_mm = 0.0;
    double mcd_mm = 0.0;
    double landmark_rms_mm = 0.0;
};

PoseErrors pose_errors(const ArticulatedSpine& pred, const ArticulatedSpine& truth);

// ---------------------------------------------------------------------------
// Classification scoring
// ---------------------------------------------------------------------------

struct FoldResult {
    int fold = 0;
    int n_cases = 0;
    double accuracy_pct = 0.0;
};

/// Confusion-matrix summary with an ROC swept over score thresholds.
/// P is the positive class; the operating point uses score >= 0.5.
struct ClassificationReport {
    double accuracy_pct = 0.0;
    double sensitivity_pct = 0.0;
    double specificity_pct = 0.0;
    double auc = 0.0;
    std::vector<std::pair<double, double>> roc_points;  // (fpr, tpr), fpr ascending
    std::vector<FoldResult> per_fold;
};

/// Scores are P-class probabilities in [0, 1]. threshold_grid may be empty,
/// in which case the unique scores are used. Throws ValidationError when
/// truths contain a single class (AUC undefined).
ClassificationReport score_classification(const std::vector<ClassLabel>& truths,
                                          const std::vector<double>& scores,
                                          std::vector<double> threshold_grid = {});

}  // namespace spineprog
