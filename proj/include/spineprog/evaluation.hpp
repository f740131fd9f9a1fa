#pragma once

#include "spineprog/cohort.hpp"
#include "spineprog/dpllvm.hpp"
#include "spineprog/metrics.hpp"
#include "spineprog/transport.hpp"

#include <cstdint>
#include <vector>

namespace spineprog {

struct EvaluationConfig {
    int k_folds = 9;
    FeatureMode mode = FeatureMode::ShapePoses;
    Hyperparams hyper;
    int graph_k = 10;
    FitCurveOptions curve;
    std::uint64_t seed = 1;
    bool evaluate_prediction = true;   // progressive follow-up forecasting
    double prediction_bin_lo_months = 18.0;  // follow-ups eligible as targets
};

/// Per-patient prediction errors of one held-out forecast.
struct PredictionCase {
    std::string patient_id;
    double target_time_months = 0.0;
    double cobb_error_deg = 0.0;        // |predicted - true| main Cobb at the target
    double baseline_rms_mm = 0.0;       // prediction at t0 vs input baseline
    double landmark_rms_mm = 0.0;       // prediction at target vs true spine
    bool clamped = false;
};

struct PredictionSummary {
    std::vector<PredictionCase> cases;
    double cobb_error_mean_deg = 0.0;
    double cobb_error_std_deg = 0.0;
    double cobb_within_5deg_fraction = 0.0;
    double baseline_rms_median_mm = 0.0;
    double landmark_rms_mean_mm = 0.0;
    double self_recon_rms_median_mm = 0.0;  // median over folds
};

struct EvaluationReport {
    ClassificationReport classification;
    PredictionSummary prediction;
    std::vector<int> fold_of_patient;   // fold id per cohort patient
};

/// Patient-level k-fold cross-validation. Folds are a seeded random partition
/// of patients; all visits of a patient stay in one fold. Each round trains
/// the manifold on the remaining folds, classifies the held-out baselines via
/// the out-of-sample posterior, and (optionally) forecasts held-out
/// progressive patients at their latest eligible follow-up.
EvaluationReport kfold_evaluate(const Cohort& cohort, const EvaluationConfig& config);

}  // namespace spineprog
