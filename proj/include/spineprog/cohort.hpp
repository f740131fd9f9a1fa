#pragma once

#include "spineprog/articulated.hpp"
#include "spineprog/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace spineprog {

/// Knobs of the synthetic longitudinal cohort generator.
struct CohortConfig {
    int n_patients = 120;
    double fraction_progressive = 0.45;
    int visits_min = 3;                     // nominal schedule 0, 12, 24, ... months
    int visits_max = 4;
    double visit_jitter_months = 1.0;       // applied to every non-baseline visit
    double baseline_cobb_lo_deg = 15.0;
    double baseline_cobb_hi_deg = 32.0;
    double rate_lo_deg_per_year = 7.0;      // progressive class
    double rate_hi_deg_per_year = 13.0;
    double np_drift_max_deg = 4.0;          // must stay <= 6 so labels hold
    double landmark_noise_mm = 0.6;
    std::array<double, 5> deformity_class_mix = {0.10, 0.30, 0.25, 0.20, 0.15};
    std::uint64_t seed = 1;
};

struct Visit {
    double time_months = 0.0;
    ArticulatedSpine spine;
    double true_main_cobb_deg = 0.0;  // analytic curve amplitude at this visit
};

struct PatientRecord {
    std::string patient_id;
    ClassLabel true_label = ClassLabel::NP;
    double flexibility_ratio = 0.5;   // C_i, in [0.2, 0.8]
    int deformity_class = 1;          // 1..5
    double baseline_cobb_deg = 0.0;
    double rate_deg_per_year = 0.0;   // signed drift rate for NP patients
    std::vector<Visit> visits;        // strictly increasing, visits[0] at t = 0
};

struct Cohort {
    CohortConfig config;
    std::vector<PatientRecord> patients;
};

/// Deterministic given config.seed; per-patient streams are derived from the
/// seed and patient index, so any parallel schedule reproduces the serial
/// output. Progressive patients gain > 6 degrees of main Cobb between first
/// and last visit, non-progressive ones drift by at most np_drift_max_deg.
/// Throws ValidationError on degenerate configurations.
Cohort generate_cohort(const CohortConfig& config);

/// P when the main Cobb angle grew by strictly more than 6 degrees between
/// the two spines, NP otherwise.
ClassLabel label_progression(const ArticulatedSpine& baseline, const ArticulatedSpine& last);

/// Feature vectors of every visit in the cohort, labelled with the patient's
/// class, in patient-major visit order.
std::vector<FeatureVector> cohort_features(const Cohort& cohort, FeatureMode mode);

}  // namespace spineprog
