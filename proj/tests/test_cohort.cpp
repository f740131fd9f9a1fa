#include <doctest.h>

#include "spineprog/cohort.hpp"
#include "spineprog/metrics.hpp"
#include "support/fixtures.hpp"

using namespace spineprog;
using namespace spineprog::test;

TEST_CASE("generation is deterministic given the seed") {
    CohortConfig cfg = small_cohort_config(6, 42);
    const Cohort a = generate_cohort(cfg);
    const Cohort b = generate_cohort(cfg);
    REQUIRE(a.patients.size() == b.patients.size());
    for (size_t p = 0; p < a.patients.size(); ++p) {
        CHECK(a.patients[p].flexibility_ratio == b.patients[p].flexibility_ratio);
        REQUIRE(a.patients[p].visits.size() == b.patients[p].visits.size());
        for (size_t v = 0; v < a.patients[p].visits.size(); ++v) {
            CHECK(a.patients[p].visits[v].time_months == b.patients[p].visits[v].time_months);
            const FeatureVector fa =
                to_feature_vector(a.patients[p].visits[v].spine, FeatureMode::ShapePoses);
            const FeatureVector fb =
                to_feature_vector(b.patients[p].visits[v].spine, FeatureMode::ShapePoses);
            CHECK((fa.values - fb.values).norm() == 0.0);  // bitwise identical
        }
    }
}

TEST_CASE("generated spines satisfy the articulated invariants") {
    const Cohort cohort = generate_cohort(small_cohort_config(10, 3));
    for (const auto& pat : cohort.patients) {
        CHECK(pat.visits.front().time_months == 0.0);
        for (size_t v = 0; v < pat.visits.size(); ++v) {
            validate_spine(pat.visits[v].spine);
            if (v > 0) CHECK(pat.visits[v].time_months > pat.visits[v - 1].time_months);
        }
        CHECK(pat.flexibility_ratio >= 0.2);
        CHECK(pat.flexibility_ratio <= 0.8);
    }
}

TEST_CASE("programmed Cobb is measured within a degree on single curves") {
    CohortConfig cfg = small_cohort_config(16, 9);
    cfg.deformity_class_mix = {0.0, 1.0, 0.0, 0.0, 0.0};  // right thoracic only
    cfg.landmark_noise_mm = 0.0;
    const Cohort cohort = generate_cohort(cfg);
    for (const auto& pat : cohort.patients) {
        for (const auto& visit : pat.visits) {
            const double measured = clinical_parameters(visit.spine).main_cobb_deg();
            CHECK(std::abs(measured - visit.true_main_cobb_deg) < 1.0);
        }
    }
}

TEST_CASE("progressive deltas exceed six degrees; all-progressive config") {
    CohortConfig cfg = small_cohort_config(12, 5);
    cfg.fraction_progressive = 1.0;
    cfg.rate_lo_deg_per_year = 8.0;
    cfg.rate_hi_deg_per_year = 12.0;
    const Cohort cohort = generate_cohort(cfg);
    for (const auto& pat : cohort.patients) {
        CHECK(pat.true_label == ClassLabel::P);
        const double delta = clinical_parameters(pat.visits.back().spine).main_cobb_deg() -
                             clinical_parameters(pat.visits.front().spine).main_cobb_deg();
        CHECK(delta > 6.0);
    }
}

TEST_CASE("noise-free non-progressive patients label NP") {
    CohortConfig cfg = small_cohort_config(12, 6);
    cfg.fraction_progressive = 0.0;
    cfg.landmark_noise_mm = 0.0;
    const Cohort cohort = generate_cohort(cfg);
    for (const auto& pat : cohort.patients) {
        CHECK(label_progression(pat.visits.front().spine, pat.visits.back().spine) ==
              ClassLabel::NP);
    }
}

TEST_CASE("ground-truth labels agree with label_progression at configured noise") {
    CohortConfig cfg = small_cohort_config(200, 11);
    const Cohort cohort = generate_cohort(cfg);
    int agree = 0;
    for (const auto& pat : cohort.patients) {
        if (label_progression(pat.visits.front().spine, pat.visits.back().spine) == pat.true_label) {
            ++agree;
        }
    }
    CHECK(agree >= static_cast<int>(0.99 * cohort.patients.size()));
}

TEST_CASE("label_progression boundary cases") {
    const ArticulatedSpine s = identity_spine();
    CHECK(label_progression(s, s) == ClassLabel::NP);

    // Constructed tilt profiles with deltas of exactly 6 and of 10 degrees.
    auto spine_with_mt_cobb = [](double cobb) {
        ArticulatedSpine sp = identity_spine();
        std::array<RigidTransform, kNumLevels> abs;
        for (int c = 0; c < kNumLevels; ++c) {
            double tilt = 0.0;
            if (c == 7) tilt = -cobb / 2;
            if (c == 11) tilt = cobb / 2;
            abs[static_cast<size_t>(c)].rotation = rot_y_deg(-tilt);
            abs[static_cast<size_t>(c)].translation = Vec3(0, 0, 26.0 * c);
        }
        sp.relative_transforms = to_relative(abs);
        return sp;
    };
    const ArticulatedSpine base = spine_with_mt_cobb(15.0);
    CHECK(label_progression(base, spine_with_mt_cobb(25.0)) == ClassLabel::P);
    // The threshold is strict: a delta at 6 degrees (within measurement
    // resolution) stays NP, just above it flips to P.
    CHECK(label_progression(base, spine_with_mt_cobb(21.0 - 1e-9)) == ClassLabel::NP);
    CHECK(label_progression(base, spine_with_mt_cobb(21.0 + 1e-6)) == ClassLabel::P);
}

TEST_CASE("degenerate configurations are rejected") {
    CohortConfig cfg = small_cohort_config(4, 1);
    cfg.rate_lo_deg_per_year = 9.0;
    cfg.rate_hi_deg_per_year = 8.0;  // empty range
    CHECK_THROWS_AS((void)generate_cohort(cfg), ValidationError);

    CohortConfig cfg2 = small_cohort_config(4, 1);
    cfg2.np_drift_max_deg = 7.0;  // labels could cross the threshold
    CHECK_THROWS_AS((void)generate_cohort(cfg2), ValidationError);

    CohortConfig cfg3 = small_cohort_config(4, 1);
    cfg3.rate_lo_deg_per_year = 1.0;  // cannot clear 6 degrees over the horizon
    CHECK_THROWS_AS((void)generate_cohort(cfg3), ValidationError);
}
