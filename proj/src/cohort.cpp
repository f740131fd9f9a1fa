#include "spineprog/cohort.hpp"

#include "spineprog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace spineprog {

namespace {

constexpr double kDegToRad = 0.017453292519943295;

// Deterministic uniform/normal draws from a per-patient engine. Box-Muller
// without caching keeps the draw count per call fixed.
struct Rng {
    std::mt19937_64 eng;

    explicit Rng(std::uint64_t seed) : eng(seed) {}

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(eng);
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(std::min<double>(hi - lo, std::floor(uniform() * (hi - lo + 1))));
    }
    double normal() {
        const double u1 = std::max(uniform(), 1e-300);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Mat3 rot_x(double rad) {
    Mat3 r;
    r << 1, 0, 0, 0, std::cos(rad), -std::sin(rad), 0, std::sin(rad), std::cos(rad);
    return r;
}
Mat3 rot_y(double rad) {
    Mat3 r;
    r << std::cos(rad), 0, std::sin(rad), 0, 1, 0, -std::sin(rad), 0, std::cos(rad);
    return r;
}
Mat3 rot_z(double rad) {
    Mat3 r;
    r << std::cos(rad), -std::sin(rad), 0, std::sin(rad), std::cos(rad), 0, 0, 0, 1;
    return r;
}

// Normalized derivative-of-Gaussian shape: extrema exactly +-1 at x = +-1.
double s_curve(double x) { return x * std::exp(0.5 * (1.0 - x * x)); }

double gauss_bump(double x) { return std::exp(-0.5 * x * x); }

// One scoliotic curve: a tilt bump of amplitude/2 on either side of the apex.
struct CurveComponent {
    int apex_chain = 9;   // T8
    double direction = 1.0;
    double width = 2.0;
};

double tilt_profile_deg(const CurveComponent& cc, double amplitude_deg, int chain) {
    return 0.5 * amplitude_deg * cc.direction * s_curve((cc.apex_chain - chain) / cc.width);
}

double axial_profile_deg(const CurveComponent& cc, double amplitude_deg, double coupling,
                         int chain) {
    return coupling * 0.5 * amplitude_deg * cc.direction *
           gauss_bump((chain - cc.apex_chain) / cc.width);
}

// Per-patient morphology that stays fixed across visits.
struct PatientShape {
    CurveComponent main_curve;
    CurveComponent secondary_curve;  // used only for double curves
    bool has_secondary = false;
    double kyphosis_amp_deg = 30.0;   // thoracic sagittal bump, apex T8, width 3
    double lordosis_amp_deg = 32.0;   // lumbar sagittal bump, apex L3, width 2
    double axial_coupling = 0.2;
    double wedge_factor = 0.05;       // landmark wedge degrees per Cobb degree
    std::array<double, kNumLevels> segment_heights_mm{};
    std::array<double, kNumLevels> template_scale{};
    Vec3 base_offset_mm = Vec3::Zero();
};

// Canonical landmark template before per-level scaling; centroid-corrected
// in code. Order: pedicle LS, LI, RS, RI, endplate sup, endplate inf.
const std::array<Vec3, kLandmarksPerVertebra> kTemplate = {
    Vec3(13, -8, 4),  Vec3(13, -8, -4),  Vec3(-13, -8, 4),
    Vec3(-13, -8, -4), Vec3(0, 4, 11),   Vec3(0, 4, -11)};

std::array<Vec3, kLandmarksPerVertebra> scaled_template(double scale) {
    std::array<Vec3, kLandmarksPerVertebra> t;
    Vec3 centroid = Vec3::Zero();
    for (int l = 0; l < kLandmarksPerVertebra; ++l) {
        t[static_cast<size_t>(l)] = scale * kTemplate[static_cast<size_t>(l)];
        centroid += t[static_cast<size_t>(l)];
    }
    centroid /= kLandmarksPerVertebra;
    for (auto& p : t) p -= centroid;
    return t;
}

ArticulatedSpine build_spine(const PatientShape& shape, double main_amp_deg,
                             double secondary_amp_deg, double axial_jitter_deg,
                             double kyph_jitter_deg, double noise_mm, Rng& rng) {
    // Absolute tilt/axial/sagittal profiles along the chain, degrees.
    std::array<double, kNumLevels> tilt{}, axial{}, sagittal{};
    const CurveComponent kyph_cc{9, 1.0, 3.0};
    const CurveComponent lord_cc{2, -1.0, 2.0};
    for (int c = 0; c < kNumLevels; ++c) {
        tilt[static_cast<size_t>(c)] = tilt_profile_deg(shape.main_curve, main_amp_deg, c);
        axial[static_cast<size_t>(c)] =
            axial_profile_deg(shape.main_curve, main_amp_deg, shape.axial_coupling, c) +
            axial_jitter_deg;
        if (shape.has_secondary) {
            tilt[static_cast<size_t>(c)] +=
                tilt_profile_deg(shape.secondary_curve, secondary_amp_deg, c);
            axial[static_cast<size_t>(c)] += axial_profile_deg(
                shape.secondary_curve, secondary_amp_deg, shape.axial_coupling, c);
        }
        sagittal[static_cast<size_t>(c)] =
            tilt_profile_deg(kyph_cc, shape.kyphosis_amp_deg + kyph_jitter_deg, c) +
            tilt_profile_deg(lord_cc, shape.lordosis_amp_deg, c);
    }

    // Absolute poses. The rotation order R_y(-tilt) R_z(axial) R_x(sagittal)
    // keeps the measured frontal tilt exactly equal to the programmed one, so
    // Cobb angles are controlled analytically.
    std::array<RigidTransform, kNumLevels> abs;
    for (int c = 0; c < kNumLevels; ++c) {
        const size_t sc = static_cast<size_t>(c);
        abs[sc].rotation = rot_y(-tilt[sc] * kDegToRad) * rot_z(axial[sc] * kDegToRad) *
                           rot_x(sagittal[sc] * kDegToRad);
        if (c == 0) {
            abs[sc].translation = shape.base_offset_mm;
        } else {
            abs[sc].translation =
                abs[sc - 1].translation +
                abs[sc - 1].rotation * Vec3(0, 0, shape.segment_heights_mm[sc]);
        }
    }

    ArticulatedSpine spine;
    for (int c = 0; c < kNumLevels; ++c) {
        const size_t sc = static_cast<size_t>(c);
        auto& v = spine.vertebrae[sc];
        v.level = level_at_chain(c);
        v.landmarks = scaled_template(shape.template_scale[sc]);

        // Vertebral wedging: counter-rotate superior and inferior landmark
        // sets about the local y axis, proportional to the local deformity.
        const double wedge_deg =
            shape.wedge_factor * tilt_profile_deg(shape.main_curve, main_amp_deg, c) * 2.0;
        if (wedge_deg != 0.0) {
            const Mat3 r_sup = rot_y(-0.5 * wedge_deg * kDegToRad);
            const Mat3 r_inf = rot_y(0.5 * wedge_deg * kDegToRad);
            for (int l : {0, 2, 4}) v.landmarks[static_cast<size_t>(l)] = r_sup * v.landmarks[static_cast<size_t>(l)];
            for (int l : {1, 3, 5}) v.landmarks[static_cast<size_t>(l)] = r_inf * v.landmarks[static_cast<size_t>(l)];
        }
        if (noise_mm > 0.0) {
            for (auto& p : v.landmarks) {
                p += noise_mm * Vec3(rng.normal(), rng.normal(), rng.normal());
            }
        }
        // Keep the local-centroid invariant exact: recenter and fold the
        // offset into the frame so world positions are unchanged.
        const Vec3 centroid = v.landmark_centroid();
        for (auto& p : v.landmarks) p -= centroid;
        abs[sc].translation += abs[sc].rotation * centroid;
    }
    spine.relative_transforms = to_relative(abs);
    return spine;
}

void validate_config(const CohortConfig& cfg) {
    if (cfg.n_patients < 1) throw ValidationError("cohort config: n_patients must be >= 1");
    if (cfg.fraction_progressive < 0.0 || cfg.fraction_progressive > 1.0) {
        throw ValidationError("cohort config: fraction_progressive must lie in [0, 1]");
    }
    if (cfg.visits_min < 2 || cfg.visits_max < cfg.visits_min) {
        throw ValidationError("cohort config: need visits_max >= visits_min >= 2");
    }
    if (cfg.visit_jitter_months < 0.0 || cfg.visit_jitter_months >= 6.0) {
        throw ValidationError("cohort config: visit jitter must lie in [0, 6) months");
    }
    if (cfg.baseline_cobb_hi_deg < cfg.baseline_cobb_lo_deg || cfg.baseline_cobb_lo_deg <= 0.0) {
        throw ValidationError("cohort config: empty baseline Cobb range");
    }
    if (cfg.rate_hi_deg_per_year < cfg.rate_lo_deg_per_year || cfg.rate_lo_deg_per_year <= 0.0) {
        throw ValidationError("cohort config: empty progression rate range");
    }
    if (cfg.np_drift_max_deg < 0.0 || cfg.np_drift_max_deg > 6.0) {
        throw ValidationError("cohort config: np_drift_max_deg must lie in [0, 6]");
    }
    if (cfg.landmark_noise_mm < 0.0) {
        throw ValidationError("cohort config: landmark noise must be >= 0");
    }
    double wsum = 0.0;
    for (double w : cfg.deformity_class_mix) {
        if (w < 0.0) throw ValidationError("cohort config: class weights must be >= 0");
        wsum += w;
    }
    if (wsum <= 0.0) throw ValidationError("cohort config: class weights sum to zero");
    // The shortest possible follow-up must still let the slowest progressive
    // patient clear the 6-degree threshold with margin.
    const double t_last_min = 12.0 * (cfg.visits_min - 1) - cfg.visit_jitter_months;
    if (cfg.rate_lo_deg_per_year * t_last_min / 12.0 <= 7.0) {
        throw ValidationError(
            "cohort config: rate range and visit horizon cannot guarantee progressive "
            "patients exceed the 6 degree threshold");
    }
}

}  // namespace

Cohort generate_cohort(const CohortConfig& config) {
    validate_config(config);

    std::array<double, 5> mix = config.deformity_class_mix;
    double wsum = 0.0;
    for (double w : mix) wsum += w;
    for (double& w : mix) w /= wsum;

    const int n_prog = static_cast<int>(std::lround(config.fraction_progressive * config.n_patients));

    Cohort cohort;
    cohort.config = config;
    cohort.patients.resize(static_cast<size_t>(config.n_patients));

    for (int pi = 0; pi < config.n_patients; ++pi) {
        Rng rng(splitmix64(config.seed ^ (0x5bf0a8f2d1c3e947ULL + 0x9e3779b97f4a7c15ULL *
                                          static_cast<std::uint64_t>(pi))));
        PatientRecord& pat = cohort.patients[static_cast<size_t>(pi)];
        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "pt%04d", pi + 1);
        pat.patient_id = idbuf;
        pat.true_label = pi < n_prog ? ClassLabel::P : ClassLabel::NP;

        // Deformity class from the (normalized) mix.
        {
            const double u = rng.uniform();
            double acc = 0.0;
            pat.deformity_class = 5;
            for (int k = 0; k < 5; ++k) {
                acc += mix[static_cast<size_t>(k)];
                if (u < acc) {
                    pat.deformity_class = k + 1;
                    break;
                }
            }
        }

        PatientShape shape;
        const int thoracic_apex = 8 + rng.uniform_int(0, 2);  // T9..T7
        const int lumbar_apex = 2 + rng.uniform_int(0, 1);    // L3..L2
        switch (pat.deformity_class) {
            case 1:  // normal: mild curve
                shape.main_curve = {thoracic_apex, rng.uniform() < 0.5 ? 1.0 : -1.0, 2.0};
                pat.baseline_cobb_deg = rng.uniform(4.0, 9.0);
                break;
            case 2:  // right thoracic
                shape.main_curve = {thoracic_apex, 1.0, 2.0};
                pat.baseline_cobb_deg = rng.uniform(config.baseline_cobb_lo_deg, config.baseline_cobb_hi_deg);
                break;
            case 3:  // left lumbar
                shape.main_curve = {lumbar_apex, -1.0, 2.0};
                pat.baseline_cobb_deg = rng.uniform(config.baseline_cobb_lo_deg, config.baseline_cobb_hi_deg);
                break;
            case 4:  // right thoracic + left lumbar
                shape.main_curve = {thoracic_apex, 1.0, 2.0};
                shape.secondary_curve = {lumbar_apex, -1.0, 2.0};
                shape.has_secondary = true;
                pat.baseline_cobb_deg = rng.uniform(config.baseline_cobb_lo_deg, config.baseline_cobb_hi_deg);
                break;
            default:  // 5: left thoracic
                shape.main_curve = {thoracic_apex, -1.0, 2.0};
                pat.baseline_cobb_deg = rng.uniform(config.baseline_cobb_lo_deg, config.baseline_cobb_hi_deg);
                break;
        }

        // Class-conditional morphology markers: progressive spines are
        // hypokyphotic, more axially rotated and show stronger wedging.
        const bool prog = pat.true_label == ClassLabel::P;
        shape.kyphosis_amp_deg = prog ? rng.uniform(14.0, 20.0) : rng.uniform(28.0, 38.0);
        shape.lordosis_amp_deg = rng.uniform(25.0, 40.0);
        shape.axial_coupling = prog ? rng.uniform(0.40, 0.60) : rng.uniform(0.10, 0.22);
        shape.wedge_factor = prog ? rng.uniform(0.10, 0.16) : rng.uniform(0.02, 0.06);
        for (int c = 0; c < kNumLevels; ++c) {
            const bool lumbar = c < 5;
            shape.segment_heights_mm[static_cast<size_t>(c)] =
                (lumbar ? 32.0 : 24.0) * rng.uniform(0.96, 1.04);
            shape.template_scale[static_cast<size_t>(c)] =
                (lumbar ? 1.10 : 0.80 + 0.02 * (16 - c)) * rng.uniform(0.97, 1.03);
        }
        shape.base_offset_mm = Vec3(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), 0.0);

        // Visit schedule: nominal yearly visits with jitter, baseline at 0.
        const int n_visits = rng.uniform_int(config.visits_min, config.visits_max);
        std::vector<double> times(static_cast<size_t>(n_visits));
        times[0] = 0.0;
        for (int v = 1; v < n_visits; ++v) {
            times[static_cast<size_t>(v)] =
                12.0 * v + rng.uniform(-config.visit_jitter_months, config.visit_jitter_months);
        }
        const double t_last = times.back();

        // Progression of the main-curve amplitude. The flexibility ratio is
        // proportional to the rate, which makes a flexibility-driven time
        // warp an unbiased predictor of the individual slope.
        double drift_np = 0.0;
        if (prog) {
            pat.rate_deg_per_year = rng.uniform(config.rate_lo_deg_per_year, config.rate_hi_deg_per_year);
            pat.flexibility_ratio = std::clamp(
                0.8 * pat.rate_deg_per_year / config.rate_hi_deg_per_year + rng.uniform(-0.015, 0.015),
                0.2, 0.8);
        } else {
            drift_np = rng.uniform(-0.35, 0.8) * config.np_drift_max_deg;
            pat.rate_deg_per_year = t_last > 0 ? drift_np / (t_last / 12.0) : 0.0;
            pat.flexibility_ratio = rng.uniform(0.2, 0.5);
        }

        const double secondary_base = 0.75 * pat.baseline_cobb_deg;
        pat.visits.reserve(static_cast<size_t>(n_visits));
        for (int v = 0; v < n_visits; ++v) {
            const double t = times[static_cast<size_t>(v)];
            double main_amp, secondary_amp;
            if (prog) {
                main_amp = pat.baseline_cobb_deg + pat.rate_deg_per_year * t / 12.0;
                secondary_amp = secondary_base + 0.6 * pat.rate_deg_per_year * t / 12.0;
            } else {
                main_amp = pat.baseline_cobb_deg + drift_np * (t_last > 0 ? t / t_last : 0.0);
                secondary_amp = secondary_base + 0.6 * drift_np * (t_last > 0 ? t / t_last : 0.0);
            }
            const double axial_jitter = rng.uniform(-0.5, 0.5);
            const double kyph_jitter = rng.uniform(-1.0, 1.0);
            Visit visit;
            visit.time_months = t;
            visit.true_main_cobb_deg = main_amp;
            visit.spine = build_spine(shape, main_amp, secondary_amp, axial_jitter, kyph_jitter,
                                      config.landmark_noise_mm, rng);
            pat.visits.push_back(std::move(visit));
        }
    }
    return cohort;
}

ClassLabel label_progression(const ArticulatedSpine& baseline, const ArticulatedSpine& last) {
    const double delta =
        clinical_parameters(last).main_cobb_deg() - clinical_parameters(baseline).main_cobb_deg();
    return delta > 6.0 ? ClassLabel::P : ClassLabel::NP;
}

std::vector<FeatureVector> cohort_features(const Cohort& cohort, FeatureMode mode) {
    std::vector<FeatureVector> out;
    for (const auto& pat : cohort.patients) {
        for (const auto& visit : pat.visits) {
            out.push_back(to_feature_vector(visit.spine, mode, pat.true_label, pat.patient_id,
                                            visit.time_months));
        }
    }
    return out;
}

}  // namespace spineprog
