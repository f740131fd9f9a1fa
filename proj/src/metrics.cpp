#include "spineprog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace spineprog {

namespace {

constexpr double kRadToDeg = 57.29577951308232;

struct Region {
    int chain_lo;  // inclusive, chain index
    int chain_hi;  // inclusive
};

// Shared boundary vertebrae belong to both adjacent regions.
const Region kRegionPT{chain_index(VertebraLevel::T5), chain_index(VertebraLevel::T1)};
const Region kRegionMT{chain_index(VertebraLevel::T12), chain_index(VertebraLevel::T5)};
const Region kRegionL{chain_index(VertebraLevel::L5), chain_index(VertebraLevel::T12)};

// Max pairwise difference of tilt angles within a region, plus the pair.
double region_cobb(const std::array<double, kNumLevels>& tilts, const Region& r,
                   int* lo_end = nullptr, int* hi_end = nullptr) {
    double best = 0.0;
    int bi = r.chain_lo, bj = r.chain_lo;
    for (int i = r.chain_lo; i <= r.chain_hi; ++i) {
        for (int j = i + 1; j <= r.chain_hi; ++j) {
            const double d = std::abs(tilts[static_cast<size_t>(i)] - tilts[static_cast<size_t>(j)]);
            if (d > best) {
                best = d;
                bi = i;
                bj = j;
            }
        }
    }
    if (lo_end) *lo_end = bi;
    if (hi_end) *hi_end = bj;
    return best;
}

// Azimuth of the plane through the two end-vertebra centers and the apex
// center, measured from the sagittal axis and folded into [0, 90] degrees.
// The apex is the vertebra between the ends farthest from their chord.
double region_pmc(const std::array<RigidTransform, kNumLevels>& abs, int lo_end, int hi_end) {
    if (hi_end - lo_end < 2) return 0.0;
    const Vec3 a = abs[static_cast<size_t>(lo_end)].translation;
    const Vec3 b = abs[static_cast<size_t>(hi_end)].translation;
    const Vec3 chord = b - a;
    const double chord_len = chord.norm();
    if (chord_len < 1e-9) return 0.0;
    int apex = -1;
    double apex_dev = 1e-9;
    for (int c = lo_end + 1; c < hi_end; ++c) {
        const Vec3 p = abs[static_cast<size_t>(c)].translation - a;
        const double dev = (p - (p.dot(chord) / (chord_len * chord_len)) * chord).norm();
        if (dev > apex_dev) {
            apex_dev = dev;
            apex = c;
        }
    }
    if (apex < 0) return 0.0;  // collinear region
    const Vec3 n = chord.cross(abs[static_cast<size_t>(apex)].translation - a);
    if (n.norm() < 1e-9) return 0.0;
    // Horizontal trace of the plane; its angle from +y (sagittal axis).
    Vec3 h = n.cross(Vec3::UnitZ());
    const double hn = h.head<2>().norm();
    if (hn < 1e-12) return 0.0;
    return std::atan2(std::abs(h.x()), std::abs(h.y())) * kRadToDeg;
}

}  // namespace

double ClinicalParameters::main_cobb_deg() const {
    return std::max({cobb_pt_deg, cobb_mt_deg, cobb_l_deg});
}

std::array<double, kNumLevels> frontal_tilts_deg(
    const std::array<RigidTransform, kNumLevels>& absolute) {
    std::array<double, kNumLevels> tilts{};
    for (int c = 0; c < kNumLevels; ++c) {
        const Vec3 ax = absolute[static_cast<size_t>(c)].rotation.col(0);  // local x in world
        tilts[static_cast<size_t>(c)] = std::atan2(ax.z(), ax.x()) * kRadToDeg;
    }
    return tilts;
}

ClinicalParameters clinical_parameters(const ArticulatedSpine& spine) {
    const auto abs = to_absolute(spine);
    const auto tilts = frontal_tilts_deg(abs);

    std::array<double, kNumLevels> sag{};
    for (int c = 0; c < kNumLevels; ++c) {
        const Vec3 ay = abs[static_cast<size_t>(c)].rotation.col(1);  // local y in world
        sag[static_cast<size_t>(c)] = std::atan2(ay.z(), ay.y()) * kRadToDeg;
    }

    ClinicalParameters out;
    int lo = 0, hi = 0;
    out.cobb_pt_deg = region_cobb(tilts, kRegionPT, &lo, &hi);
    out.pmc_pt_deg = region_pmc(abs, lo, hi);
    out.cobb_mt_deg = region_cobb(tilts, kRegionMT, &lo, &hi);
    out.pmc_mt_deg = region_pmc(abs, lo, hi);
    // Apex of the main-thoracic curve: between its end vertebrae, the level
    // farthest laterally from the end-to-end chord; its axial rotation is the
    // horizontal angle of the local x axis.
    {
        const Vec3 a = abs[static_cast<size_t>(lo)].translation;
        const Vec3 b = abs[static_cast<size_t>(hi)].translation;
        const Vec3 chord = b - a;
        int apex = (lo + hi) / 2;
        double dev = -1.0;
        for (int c = lo; c <= hi; ++c) {
            const Vec3 p = abs[static_cast<size_t>(c)].translation - a;
            double d;
            if (chord.norm() < 1e-9) {
                d = 0.0;
            } else {
                d = (p - (p.dot(chord) / chord.squaredNorm()) * chord).norm();
            }
            if (d > dev) {
                dev = d;
                apex = c;
            }
        }
        const Vec3 ax = abs[static_cast<size_t>(apex)].rotation.col(0);
        out.apex_axial_rotation_deg = std::atan2(ax.y(), ax.x()) * kRadToDeg;
    }
    out.cobb_l_deg = region_cobb(tilts, kRegionL, &lo, &hi);
    out.pmc_l_deg = region_pmc(abs, lo, hi);

    const Region kyph{chain_index(VertebraLevel::T12), chain_index(VertebraLevel::T4)};
    const Region lord{chain_index(VertebraLevel::L5), chain_index(VertebraLevel::L1)};
    out.kyphosis_t4_t12_deg = region_cobb(sag, kyph);
    out.lordosis_l1_l5_deg = region_cobb(sag, lord);

    const Vec3 t1 = abs[static_cast<size_t>(chain_index(VertebraLevel::T1))].translation;
    const Vec3 l5 = abs[static_cast<size_t>(chain_index(VertebraLevel::L5))].translation;
    out.frontal_balance_mm = t1.x() - l5.x();
    out.sagittal_balance_mm = t1.y() - l5.y();
    return out;
}

PoseErrors pose_errors(const ArticulatedSpine& pred, const ArticulatedSpine& truth) {
    for (int c = 0; c < kNumLevels; ++c) {
        if (pred.vertebrae[static_cast<size_t>(c)].level != truth.vertebrae[static_cast<size_t>(c)].level) {
            throw ValidationError("pose_errors: vertebra levels differ at chain position " +
                                  std::to_string(c));
        }
    }
    const auto ap = to_absolute(pred);
    const auto at = to_absolute(truth);

    PoseErrors e;
    double sq_sum = 0.0;
    for (int c = 0; c < kNumLevels; ++c) {
        const size_t sc = static_cast<size_t>(c);
        e.ae_deg += rotation_angle(ap[sc].rotation.transpose() * at[sc].rotation) * kRadToDeg;
        const double dt = (ap[sc].translation - at[sc].translation).norm();
        e.mod_mm = std::max(e.mod_mm, dt);

        const auto wp = world_landmarks(pred.vertebrae[sc], ap[sc]);
        const auto wt = world_landmarks(truth.vertebrae[sc], at[sc]);
        Vec3 cp = Vec3::Zero(), ct = Vec3::Zero();
        for (int l = 0; l < kLandmarksPerVertebra; ++l) {
            cp += wp[static_cast<size_t>(l)];
            ct += wt[static_cast<size_t>(l)];
            sq_sum += (wp[static_cast<size_t>(l)] - wt[static_cast<size_t>(l)]).squaredNorm();
        }
        e.mcd_mm += (cp - ct).norm() / kLandmarksPerVertebra;
    }
    e.ae_deg /= kNumLevels;
    e.mcd_mm /= kNumLevels;
    e.landmark_rms_mm = std::sqrt(sq_sum / (kNumLevels * kLandmarksPerVertebra));
    return e;
}

ClassificationReport score_classification(const std::vector<ClassLabel>& truths,
                                          const std::vector<double>& scores,
                                          std::vector<double> threshold_grid) {
    if (truths.size() != scores.size()) {
        throw ValidationError("score_classification: truths and scores differ in length");
    }
    int np = 0, nn = 0;
    for (auto t : truths) {
        if (t == ClassLabel::P) {
            ++np;
        } else if (t == ClassLabel::NP) {
            ++nn;
        } else {
            throw ValidationError("score_classification: truth labels must be P or NP");
        }
    }
    if (np == 0 || nn == 0) {
        throw ValidationError("score_classification: single-class truth set, AUC undefined");
    }

    auto confusion = [&](double thr, int& tp, int& fp, int& tn, int& fn) {
        tp = fp = tn = fn = 0;
        for (size_t i = 0; i < truths.size(); ++i) {
            const bool pred_p = scores[i] >= thr;
            if (truths[i] == ClassLabel::P) {
                pred_p ? ++tp : ++fn;
            } else {
                pred_p ? ++fp : ++tn;
            }
        }
    };

    ClassificationReport rep;
    int tp, fp, tn, fn;
    confusion(0.5, tp, fp, tn, fn);
    rep.accuracy_pct = 100.0 * (tp + tn) / static_cast<double>(truths.size());
    rep.sensitivity_pct = 100.0 * tp / static_cast<double>(tp + fn);
    rep.specificity_pct = 100.0 * tn / static_cast<double>(tn + fp);

    if (threshold_grid.empty()) {
        std::set<double> uniq(scores.begin(), scores.end());
        threshold_grid.assign(uniq.begin(), uniq.end());
    } else {
        std::sort(threshold_grid.begin(), threshold_grid.end());
    }
    // Sweep thresholds from above the max score downward: (0,0) -> (1,1).
    rep.roc_points.emplace_back(0.0, 0.0);
    for (auto it = threshold_grid.rbegin(); it != threshold_grid.rend(); ++it) {
        confusion(*it, tp, fp, tn, fn);
        rep.roc_points.emplace_back(fp / static_cast<double>(nn), tp / static_cast<double>(np));
    }
    rep.roc_points.emplace_back(1.0, 1.0);

    double auc = 0.0;
    for (size_t i = 1; i < rep.roc_points.size(); ++i) {
        const auto& [x0, y0] = rep.roc_points[i - 1];
        const auto& [x1, y1] = rep.roc_points[i];
        auc += 0.5 * (x1 - x0) * (y0 + y1);
    }
    rep.auc = auc;
    return rep;
}

}  // namespace spineprog
