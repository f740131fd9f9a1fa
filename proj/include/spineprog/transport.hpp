#pragma once

#include "spineprog/curve.hpp"
#include "spineprog/dpllvm.hpp"
#include "spineprog/kernel_projection.hpp"

#include <string>
#include <vector>

namespace spineprog {

/// Affine time warp phi(t) = c (t - t0 - tau) + t0 encoding a patient's
/// progression speed relative to the neighbourhood.
struct TimeWarp {
    double c = 1.0;     // acceleration factor, > 0
    double tau = 0.0;   // time shift, months
    double t0 = 0.0;    // baseline reference time, months

    void validate() const;
};

double time_warp(const TimeWarp& w, double t_months);

/// Patient-specific offset transverse to the regressed curve at baseline.
struct SpaceShift {
    VecX v;                     // orthogonal to gamma'(t0) when that is nonzero
    std::vector<std::string> warnings;
};

/// Projects (x_q - gamma(t0)) onto the orthogonal complement of the curve
/// velocity at t0 and aligns it with the principal direction of the
/// projected neighbour-baseline covariance; rank-deficient covariances fall
/// back to the raw projection, and a vanishing velocity falls back to the
/// unprojected offset with a warning.
SpaceShift space_shift(const VecX& x_q, const DiscreteCurve& curve, const TrajectoryBundle& bundle,
                       double t0 = 0.0);

/// Parallel curve in the flat latent space: gamma(s) + v.
VecX parallel_curve_point(const DiscreteCurve& curve, const SpaceShift& shift, double s_months);

/// Decode a latent point back to ambient features through the local linear
/// maps of the k nearest anchors (Gaussian-weighted, bandwidth at the k-th
/// anchor), de-standardized, with quaternion blocks renormalized and
/// hemisphere-fixed. k_override <= 0 uses graphs.k. Throws NumericalError
/// when the latent point lies beyond 5x the median anchor spacing.
FeatureVector reconstruct_ambient(const TrainedManifold& m, const VecX& latent,
                                  int k_override = 0);

/// Fills epsilon_scale (RMS feature-space residual of anchor
/// self-reconstruction, the reported noise level of predictions) and
/// self_recon_rms_median (median landmark RMS of the same reconstructions).
void finalize_reconstruction_stats(TrainedManifold& m);

struct PredictionResult {
    double requested_time_months = 0.0;
    double warped_time_months = 0.0;
    bool clamped = false;
    VecX latent_point;
    FeatureVector feature_vector;
    ArticulatedSpine spine;
    std::vector<int> neighbor_ids;
    VecX neighbor_weights;
    double epsilon_scale = 0.0;
    std::vector<std::string> warnings;
};

/// One prediction: warp the requested time, walk the parallel curve, decode.
/// Warped times outside the curve domain are clamped with a warning recorded
/// in the result.
PredictionResult predict_spine(const TrainedManifold& m, const DiscreteCurve& curve,
                               const SpaceShift& shift, const TimeWarp& warp, double t_months);

/// Acceleration factor for a new patient: flexibility ratio relative to the
/// kernel-weighted neighbourhood mean. Falls back to the raw ratio (with a
/// warning) when neighbour flexibilities are unavailable.
TimeWarp make_time_warp(double flexibility_ratio, const std::vector<double>& neighbor_flexibility,
                        const VecX& weights, double t0, double tau,
                        std::vector<std::string>* warnings);

struct ProgressionOptions {
    int k_neighbors = 0;          // 0: use graphs.k
    FitCurveOptions curve;
    double tau = 0.0;
    bool normalize_flexibility = true;
};

struct ProgressionForecast {
    ProjectionResult projection;
    TrajectoryBundle bundle;
    DiscreteCurve curve;
    SpaceShift shift;
    TimeWarp warp;
    std::vector<PredictionResult> predictions;
    std::vector<std::string> warnings;
};

/// Full prediction pipeline for one baseline: progressive-baseline projection,
/// trajectory bundle, curve regression, space shift, flexibility time warp,
/// and one decoded spine per requested time.
ProgressionForecast predict_progression(const TrainedManifold& m, const FeatureVector& baseline,
                                        double flexibility_ratio,
                                        const std::vector<double>& times_months,
                                        const ProgressionOptions& options = {});

}  // namespace spineprog
