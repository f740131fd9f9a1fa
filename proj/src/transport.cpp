#include "spineprog/transport.hpp"

#include "spineprog/metrics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace spineprog {

void TimeWarp::validate() const {
    if (!(c > 0.0)) throw ValidationError("time warp: acceleration factor must be > 0");
}

double time_warp(const TimeWarp& w, double t_months) {
    return w.c * (t_months - w.t0 - w.tau) + w.t0;
}

SpaceShift space_shift(const VecX& x_q, const DiscreteCurve& curve, const TrajectoryBundle& bundle,
                       double t0) {
    SpaceShift out;
    const VecX g0 = evaluate_curve(curve, t0);
    const VecX u = curve_velocity(curve, t0);
    const VecX offset = x_q - g0;
    if (u.norm() < 1e-12) {
        out.v = offset;
        out.warnings.push_back("curve velocity vanishes at t0; space shift left unprojected");
        return out;
    }
    const int d = static_cast<int>(x_q.size());
    const MatX proj = MatX::Identity(d, d) - (u * u.transpose()) / u.squaredNorm();
    const VecX p_offset = proj * offset;

    // Principal direction of the projected neighbour-baseline covariance.
    const int nb = static_cast<int>(bundle.trajectories.size());
    MatX pts(nb, d);
    for (int i = 0; i < nb; ++i) {
        pts.row(i) = (proj * bundle.trajectories[static_cast<size_t>(i)].baseline_latent).transpose();
    }
    pts.rowwise() -= pts.colwise().mean();
    const MatX cov = pts.transpose() * pts / std::max(1, nb);
    Eigen::SelfAdjointEigenSolver<MatX> eig(cov);
    const double lead = eig.eigenvalues()(d - 1);
    if (lead < 1e-12) {
        out.v = p_offset;  // rank-deficient neighbourhood
        return out;
    }
    VecX e = eig.eigenvectors().col(d - 1);
    e = proj * e;  // numerical cleanup: keep e exactly transverse
    if (e.norm() < 1e-12) {
        out.v = p_offset;
        return out;
    }
    e.normalize();
    const double sign = p_offset.dot(e) < 0.0 ? -1.0 : 1.0;
    out.v = sign * p_offset.norm() * e;
    return out;
}

VecX parallel_curve_point(const DiscreteCurve& curve, const SpaceShift& shift, double s_months) {
    return evaluate_curve(curve, s_months) + shift.v;
}

FeatureVector reconstruct_ambient(const TrainedManifold& m, const VecX& latent, int k_override) {
    if (latent.size() != m.latent_dim()) {
        throw ValidationError("reconstruct_ambient: latent point has wrong dimension");
    }
    const int n = m.n();
    const int k = std::min(k_override > 0 ? k_override : m.graphs.k, n);

    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    VecX dist(n);
    for (int i = 0; i < n; ++i) {
        dist(i) = (m.latent_mean.row(i).transpose() - latent).norm();
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return dist(a) != dist(b) ? dist(a) < dist(b) : a < b;
    });
    if (dist(order.front()) > 5.0 * std::max(m.median_nn_latent, 1e-12)) {
        throw NumericalError(
            "reconstruct_ambient: latent point lies beyond 5x the median anchor spacing "
            "(extrapolation)");
    }
    order.resize(static_cast<size_t>(k));

    const double h = std::max(dist(order.back()), 1e-12);
    VecX w(k);
    for (int c = 0; c < k; ++c) {
        const double r = dist(order[static_cast<size_t>(c)]) / h;
        w(c) = std::exp(-0.5 * r * r);
    }
    w /= w.sum();

    VecX y_std = VecX::Zero(m.ambient_dim());
    for (int c = 0; c < k; ++c) {
        const int j = order[static_cast<size_t>(c)];
        y_std += w(c) * (m.std_anchors.row(j).transpose() +
                         m.map_mean[static_cast<size_t>(j)] *
                             (latent - m.latent_mean.row(j).transpose()));
    }

    FeatureVector fv;
    fv.mode = m.mode;
    fv.values = m.destandardize(y_std);
    if (mode_has_poses(m.mode)) {
        const int block = mode_block_size(m.mode);
        for (int c = 0; c < kNumLevels; ++c) {
            const int off = c * block;
            Eigen::Vector4d q = fv.values.segment<4>(off);
            const double norm = q.norm();
            if (!(norm > 0.0) || !std::isfinite(norm)) {
                throw NumericalError("reconstruct_ambient: degenerate quaternion block");
            }
            q /= norm;
            // Hemisphere fix keeps the flattening deterministic.
            fv.values.segment<4>(off) = quaternion_from_rotation(rotation_from_quaternion(q));
        }
    }
    return fv;
}

void finalize_reconstruction_stats(TrainedManifold& m) {
    const int n = m.n();
    std::vector<double> rms;
    rms.reserve(static_cast<size_t>(n));
    double sq_feat = 0.0;
    for (int i = 0; i < n; ++i) {
        const FeatureVector rec =
            reconstruct_ambient(m, m.latent_mean.row(i).transpose());
        sq_feat += (rec.values - m.anchors[static_cast<size_t>(i)].values).squaredNorm();
        if (mode_has_shape(m.mode) && mode_has_poses(m.mode)) {
            rms.push_back(pose_errors(from_feature_vector(rec),
                                      from_feature_vector(m.anchors[static_cast<size_t>(i)]))
                              .landmark_rms_mm);
        } else if (mode_has_poses(m.mode)) {
            // Pose-only features: centroid RMS stands in for the landmark RMS.
            const PoseErrors pe = pose_errors(from_feature_vector(rec),
                                              from_feature_vector(m.anchors[static_cast<size_t>(i)]));
            rms.push_back(pe.mcd_mm);
        } else {
            rms.push_back(std::sqrt((rec.values - m.anchors[static_cast<size_t>(i)].values)
                                        .squaredNorm() /
                                    (kNumLevels * kLandmarksPerVertebra)));
        }
    }
    m.epsilon_scale = std::sqrt(sq_feat / (static_cast<double>(n) * m.ambient_dim()));
    std::nth_element(rms.begin(), rms.begin() + n / 2, rms.end());
    m.self_recon_rms_median = rms[static_cast<size_t>(n) / 2];
}

PredictionResult predict_spine(const TrainedManifold& m, const DiscreteCurve& curve,
                               const SpaceShift& shift, const TimeWarp& warp, double t_months) {
    warp.validate();
    PredictionResult res;
    res.requested_time_months = t_months;
    res.warped_time_months = time_warp(warp, t_months);
    const double lo = curve.times.front();
    const double hi = curve.times.back();
    double s = res.warped_time_months;
    if (s < lo || s > hi) {
        res.clamped = true;
        s = std::clamp(s, lo, hi);
        res.warnings.push_back("warped time " + std::to_string(res.warped_time_months) +
                               " clamped to curve domain [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
    }
    res.latent_point = parallel_curve_point(curve, shift, s);
    res.feature_vector = reconstruct_ambient(m, res.latent_point);
    res.spine = from_feature_vector(res.feature_vector);
    res.epsilon_scale = m.epsilon_scale;
    return res;
}

TimeWarp make_time_warp(double flexibility_ratio, const std::vector<double>& neighbor_flexibility,
                        const VecX& weights, double t0, double tau,
                        std::vector<std::string>* warnings) {
    if (!(flexibility_ratio > 0.0)) {
        throw ValidationError("flexibility ratio must be positive");
    }
    TimeWarp warp;
    warp.t0 = t0;
    warp.tau = tau;
    double wsum = 0.0, acc = 0.0;
    for (size_t i = 0; i < neighbor_flexibility.size(); ++i) {
        const double f = neighbor_flexibility[i];
        if (!std::isfinite(f) || !(f > 0.0)) continue;
        const double w = i < static_cast<size_t>(weights.size()) ? weights(static_cast<int>(i)) : 1.0;
        acc += w * f;
        wsum += w;
    }
    if (wsum > 0.0 && acc > 0.0) {
        warp.c = flexibility_ratio / (acc / wsum);
    } else {
        warp.c = flexibility_ratio;
        if (warnings) {
            warnings->push_back(
                "neighbor flexibility ratios unavailable; using the raw flexibility ratio as "
                "the acceleration factor");
        }
    }
    warp.validate();
    return warp;
}

ProgressionForecast predict_progression(const TrainedManifold& m, const FeatureVector& baseline,
                                        double flexibility_ratio,
                                        const std::vector<double>& times_months,
                                        const ProgressionOptions& options) {
    ProgressionForecast fc;
    const int k = options.k_neighbors > 0 ? options.k_neighbors : m.graphs.k;

    KernelConfig kcfg;
    kcfg.k_neighbors = k;
    kcfg.auto_bandwidth = true;
    fc.projection = nw_project(m, baseline, kcfg, /*restrict_progressive_baseline=*/true);

    std::vector<std::string> nbr_patients;
    std::vector<double> nbr_flex;
    for (int id : fc.projection.neighbor_ids) {
        const auto& a = m.anchors[static_cast<size_t>(id)];
        if (std::find(nbr_patients.begin(), nbr_patients.end(), a.patient_id) !=
            nbr_patients.end()) {
            continue;
        }
        nbr_patients.push_back(a.patient_id);
        nbr_flex.push_back(id < static_cast<int>(m.anchor_flexibility.size())
                               ? m.anchor_flexibility[static_cast<size_t>(id)]
                               : std::numeric_limits<double>::quiet_NaN());
    }

    fc.bundle = build_bundle(m, fc.projection.latent, nbr_patients, fc.projection.weights);
    for (const auto& w : fc.bundle.warnings) fc.warnings.push_back(w);

    fc.curve = fit_curve(fc.bundle, options.curve);
    fc.shift = space_shift(fc.projection.latent, fc.curve, fc.bundle, fc.curve.times.front());
    for (const auto& w : fc.shift.warnings) fc.warnings.push_back(w);

    if (options.normalize_flexibility) {
        fc.warp = make_time_warp(flexibility_ratio, nbr_flex, fc.projection.weights,
                                 fc.curve.times.front(), options.tau, &fc.warnings);
    } else {
        fc.warp.c = flexibility_ratio;
        fc.warp.tau = options.tau;
        fc.warp.t0 = fc.curve.times.front();
        fc.warp.validate();
    }

    for (double t : times_months) {
        PredictionResult pred = predict_spine(m, fc.curve, fc.shift, fc.warp, t);
        pred.neighbor_ids = fc.projection.neighbor_ids;
        pred.neighbor_weights = fc.projection.weights;
        for (const auto& w : pred.warnings) fc.warnings.push_back(w);
        fc.predictions.push_back(std::move(pred));
    }
    return fc;
}

}  // namespace spineprog
