#pragma once

#include "spineprog/dpllvm.hpp"

#include <string>
#include <vector>

namespace spineprog {

/// Longitudinal latent trajectories of the neighbour patients, co-aligned so
/// every baseline coincides with the query latent x_q. Weights are a
/// normalized Gaussian kernel of the (unshifted) baseline latent distances.
struct TrajectoryBundle {
    struct Trajectory {
        std::string patient_id;
        std::vector<double> times;      // strictly increasing, times[0] == 0
        MatX points;                    // n_visits x d, shifted by (x_{i,0} - x_q)
        VecX baseline_latent;           // before shifting
        double weight = 0.0;
    };
    std::vector<Trajectory> trajectories;
    VecX query_latent;
    std::vector<std::string> warnings;

    double t_min() const;
    double t_max() const;
    int total_points() const;
};

/// Groups the neighbour patients' embedded visits into trajectories, applies
/// the baseline shift and computes the kernel weights. Patients with fewer
/// than two embedded visits are excluded with a warning; all excluded is an
/// error.
TrajectoryBundle build_bundle(const TrainedManifold& m, const VecX& query_latent,
                              const std::vector<std::string>& neighbor_patient_ids,
                              const VecX& kernel_weights = VecX());

/// Piecewise-linear discrete curve on uniformly spaced node times.
struct DiscreteCurve {
    MatX nodes;                 // K_d x d
    std::vector<double> times;  // K_d, uniform, strictly increasing
    double lambda = 0.1;        // velocity weight
    double mu = 1.0;            // acceleration weight
    VecX alpha;                 // K_d - 1 per-segment velocity weights
    VecX beta;                  // K_d - 2 per-node acceleration weights

    int num_nodes() const { return static_cast<int>(nodes.rows()); }
    int dim() const { return static_cast<int>(nodes.cols()); }
    double dt() const { return times[1] - times[0]; }

    void validate() const;
};

/// Curve value at t by linear interpolation; endpoints clamp exactly at the
/// bounds. Throws ValidationError outside [t_1, t_N].
VecX evaluate_curve(const DiscreteCurve& curve, double t);

/// Finite-difference velocity of the interpolant at t (slope of the segment
/// containing t).
VecX curve_velocity(const DiscreteCurve& curve, double t);

/// Discrete curve energy: weighted misfit of the interpolated curve against
/// the shifted data, plus lambda/2 forward-difference velocity and mu/2
/// central-difference acceleration penalties. Throws ValidationError when a
/// data time lies outside the curve domain.
double energy(const DiscreteCurve& curve, const TrajectoryBundle& bundle);

/// Exact analytic gradient of energy with respect to the nodes.
MatX energy_gradient(const DiscreteCurve& curve, const TrajectoryBundle& bundle);

struct FitCurveOptions {
    int num_nodes = 25;
    double lambda = 0.1;
    double mu = 1.0;
    VecX alpha;                   // defaults to ones
    VecX beta;                    // defaults to ones
    double grad_tol_rel = 1e-8;   // stop when |grad| < tol * (1 + E)
    int max_iters = 10000;
};

/// Minimizes the curve energy with Polak-Ribiere nonlinear conjugate
/// gradient (restart every K_d * d iterations, Armijo backtracking with
/// c = 1e-4 and shrink 0.5), initialized from per-node-bin weighted data
/// means. Energy never increases across accepted iterations.
DiscreteCurve fit_curve(const TrajectoryBundle& bundle, const FitCurveOptions& options);

}  // namespace spineprog
