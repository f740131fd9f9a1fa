#pragma once

#include "spineprog/dpllvm.hpp"

#include <vector>

namespace spineprog {

/// Kernel configuration for the conditional-expectation projection.
/// With auto_bandwidth the ambient bandwidth h is the largest articulated
/// distance from the query to its K anchors, and the latent bandwidth g the
/// analogous radius around the initial latent estimate, so the kernels cover
/// all K data points.
struct KernelConfig {
    int k_neighbors = 10;
    double bandwidth_h = 0.0;
    double bandwidth_g = 0.0;
    bool auto_bandwidth = true;
    // Replace the articulated metric with plain Euclidean distance on the
    // feature values (the RBF-style ablation).
    bool euclidean_ambient = false;
};

struct ProjectionResult {
    VecX latent;                    // d
    std::vector<int> neighbor_ids;  // anchor indices, sorted by distance
    VecX weights;                   // final normalized kernel weights
    int iterations = 0;
};

/// Nadaraya-Watson projection of a feature vector into latent space. The
/// neighbourhood is chosen by articulated_distance; with the restriction flag
/// only anchors with label P and visit time 0 are eligible (the prediction
/// path). The estimate starts at the ambient-kernel-weighted mean of the
/// neighbour latents and is refined by at most 20 fixed-point steps that
/// re-weight with latent kernels around the current iterate; each iterate is
/// a convex combination of the neighbour latents.
/// Throws ValidationError when the restriction leaves fewer than K anchors
/// and NumericalError when all kernel weights underflow.
ProjectionResult nw_project(const TrainedManifold& m, const FeatureVector& query,
                            const KernelConfig& cfg, bool restrict_progressive_baseline);

}  // namespace spineprog
