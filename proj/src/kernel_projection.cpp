#include "spineprog/kernel_projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace spineprog {

namespace {

double gauss(double dist, double bandwidth) {
    const double r = dist / bandwidth;
    return std::exp(-0.5 * r * r);
}

}  // namespace

ProjectionResult nw_project(const TrainedManifold& m, const FeatureVector& query,
                            const KernelConfig& cfg, bool restrict_progressive_baseline) {
    if (cfg.k_neighbors < 1) throw ValidationError("nw_project: k_neighbors must be >= 1");
    if (!cfg.auto_bandwidth && (!(cfg.bandwidth_h > 0.0) || !(cfg.bandwidth_g > 0.0))) {
        throw ValidationError("nw_project: fixed bandwidths must be positive");
    }

    std::vector<int> pool;
    for (int i = 0; i < m.n(); ++i) {
        if (restrict_progressive_baseline) {
            const auto& a = m.anchors[static_cast<size_t>(i)];
            if (a.label != ClassLabel::P || a.visit_time_months != 0.0) continue;
        }
        pool.push_back(i);
    }
    if (static_cast<int>(pool.size()) < cfg.k_neighbors) {
        throw ValidationError("nw_project: only " + std::to_string(pool.size()) +
                              " eligible anchors for K = " + std::to_string(cfg.k_neighbors) +
                              (restrict_progressive_baseline
                                   ? " (progressive baseline restriction active)"
                                   : ""));
    }

    VecX dist_all;
    if (cfg.euclidean_ambient) {
        dist_all.resize(m.n());
        for (int i = 0; i < m.n(); ++i) {
            dist_all(i) = (query.values - m.anchors[static_cast<size_t>(i)].values).norm();
        }
    } else {
        dist_all = m.anchor_distances(query);
    }
    std::sort(pool.begin(), pool.end(), [&](int a, int b) {
        return dist_all(a) != dist_all(b) ? dist_all(a) < dist_all(b) : a < b;
    });
    pool.resize(static_cast<size_t>(cfg.k_neighbors));
    const int k = cfg.k_neighbors;

    const double h = cfg.auto_bandwidth ? std::max(dist_all(pool.back()), 1e-12) : cfg.bandwidth_h;

    VecX ambient_w(k);
    for (int c = 0; c < k; ++c) ambient_w(c) = gauss(dist_all(pool[static_cast<size_t>(c)]), h);
    if (!(ambient_w.sum() > 0.0)) {
        throw NumericalError(
            "nw_project: ambient kernel weights underflow; enable auto_bandwidth or widen "
            "bandwidth_h");
    }

    MatX nbr_latents(k, m.latent_dim());
    for (int c = 0; c < k; ++c) {
        nbr_latents.row(c) = m.latent_mean.row(pool[static_cast<size_t>(c)]);
    }

    VecX w = ambient_w / ambient_w.sum();
    VecX x = nbr_latents.transpose() * w;

    double g = cfg.bandwidth_g;
    if (cfg.auto_bandwidth) {
        g = 0.0;
        for (int c = 0; c < k; ++c) {
            g = std::max(g, (nbr_latents.row(c).transpose() - x).norm());
        }
        g = std::max(g, 1e-12);
    }

    ProjectionResult res;
    res.neighbor_ids = pool;
    int it = 0;
    for (; it < 20; ++it) {
        VecX joint = ambient_w;
        for (int c = 0; c < k; ++c) {
            joint(c) *= gauss((nbr_latents.row(c).transpose() - x).norm(), g);
        }
        const double jsum = joint.sum();
        if (!(jsum > 0.0)) {
            throw NumericalError(
                "nw_project: joint kernel weights underflow; enable auto_bandwidth");
        }
        w = joint / jsum;
        const VecX x_new = nbr_latents.transpose() * w;
        const double move = (x_new - x).norm();
        x = x_new;
        if (move < 1e-8) break;
    }
    res.latent = x;
    res.weights = w;
    res.iterations = it + 1;
    return res;
}

}  // namespace spineprog
