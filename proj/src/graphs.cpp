#include "spineprog/graphs.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

namespace spineprog {

MatX SimilarityGraphs::effective_adjacency(double omega_w, double omega_b) const {
    return omega_w * w_within - omega_b * w_between;
}

SimilarityGraphs build_graphs_from_distances(const MatX& distances,
                                             const std::vector<ClassLabel>& labels, int k) {
    const int n = static_cast<int>(labels.size());
    if (distances.rows() != n || distances.cols() != n) {
        throw ValidationError("build_graphs: distance matrix size does not match labels");
    }
    if (k < 1) throw ValidationError("build_graphs: k must be >= 1");

    int count_p = 0, count_np = 0;
    for (auto l : labels) {
        if (l == ClassLabel::P) {
            ++count_p;
        } else if (l == ClassLabel::NP) {
            ++count_np;
        } else {
            throw ValidationError("build_graphs: labels must be P or NP");
        }
    }
    if (count_p < k + 1) {
        throw ValidationError("build_graphs: class P has " + std::to_string(count_p) +
                              " members, needs at least k+1 = " + std::to_string(k + 1));
    }
    if (count_np < k + 1) {
        throw ValidationError("build_graphs: class NP has " + std::to_string(count_np) +
                              " members, needs at least k+1 = " + std::to_string(k + 1));
    }

    SimilarityGraphs g;
    g.k = k;
    g.labels = labels;
    g.w_within = MatX::Zero(n, n);
    g.w_between = MatX::Zero(n, n);

    std::vector<std::pair<double, int>> order;
    order.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        order.clear();
        for (int j = 0; j < n; ++j) {
            if (j != i) order.emplace_back(distances(i, j), j);
        }
        // Ties in distance break on the lower index for reproducible graphs.
        std::sort(order.begin(), order.end());
        int taken_w = 0, taken_b = 0;
        for (const auto& [d, j] : order) {
            (void)d;
            const bool same = labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)];
            if (same && taken_w < k) {
                g.w_within(i, j) = 1.0;
                g.w_within(j, i) = 1.0;  // or-rule
                ++taken_w;
            } else if (!same && taken_b < k) {
                g.w_between(i, j) = 1.0;
                g.w_between(j, i) = 1.0;
                ++taken_b;
            }
            if (taken_w >= k && taken_b >= k) break;
        }
    }
    return g;
}

SimilarityGraphs build_graphs(const std::vector<FeatureVector>& features, int k) {
    std::vector<ClassLabel> labels;
    labels.reserve(features.size());
    for (const auto& f : features) labels.push_back(f.label);
    return build_graphs_from_distances(pairwise_distances(features), labels, k);
}

GraphLaplacian laplacian(const MatX& w) {
    const int n = static_cast<int>(w.rows());
    if (w.cols() != n) throw ValidationError("laplacian: matrix must be square");
    if ((w - w.transpose()).cwiseAbs().maxCoeff() > 0.0) {
        throw ValidationError("laplacian: adjacency must be symmetric");
    }
    if (n > 0 && w.diagonal().cwiseAbs().maxCoeff() > 0.0) {
        throw ValidationError("laplacian: adjacency must have a zero diagonal");
    }
    GraphLaplacian out;
    out.degree = w.rowwise().sum();
    out.laplacian = -w;
    out.laplacian.diagonal() = out.degree;
    if (n > 0 && w.minCoeff() >= 0.0) {
        Eigen::SelfAdjointEigenSolver<MatX> eig(out.laplacian, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-9) {
            throw NumericalError("laplacian: non-negative graph produced an indefinite Laplacian");
        }
    }
    return out;
}

}  // namespace spineprog
