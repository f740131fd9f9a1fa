#pragma once

#include "spineprog/articulated.hpp"
#include "spineprog/types.hpp"

#include <vector>

namespace spineprog {

/// Binary within-class and between-class k-nearest-neighbour graphs,
/// symmetrized with the or-rule. Diagonals are zero and the two edge sets are
/// disjoint by construction.
struct SimilarityGraphs {
    MatX w_within;   // n x n, 0/1
    MatX w_between;  // n x n, 0/1
    int k = 10;
    std::vector<ClassLabel> labels;

    int size() const { return static_cast<int>(labels.size()); }

    /// Signed effective adjacency omega_w * W_w - omega_b * W_b used by the
    /// model priors.
    MatX effective_adjacency(double omega_w, double omega_b) const;
};

/// Neighbourhoods are the k closest samples under articulated_distance,
/// same-class for W_w and different-class for W_b; distance ties break on the
/// lower sample index. Throws ValidationError when a class has fewer than
/// k + 1 members (naming the class) or labels are not P/NP.
SimilarityGraphs build_graphs(const std::vector<FeatureVector>& features, int k);

/// Same construction from a precomputed symmetric distance matrix.
SimilarityGraphs build_graphs_from_distances(const MatX& distances,
                                             const std::vector<ClassLabel>& labels, int k);

struct GraphLaplacian {
    VecX degree;     // diagonal of D, D(i,i) = sum_j W(i,j)
    MatX laplacian;  // L = D - W
};

/// L = D - W for a symmetric zero-diagonal W. For non-negative W the result
/// is checked positive semidefinite (smallest eigenvalue >= -1e-9).
/// Throws ValidationError on asymmetric input.
GraphLaplacian laplacian(const MatX& w);

}  // namespace spineprog
