#pragma once

#include "spineprog/articulated.hpp"
#include "spineprog/graphs.hpp"
#include "spineprog/types.hpp"

#include <limits>
#include <vector>

namespace spineprog {

/// Intrinsic model parameters. sigma and like_scale are refined by the
/// M-step; the omega_w : omega_b ratio stays at its configured value.
struct Hyperparams {
    double sigma = 1.0;
    double omega_w = 0.3;
    double omega_b = 0.7;
    int latent_dim = 8;
    int max_iters = 100;
    double elbo_rel_tol = 1e-7;
    bool optimize_sigma = true;
    bool optimize_scale = true;
    double like_scale = 1.0;  // common positive scale on the likelihood weights

    void validate() const;
};

/// Fitted discriminant embedding: Gaussian posteriors over latent coordinates
/// and local linear maps, the graphs and features they were trained on, and
/// the statistics downstream guards need. Immutable after fit; safe to share
/// across threads.
struct TrainedManifold {
    Hyperparams hyper;
    FeatureMode mode = FeatureMode::ShapePoses;
    SimilarityGraphs graphs;
    std::vector<FeatureVector> anchors;       // original, unstandardized
    std::vector<double> anchor_flexibility;   // NaN when unknown

    VecX feat_mean, feat_scale;               // per-coordinate standardization
    MatX latent_mean;                         // n x d, column means zero
    MatX latent_var;                          // n x d, diagonal posterior covs
    MatX latent_prior_mean;                   // n x d spectral anchor of the prior
    std::vector<MatX> map_mean;               // n maps, D x d
    MatX map_var;                             // n x d, per-column map variances

    std::vector<double> elbo_trace;           // non-decreasing within 1e-6
    double beta_shift = 0.0;                  // PSD shift applied to the signed prior
    double eps_y = 1e-6;                      // ridge in the likelihood normalizer
    VecX prior_eigs;                          // eigenvalues of the signed prior Laplacian
    VecX lik_eigs;                            // eigenvalues of the within likelihood Laplacian

    double median_knn_radius_ambient = 0.0;   // out-of-distribution guard
    double median_nn_latent = 0.0;
    double median_nn_latent_within = 0.0;
    // Reconstruction statistics, filled by finalize_reconstruction_stats.
    double epsilon_scale = std::numeric_limits<double>::quiet_NaN();
    double self_recon_rms_median = std::numeric_limits<double>::quiet_NaN();

    // Caches rebuilt after fit or load; not serialized.
    MatX std_anchors;                         // n x D standardized features
    std::vector<PoseDecomposition> anchor_poses;

    int n() const { return static_cast<int>(anchors.size()); }
    int ambient_dim() const { return static_cast<int>(feat_mean.size()); }
    int latent_dim() const { return static_cast<int>(latent_mean.cols()); }

    void rebuild_caches();
    VecX standardize(const VecX& values) const;
    VecX destandardize(const VecX& std_values) const;

    /// Ambient metric distance from a query to every anchor.
    VecX anchor_distances(const FeatureVector& query) const;
};

// ---------------------------------------------------------------------------
// Model terms (point evaluations, additive constants dropped)
// ---------------------------------------------------------------------------

/// Latent prior: -1/2 sum_i ( sigma |x_i|^2 + sum_j Ww_ij |x_i - x_j|^2
///                            - sum_j Wb_ij |x_i - x_j|^2 ).
double log_prior_latent(const MatX& latent, const SimilarityGraphs& graphs, double sigma);

/// Map prior: -1/2 ( |sum_i M_i|_F^2 + sum_ij (Ww - Wb)_ij |M_i - M_j|_F^2 ).
double log_prior_maps(const std::vector<MatX>& maps, const SimilarityGraphs& graphs);

/// Local linear reconstruction likelihood with signed within/between weights:
/// |sum_i y_i|^2 - 1/2 sum_ij Ww_ij w_w |D_ij|^2 + 1/2 sum_ij Wb_ij w_b |D_ij|^2,
/// D_ij = (y_i - y_j) - M_i (x_i - x_j). Rows of `features` are the y_i.
double log_likelihood(const MatX& features, const MatX& latent, const std::vector<MatX>& maps,
                      const SimilarityGraphs& graphs, double omega_w, double omega_b);

// ---------------------------------------------------------------------------
// Fitting and inference
// ---------------------------------------------------------------------------

/// Variational EM fit. Alternates Jacobi-style per-sample posterior updates
/// for the latent coordinates and linear maps with exact one-dimensional
/// M-step maximizations of sigma and the likelihood scale. The ELBO trace is
/// non-decreasing by construction (updates are accepted only when the bound
/// does not drop); a decrease beyond 1e-6 raises NumericalError.
TrainedManifold fit(const std::vector<FeatureVector>& features, const Hyperparams& hyper,
                    const SimilarityGraphs& graphs,
                    const MatX* ambient_distances = nullptr);

/// Training ELBO of a fitted manifold, as traced by fit.
double training_elbo(const TrainedManifold& m);

/// ELBO change when one latent posterior mean is replaced. Touches only the
/// terms involving that sample, so finite-difference stationarity checks run
/// in O(edges incident to the sample).
double training_elbo_latent_delta(const TrainedManifold& m, int sample, const VecX& new_mean);

struct EmbedResult {
    VecX latent;             // posterior mean, d
    VecX variance;           // diagonal posterior covariance, d
    std::vector<int> neighbor_ids;
    VecX weights;            // ambient kernel weights of the attachment edges
};

/// Out-of-sample posterior for a query feature vector: attaches the query to
/// its k nearest anchors under the articulated metric (labels ignored) with
/// Gaussian ambient weights and runs the single-point E-step holding all
/// training posteriors fixed. Throws NumericalError when the query is farther
/// than 5x the median kNN radius from every anchor.
EmbedResult embed_out_of_sample(const TrainedManifold& m, const FeatureVector& query);

struct Classification {
    ClassLabel label = ClassLabel::Unknown;
    double score = 0.0;  // fraction of P votes among the k nearest latents
};

/// k-nearest-neighbour vote among training latents (k = graphs.k);
/// label is P when the score reaches 0.5.
Classification classify(const TrainedManifold& m, const VecX& latent_query);

}  // namespace spineprog
