#include "spineprog/dpllvm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spineprog {

namespace {

struct PriorEdge {
    int j;
    double a;  // signed weight omega_w Ww - omega_b Wb
};

// Everything fixed during inference: standardized data, edge lists, spectra,
// and the spectral anchor the latent prior is centered on.
struct ModelView {
    const MatX* y = nullptr;   // n x D standardized, centered
    const MatX* x0 = nullptr;  // n x d latent prior mean
    std::vector<std::vector<PriorEdge>> prior_nbrs;
    std::vector<std::vector<int>> lik_nbrs;  // within-class edges
    double omega_w = 0.3;
    double beta = 0.0;
    double eps_y = 1e-6;
    VecX prior_eigs;
    VecX lik_eigs;
    int n = 0, D = 0, d = 0;
};

// Variational state: Gaussian posteriors plus the learned scales.
struct VarState {
    MatX m;               // n x d latent means
    MatX S;               // n x d latent variances
    std::vector<MatX> U;  // map means, D x d
    MatX vvar;            // n x d map column variances
    double sigma = 1.0;
    double like_scale = 1.0;
};

ModelView make_view(const MatX& y_std, const SimilarityGraphs& graphs, double omega_w,
                    double omega_b, int d, double eps_y) {
    ModelView view;
    view.y = &y_std;
    view.n = static_cast<int>(y_std.rows());
    view.D = static_cast<int>(y_std.cols());
    view.d = d;
    view.omega_w = omega_w;
    view.eps_y = eps_y;

    const MatX a_eff = graphs.effective_adjacency(omega_w, omega_b);
    view.prior_nbrs.resize(static_cast<size_t>(view.n));
    view.lik_nbrs.resize(static_cast<size_t>(view.n));
    for (int i = 0; i < view.n; ++i) {
        for (int j = 0; j < view.n; ++j) {
            if (j == i) continue;
            if (a_eff(i, j) != 0.0) view.prior_nbrs[static_cast<size_t>(i)].push_back({j, a_eff(i, j)});
            if (graphs.w_within(i, j) != 0.0) view.lik_nbrs[static_cast<size_t>(i)].push_back(j);
        }
    }

    const GraphLaplacian l_eff = laplacian(a_eff);
    Eigen::SelfAdjointEigenSolver<MatX> eig_prior(l_eff.laplacian, Eigen::EigenvaluesOnly);
    view.prior_eigs = eig_prior.eigenvalues();
    const double lam_min = view.prior_eigs.minCoeff();
    view.beta = lam_min < 1e-9 ? std::abs(lam_min) + 1e-9 : 0.0;

    const GraphLaplacian l_lik = laplacian(MatX(omega_w * graphs.w_within));
    Eigen::SelfAdjointEigenSolver<MatX> eig_lik(l_lik.laplacian, Eigen::EigenvaluesOnly);
    view.lik_eigs = eig_lik.eigenvalues();
    return view;
}

// E|D_ij|^2 for the directed edge i -> j (residual through map i), given the
// diagonal column norms diag_e(i, q) = |U_i col q|^2 + D v_iq.
double expected_edge_residual(const ModelView& view, const VarState& st, const MatX& diag_e,
                              int i, int j) {
    const VecX ebar = (st.m.row(j) - st.m.row(i)).transpose();
    const VecX v = (view.y->row(j) - view.y->row(i)).transpose();
    const VecX r = v - st.U[static_cast<size_t>(i)] * ebar;
    double quad = r.squaredNorm();
    for (int q = 0; q < view.d; ++q) {
        quad += diag_e(i, q) * (st.S(i, q) + st.S(j, q));
        quad += view.D * st.vvar(i, q) * ebar(q) * ebar(q);
    }
    return quad;
}

MatX map_col_sqnorms(const ModelView& view, const VarState& st) {
    MatX diag_e(view.n, view.d);
    for (int i = 0; i < view.n; ++i) {
        diag_e.row(i) = st.U[static_cast<size_t>(i)].colwise().squaredNorm();
        diag_e.row(i) += static_cast<double>(view.D) * st.vvar.row(i);
    }
    return diag_e;
}

double likelihood_quad(const ModelView& view, const VarState& st) {
    const MatX diag_e = map_col_sqnorms(view, st);
    double quad = 0.0;
    for (int i = 0; i < view.n; ++i) {
        for (int j : view.lik_nbrs[static_cast<size_t>(i)]) {
            quad += expected_edge_residual(view, st, diag_e, i, j);
        }
    }
    return quad;
}

// Evidence lower bound with additive constants independent of all optimized
// quantities dropped. Every update in fit is an ascent step on this value.
double elbo(const ModelView& view, const VarState& st) {
    const double sigma_eff = st.sigma + 2.0 * view.beta;

    const MatX dev = st.m - *view.x0;  // deviation from the prior anchor
    double ex2 = dev.squaredNorm() + st.S.sum();
    double x_pairs = 0.0;
    for (int i = 0; i < view.n; ++i) {
        const double si = st.S.row(i).sum();
        for (const auto& e : view.prior_nbrs[static_cast<size_t>(i)]) {
            x_pairs += e.a * ((dev.row(i) - dev.row(e.j)).squaredNorm() + si +
                              st.S.row(e.j).sum());
        }
    }
    double term_x = -0.5 * sigma_eff * ex2 - 0.5 * x_pairs;
    for (int k = 0; k < view.prior_eigs.size(); ++k) {
        term_x += 0.5 * view.d * std::log(sigma_eff + 2.0 * view.prior_eigs(k));
    }

    MatX u_sum = MatX::Zero(view.D, view.d);
    double u_sq = 0.0, v_sum_total = 0.0;
    VecX v_sums(view.n);
    for (int i = 0; i < view.n; ++i) {
        u_sum += st.U[static_cast<size_t>(i)];
        u_sq += st.U[static_cast<size_t>(i)].squaredNorm();
        v_sums(i) = view.D * st.vvar.row(i).sum();
        v_sum_total += v_sums(i);
    }
    double m_pairs = 0.0;
    for (int i = 0; i < view.n; ++i) {
        for (const auto& e : view.prior_nbrs[static_cast<size_t>(i)]) {
            m_pairs += e.a * ((st.U[static_cast<size_t>(i)] - st.U[static_cast<size_t>(e.j)]).squaredNorm() +
                              v_sums(i) + v_sums(e.j));
        }
    }
    const double term_m = -0.5 * (u_sum.squaredNorm() + v_sum_total) -
                          view.beta * (u_sq + v_sum_total) - 0.5 * m_pairs;

    double term_l = -0.5 * st.like_scale * view.omega_w * likelihood_quad(view, st);
    for (int k = 0; k < view.lik_eigs.size(); ++k) {
        term_l += 0.5 * view.D * std::log(view.eps_y + 2.0 * st.like_scale * view.lik_eigs(k));
    }

    const double entropy =
        0.5 * st.S.array().log().sum() + 0.5 * view.D * st.vvar.array().log().sum();

    return term_x + term_m + term_l + entropy;
}

// Exact block update of the latent posteriors given the map posteriors: the
// joint Gaussian over all latent means couples samples through the graph, so
// the stationary means solve one sparse SPD system (the within-likelihood
// coupling is far too strong for per-sample sweeps to mix through).
// Candidate means come back re-centered; the zero-mean gauge is itself an
// ascent direction of the sigma term.
void latent_block_update(const ModelView& view, const VarState& st, MatX& m_new, MatX& S_new) {
    const int n = view.n, d = view.d;
    std::vector<MatX> e_sym(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        e_sym[static_cast<size_t>(i)] =
            st.U[static_cast<size_t>(i)].transpose() * st.U[static_cast<size_t>(i)];
        e_sym[static_cast<size_t>(i)].diagonal() +=
            (static_cast<double>(view.D) * st.vvar.row(i)).transpose();
    }
    const double sigma_eff = st.sigma + 2.0 * view.beta;
    const double sw = st.like_scale * view.omega_w;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(n) * 32);
    std::vector<MatX> diag_block(static_cast<size_t>(n), MatX::Zero(d, d));
    VecX h = VecX::Zero(n * d);

    for (int i = 0; i < n; ++i) {
        diag_block[static_cast<size_t>(i)].diagonal().array() += sigma_eff;
        h.segment(i * d, d) += sigma_eff * view.x0->row(i).transpose();
        for (const auto& e : view.prior_nbrs[static_cast<size_t>(i)]) {
            diag_block[static_cast<size_t>(i)].diagonal().array() += 2.0 * e.a;
            h.segment(i * d, d) +=
                2.0 * e.a * (view.x0->row(i) - view.x0->row(e.j)).transpose();
            for (int l = 0; l < d; ++l) {
                trip.emplace_back(i * d + l, e.j * d + l, -2.0 * e.a);
            }
        }
        for (int j : view.lik_nbrs[static_cast<size_t>(i)]) {
            // Directed residual through map i contributes to both endpoints.
            const MatX& e_i = e_sym[static_cast<size_t>(i)];
            diag_block[static_cast<size_t>(i)] += sw * e_i;
            diag_block[static_cast<size_t>(j)] += sw * e_i;
            for (int r = 0; r < d; ++r) {
                for (int c = 0; c < d; ++c) {
                    trip.emplace_back(i * d + r, j * d + c, -sw * e_i(r, c));
                    trip.emplace_back(j * d + r, i * d + c, -sw * e_i(r, c));
                }
            }
            const VecX uy = st.U[static_cast<size_t>(i)].transpose() *
                            (view.y->row(i) - view.y->row(j)).transpose();
            h.segment(i * d, d) += sw * uy;
            h.segment(j * d, d) -= sw * uy;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < d; ++r) {
            for (int c = 0; c < d; ++c) {
                if (diag_block[static_cast<size_t>(i)](r, c) != 0.0) {
                    trip.emplace_back(i * d + r, i * d + c, diag_block[static_cast<size_t>(i)](r, c));
                }
            }
        }
    }
    Eigen::SparseMatrix<double> p(n * d, n * d);
    p.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(p);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("latent update: sparse factorization failed");
    }
    const VecX sol = solver.solve(h);
    m_new.resize(n, d);
    S_new.resize(n, d);
    for (int i = 0; i < n; ++i) {
        m_new.row(i) = sol.segment(i * d, d).transpose();
        S_new.row(i) =
            diag_block[static_cast<size_t>(i)].diagonal().cwiseInverse().transpose();
    }
    m_new.rowwise() -= m_new.colwise().mean();
}

// Jacobi sweep over map posteriors (rows decouple; one d x d factorization
// per sample serves all D rows).
void map_sweep(const ModelView& view, const VarState& st, std::vector<MatX>& u_new, MatX& v_new) {
    MatX u_total = MatX::Zero(view.D, view.d);
    for (const auto& u : st.U) u_total += u;
    u_new.assign(static_cast<size_t>(view.n), MatX());
    v_new.resize(view.n, view.d);
    const double sw = st.like_scale * view.omega_w;
    for (int i = 0; i < view.n; ++i) {
        MatX p = MatX::Zero(view.d, view.d);
        MatX rhs = -(u_total - st.U[static_cast<size_t>(i)]);  // gauge term
        double scalar = 1.0 + 2.0 * view.beta;
        for (const auto& e : view.prior_nbrs[static_cast<size_t>(i)]) {
            scalar += 2.0 * e.a;
            rhs += 2.0 * e.a * st.U[static_cast<size_t>(e.j)];
        }
        for (int j : view.lik_nbrs[static_cast<size_t>(i)]) {
            const VecX ebar = (st.m.row(j) - st.m.row(i)).transpose();
            MatX suu = ebar * ebar.transpose();
            suu.diagonal() += (st.S.row(i) + st.S.row(j)).transpose();
            p += sw * suu;
            rhs += sw * (view.y->row(j) - view.y->row(i)).transpose() * ebar.transpose();
        }
        p.diagonal().array() += scalar;
        const auto ldlt = p.ldlt();
        u_new[static_cast<size_t>(i)] = ldlt.solve(rhs.transpose()).transpose();
        v_new.row(i) = p.diagonal().cwiseInverse().transpose();
    }
}

// Accept a sweep only if the bound does not drop; when a full Jacobi step
// overshoots, damp it toward the previous state.
template <typename Apply>
bool guarded_accept(const ModelView& view, VarState& st, double& cur_elbo, Apply&& apply) {
    const VarState backup = st;
    double alpha = 1.0;
    for (int attempt = 0; attempt < 24; ++attempt) {
        apply(backup, alpha, st);
        const double e = elbo(view, st);
        // The absolute tolerance stays well inside the 1e-6 trace slack.
        if (std::isfinite(e) && e >= cur_elbo - 1e-7) {
            cur_elbo = e;
            return true;
        }
        alpha *= 0.5;
    }
    st = backup;
    return false;
}

void mstep_sigma(const ModelView& view, VarState& st) {
    const double ex2 = (st.m - *view.x0).squaredNorm() + st.S.sum();
    if (!(ex2 > 0)) return;
    const double target = ex2 / view.d;
    auto f = [&](double sigma_eff) {
        double s = 0.0;
        for (int k = 0; k < view.prior_eigs.size(); ++k) {
            s += 1.0 / (sigma_eff + 2.0 * view.prior_eigs(k));
        }
        return s - target;
    };
    const double floor_eff = 2.0 * view.beta + 1e-10;
    double lo = floor_eff, hi = std::max(1.0, floor_eff);
    if (f(lo) <= 0.0) {
        st.sigma = 1e-10;
        return;
    }
    while (f(hi) > 0.0 && hi < 1e12) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    st.sigma = std::max(0.5 * (lo + hi) - 2.0 * view.beta, 1e-10);
}

void mstep_scale(const ModelView& view, VarState& st) {
    const double qw = view.omega_w * likelihood_quad(view, st);
    if (!(qw > 0) || view.lik_eigs.maxCoeff() <= 0.0) return;
    auto fprime = [&](double s) {
        double acc = 0.0;
        for (int k = 0; k < view.lik_eigs.size(); ++k) {
            const double nu = view.lik_eigs(k);
            acc += view.D * nu / (view.eps_y + 2.0 * s * nu);
        }
        return acc - 0.5 * qw;
    };
    double lo = 1e-9, hi = 1e9;
    if (fprime(lo) <= 0.0) {
        st.like_scale = lo;
        return;
    }
    if (fprime(hi) >= 0.0) {
        st.like_scale = hi;
        return;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);
        (fprime(mid) > 0.0 ? lo : hi) = mid;
    }
    st.like_scale = std::sqrt(lo * hi);
}

MatX standardize_features(const std::vector<FeatureVector>& features, VecX& mean, VecX& scale) {
    const int n = static_cast<int>(features.size());
    const int D = static_cast<int>(features.front().values.size());
    MatX y(n, D);
    for (int i = 0; i < n; ++i) y.row(i) = features[static_cast<size_t>(i)].values.transpose();
    mean = y.colwise().mean().transpose();
    y.rowwise() -= mean.transpose();
    scale = (y.array().square().colwise().mean()).sqrt().transpose();
    for (int c = 0; c < D; ++c) {
        // Coordinates with no variation carry no information; leave them at
        // unit scale instead of amplifying noise.
        if (scale(c) < 1e-12) scale(c) = 1.0;
    }
    y.array().rowwise() /= scale.transpose().array();
    return y;
}

VecX normalized_mode(VecX col) {
    int arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;  // deterministic sign
    col.array() -= col.mean();
    const double sd = std::sqrt(col.squaredNorm() / col.size());
    if (sd > 1e-12) col /= sd;
    return col;
}

// Spectral warm start. The first column is the most repulsive mode of the
// signed effective Laplacian (the discriminant contrast the EM keeps, since
// the PSD shift makes that mode essentially free); the rest are the smallest
// nonzero within-class Laplacian modes carrying the local geometry.
MatX spectral_init(const SimilarityGraphs& graphs, double omega_w, double omega_b, int d) {
    const int n = graphs.size();
    MatX x(n, d);

    const GraphLaplacian signed_lap = laplacian(graphs.effective_adjacency(omega_w, omega_b));
    Eigen::SelfAdjointEigenSolver<MatX> signed_eig(signed_lap.laplacian);
    int lead = 0;
    for (; lead < n; ++lead) {
        VecX col = signed_eig.eigenvectors().col(lead);
        col.array() -= col.mean();
        if (col.norm() > 1e-9) break;  // skip the constant gauge mode
    }
    if (lead >= n) throw ValidationError("fit: degenerate effective adjacency");
    x.col(0) = normalized_mode(signed_eig.eigenvectors().col(lead));

    if (d > 1) {
        const GraphLaplacian within_lap = laplacian(graphs.w_within);
        Eigen::SelfAdjointEigenSolver<MatX> within_eig(within_lap.laplacian);
        const VecX& vals = within_eig.eigenvalues();
        int taken = 1;
        for (int k = 0; k < n && taken < d; ++k) {
            if (vals(k) <= 1e-9) continue;
            x.col(taken++) = normalized_mode(within_eig.eigenvectors().col(k));
        }
        if (taken < d) {
            throw ValidationError(
                "fit: within-class graph has too few nonzero Laplacian modes for d=" +
                std::to_string(d));
        }
    }
    return x;
}

void init_maps(const ModelView& view, VarState& st) {
    st.U.assign(static_cast<size_t>(view.n), MatX::Zero(view.D, view.d));
    for (int i = 0; i < view.n; ++i) {
        const auto& nbrs = view.lik_nbrs[static_cast<size_t>(i)];
        if (nbrs.empty()) continue;
        const int mcount = static_cast<int>(nbrs.size());
        MatX xd(view.d, mcount), yd(view.D, mcount);
        for (int c = 0; c < mcount; ++c) {
            const int j = nbrs[static_cast<size_t>(c)];
            xd.col(c) = (st.m.row(j) - st.m.row(i)).transpose();
            yd.col(c) = (view.y->row(j) - view.y->row(i)).transpose();
        }
        MatX gram = xd * xd.transpose();
        gram.diagonal().array() += 1e-6;
        st.U[static_cast<size_t>(i)] = gram.ldlt().solve(xd * yd.transpose()).transpose();
    }
}

ModelView view_from_manifold(const TrainedManifold& m) {
    if (m.std_anchors.size() == 0) {
        throw NumericalError("manifold caches not built; call rebuild_caches()");
    }
    ModelView view = make_view(m.std_anchors, m.graphs, m.hyper.omega_w, m.hyper.omega_b,
                               m.latent_dim(), m.eps_y);
    view.x0 = &m.latent_prior_mean;
    // Trust the stored spectra/shift so the ELBO matches the traced one.
    view.beta = m.beta_shift;
    if (m.prior_eigs.size() > 0) view.prior_eigs = m.prior_eigs;
    if (m.lik_eigs.size() > 0) view.lik_eigs = m.lik_eigs;
    return view;
}

VarState state_from_manifold(const TrainedManifold& m) {
    VarState st;
    st.m = m.latent_mean;
    st.S = m.latent_var;
    st.U = m.map_mean;
    st.vvar = m.map_var;
    st.sigma = m.hyper.sigma;
    st.like_scale = m.hyper.like_scale;
    return st;
}

}  // namespace

void Hyperparams::validate() const {
    if (!(sigma > 0)) throw ValidationError("hyperparams: sigma must be > 0");
    if (omega_w < 0 || omega_b < 0) throw ValidationError("hyperparams: omega weights must be >= 0");
    if (latent_dim < 1) throw ValidationError("hyperparams: latent_dim must be >= 1");
    if (max_iters < 1) throw ValidationError("hyperparams: max_iters must be >= 1");
    if (!(elbo_rel_tol > 0)) throw ValidationError("hyperparams: elbo_rel_tol must be > 0");
    if (!(like_scale > 0)) throw ValidationError("hyperparams: like_scale must be > 0");
}

void TrainedManifold::rebuild_caches() {
    const int nn = n();
    std_anchors.resize(nn, ambient_dim());
    for (int i = 0; i < nn; ++i) {
        std_anchors.row(i) = standardize(anchors[static_cast<size_t>(i)].values).transpose();
    }
    anchor_poses.clear();
    if (mode_has_poses(mode)) {
        anchor_poses.reserve(static_cast<size_t>(nn));
        for (const auto& a : anchors) anchor_poses.push_back(decompose_poses(a));
    }
}

VecX TrainedManifold::standardize(const VecX& values) const {
    return (values - feat_mean).cwiseQuotient(feat_scale);
}

VecX TrainedManifold::destandardize(const VecX& std_values) const {
    return std_values.cwiseProduct(feat_scale) + feat_mean;
}

VecX TrainedManifold::anchor_distances(const FeatureVector& query) const {
    if (query.mode != mode) {
        throw ValidationError("query feature mode does not match the trained manifold");
    }
    VecX dist(n());
    if (mode == FeatureMode::Shape) {
        for (int i = 0; i < n(); ++i) {
            dist(i) = (query.values - anchors[static_cast<size_t>(i)].values).norm();
        }
        return dist;
    }
    const PoseDecomposition qd = decompose_poses(query);
    for (int i = 0; i < n(); ++i) {
        dist(i) = articulated_distance(qd, anchor_poses[static_cast<size_t>(i)]);
    }
    return dist;
}

double log_prior_latent(const MatX& latent, const SimilarityGraphs& graphs, double sigma) {
    const int n = static_cast<int>(latent.rows());
    if (graphs.size() != n) throw ValidationError("log_prior_latent: size mismatch");
    double acc = sigma * latent.squaredNorm();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double w = graphs.w_within(i, j) - graphs.w_between(i, j);
            if (w != 0.0) acc += w * (latent.row(i) - latent.row(j)).squaredNorm();
        }
    }
    return -0.5 * acc;
}

double log_prior_maps(const std::vector<MatX>& maps, const SimilarityGraphs& graphs) {
    const int n = static_cast<int>(maps.size());
    if (graphs.size() != n) throw ValidationError("log_prior_maps: size mismatch");
    MatX sum = MatX::Zero(maps.front().rows(), maps.front().cols());
    for (const auto& m : maps) sum += m;
    double acc = sum.squaredNorm();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double w = graphs.w_within(i, j) - graphs.w_between(i, j);
            if (w != 0.0) {
                acc += w * (maps[static_cast<size_t>(i)] - maps[static_cast<size_t>(j)]).squaredNorm();
            }
        }
    }
    return -0.5 * acc;
}

double log_likelihood(const MatX& features, const MatX& latent, const std::vector<MatX>& maps,
                      const SimilarityGraphs& graphs, double omega_w, double omega_b) {
    const int n = static_cast<int>(features.rows());
    if (graphs.size() != n || latent.rows() != n || static_cast<int>(maps.size()) != n) {
        throw ValidationError("log_likelihood: size mismatch");
    }
    double acc = features.colwise().sum().squaredNorm();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double ww = graphs.w_within(i, j);
            const double wb = graphs.w_between(i, j);
            if (ww == 0.0 && wb == 0.0) continue;
            const VecX delta = (features.row(i) - features.row(j)).transpose() -
                               maps[static_cast<size_t>(i)] * (latent.row(i) - latent.row(j)).transpose();
            const double sq = delta.squaredNorm();
            acc += -0.5 * ww * omega_w * sq + 0.5 * wb * omega_b * sq;
        }
    }
    return acc;
}

TrainedManifold fit(const std::vector<FeatureVector>& features, const Hyperparams& hyper,
                    const SimilarityGraphs& graphs, const MatX* ambient_distances) {
    hyper.validate();
    const int n = static_cast<int>(features.size());
    if (n == 0) throw ValidationError("fit: no features");
    if (graphs.size() != n) throw ValidationError("fit: graphs built on a different sample set");
    if (n <= hyper.latent_dim) throw ValidationError("fit: need more samples than latent dimensions");
    for (const auto& f : features) {
        if (f.mode != features.front().mode) throw ValidationError("fit: mixed feature modes");
    }

    TrainedManifold out;
    out.hyper = hyper;
    out.mode = features.front().mode;
    out.graphs = graphs;
    out.anchors = features;
    out.anchor_flexibility.assign(static_cast<size_t>(n), std::numeric_limits<double>::quiet_NaN());

    MatX y_std = standardize_features(features, out.feat_mean, out.feat_scale);
    out.latent_prior_mean = spectral_init(graphs, hyper.omega_w, hyper.omega_b, hyper.latent_dim);
    ModelView view = make_view(y_std, graphs, hyper.omega_w, hyper.omega_b, hyper.latent_dim,
                               out.eps_y);
    view.x0 = &out.latent_prior_mean;

    VarState st;
    st.sigma = hyper.sigma;
    st.like_scale = hyper.like_scale;
    st.m = out.latent_prior_mean;
    st.m.rowwise() -= st.m.colwise().mean();
    st.S = MatX::Constant(n, hyper.latent_dim, 1e-2);
    st.vvar = MatX::Constant(n, hyper.latent_dim, 1e-2);
    init_maps(view, st);

    double cur = elbo(view, st);
    if (!std::isfinite(cur)) throw NumericalError("fit: non-finite initial ELBO");
    std::vector<double> trace{cur};

    auto blend_latent = [](const VarState& base, double alpha, VarState& stx, const MatX& m_new,
                           const MatX& s_new) {
        stx.m = base.m + alpha * (m_new - base.m);
        stx.S = base.S + alpha * (s_new - base.S);
    };

    int iter = 0;
    for (; iter < hyper.max_iters; ++iter) {
        const double prev = cur;

        MatX m_new, s_new;
        latent_block_update(view, st, m_new, s_new);
        guarded_accept(view, st, cur, [&](const VarState& base, double alpha, VarState& stx) {
            blend_latent(base, alpha, stx, m_new, s_new);
        });

        std::vector<MatX> u_new;
        MatX v_new;
        map_sweep(view, st, u_new, v_new);
        guarded_accept(view, st, cur, [&](const VarState& base, double alpha, VarState& stx) {
            for (int i = 0; i < view.n; ++i) {
                stx.U[static_cast<size_t>(i)] =
                    base.U[static_cast<size_t>(i)] +
                    alpha * (u_new[static_cast<size_t>(i)] - base.U[static_cast<size_t>(i)]);
            }
            stx.vvar = base.vvar + alpha * (v_new - base.vvar);
        });

        if (hyper.optimize_sigma) mstep_sigma(view, st);
        if (hyper.optimize_scale) mstep_scale(view, st);
        cur = elbo(view, st);

        if (!std::isfinite(cur)) throw NumericalError("fit: non-finite ELBO at iteration " +
                                                      std::to_string(iter + 1));
        if (cur < trace.back() - 1e-6) {
            throw NumericalError("fit: ELBO decreased by " + std::to_string(trace.back() - cur) +
                                 " at iteration " + std::to_string(iter + 1));
        }
        trace.push_back(cur);
        if (std::abs(cur - prev) <= hyper.elbo_rel_tol * (1.0 + std::abs(cur))) break;
    }

    // Polish sweeps drive the joint fixed point tight so the per-sample
    // stationarity conditions hold at the reported posterior means.
    for (int sweep = 0; sweep < 200; ++sweep) {
        MatX m_new, s_new;
        latent_block_update(view, st, m_new, s_new);
        const double move = (m_new - st.m).cwiseAbs().maxCoeff();
        guarded_accept(view, st, cur, [&](const VarState& base, double alpha, VarState& stx) {
            blend_latent(base, alpha, stx, m_new, s_new);
        });
        std::vector<MatX> u_new;
        MatX v_new;
        map_sweep(view, st, u_new, v_new);
        guarded_accept(view, st, cur, [&](const VarState& base, double alpha, VarState& stx) {
            for (int i = 0; i < view.n; ++i) {
                stx.U[static_cast<size_t>(i)] =
                    base.U[static_cast<size_t>(i)] +
                    alpha * (u_new[static_cast<size_t>(i)] - base.U[static_cast<size_t>(i)]);
            }
            stx.vvar = base.vvar + alpha * (v_new - base.vvar);
        });
        trace.push_back(cur);
        if (move < 1e-8) break;
    }

    out.hyper.sigma = st.sigma;
    out.hyper.like_scale = st.like_scale;
    out.latent_mean = st.m;
    out.latent_var = st.S;
    out.map_mean = std::move(st.U);
    out.map_var = st.vvar;
    out.elbo_trace = std::move(trace);
    out.beta_shift = view.beta;
    out.prior_eigs = view.prior_eigs;
    out.lik_eigs = view.lik_eigs;
    out.rebuild_caches();

    // Guard statistics: ambient kNN radius and latent spacings.
    {
        MatX dist;
        if (ambient_distances) {
            dist = *ambient_distances;
        } else {
            dist = pairwise_distances(features);
        }
        VecX radius(n);
        for (int i = 0; i < n; ++i) {
            std::vector<double> row;
            row.reserve(static_cast<size_t>(n - 1));
            for (int j = 0; j < n; ++j) {
                if (j != i) row.push_back(dist(i, j));
            }
            std::nth_element(row.begin(), row.begin() + (graphs.k - 1), row.end());
            radius(i) = row[static_cast<size_t>(graphs.k - 1)];
        }
        std::vector<double> rad(radius.data(), radius.data() + n);
        std::nth_element(rad.begin(), rad.begin() + n / 2, rad.end());
        out.median_knn_radius_ambient = rad[static_cast<size_t>(n / 2)];
    }
    {
        std::vector<double> nn_all, nn_within;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            double best_within = best;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                const double dl = (out.latent_mean.row(i) - out.latent_mean.row(j)).norm();
                best = std::min(best, dl);
                if (features[static_cast<size_t>(i)].label == features[static_cast<size_t>(j)].label) {
                    best_within = std::min(best_within, dl);
                }
            }
            nn_all.push_back(best);
            if (std::isfinite(best_within)) nn_within.push_back(best_within);
        }
        auto median = [](std::vector<double>& v) {
            if (v.empty()) return 0.0;
            std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size()) / 2, v.end());
            return v[v.size() / 2];
        };
        out.median_nn_latent = median(nn_all);
        out.median_nn_latent_within = median(nn_within);
    }
    out.epsilon_scale = std::numeric_limits<double>::quiet_NaN();
    out.self_recon_rms_median = std::numeric_limits<double>::quiet_NaN();
    return out;
}

double training_elbo(const TrainedManifold& m) {
    const ModelView view = view_from_manifold(m);
    const VarState st = state_from_manifold(m);
    return elbo(view, st);
}

double training_elbo_latent_delta(const TrainedManifold& m, int sample, const VecX& new_mean) {
    if (sample < 0 || sample >= m.n()) throw ValidationError("sample index out of range");
    if (new_mean.size() != m.latent_dim()) throw ValidationError("latent mean has wrong dimension");
    const ModelView view = view_from_manifold(m);
    VarState st = state_from_manifold(m);
    const MatX diag_e = map_col_sqnorms(view, st);

    const double sigma_eff = st.sigma + 2.0 * view.beta;
    const int i = sample;

    auto local_terms = [&]() {
        double acc = -0.5 * sigma_eff * (st.m.row(i) - view.x0->row(i)).squaredNorm();
        for (const auto& e : view.prior_nbrs[static_cast<size_t>(i)]) {
            acc += -e.a * ((st.m.row(i) - view.x0->row(i)) -
                           (st.m.row(e.j) - view.x0->row(e.j)))
                              .squaredNorm();
        }
        const double sw = st.like_scale * view.omega_w;
        for (int j : view.lik_nbrs[static_cast<size_t>(i)]) {
            acc += -0.5 * sw * expected_edge_residual(view, st, diag_e, i, j);
            acc += -0.5 * sw * expected_edge_residual(view, st, diag_e, j, i);
        }
        return acc;
    };

    const double before = local_terms();
    st.m.row(i) = new_mean.transpose();
    const double after = local_terms();
    return after - before;
}

EmbedResult embed_out_of_sample(const TrainedManifold& m, const FeatureVector& query) {
    const int n = m.n();
    const int d = m.latent_dim();
    const int D = m.ambient_dim();
    const int k = std::min(m.graphs.k, n);

    const VecX dist = m.anchor_distances(query);
    if (dist.minCoeff() > 5.0 * m.median_knn_radius_ambient) {
        throw NumericalError(
            "embed_out_of_sample: query is farther than 5x the median kNN radius from every "
            "anchor (out of distribution)");
    }
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return dist(a) != dist(b) ? dist(a) < dist(b) : a < b;
    });
    order.resize(static_cast<size_t>(k));

    // Absolute bandwidth (the training kNN radius), so attachment strength
    // and hence posterior confidence genuinely decay with distance.
    const double h = std::max(m.median_knn_radius_ambient, 1e-12);
    VecX w(k);
    for (int c = 0; c < k; ++c) {
        const double r = dist(order[static_cast<size_t>(c)]) / h;
        w(c) = std::exp(-0.5 * r * r);
    }

    const VecX yq = m.standardize(query.values);
    const double sw = m.hyper.like_scale * m.hyper.omega_w;
    const double sigma_eff = m.hyper.sigma + 2.0 * m.beta_shift;

    // Per-anchor constants.
    std::vector<MatX> e_sym(static_cast<size_t>(k));
    std::vector<VecX> dy(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        const int j = order[static_cast<size_t>(c)];
        e_sym[static_cast<size_t>(c)] =
            m.map_mean[static_cast<size_t>(j)].transpose() * m.map_mean[static_cast<size_t>(j)];
        e_sym[static_cast<size_t>(c)].diagonal() +=
            (static_cast<double>(D) * m.map_var.row(j)).transpose();
        dy[static_cast<size_t>(c)] = yq - m.std_anchors.row(j).transpose();
    }
    MatX u_total = MatX::Zero(D, d);
    for (const auto& u : m.map_mean) u_total += u;

    // Initial latent and prior anchor: kernel-weighted neighbour means.
    VecX x = VecX::Zero(d);
    VecX x0_q = VecX::Zero(d);
    {
        double wsum = 0.0;
        for (int c = 0; c < k; ++c) {
            x += w(c) * m.latent_mean.row(order[static_cast<size_t>(c)]).transpose();
            x0_q += w(c) * m.latent_prior_mean.row(order[static_cast<size_t>(c)]).transpose();
            wsum += w(c);
        }
        x /= wsum;
        x0_q /= wsum;
    }

    MatX u_q = MatX::Zero(D, d);
    VecX vvar_q = VecX::Constant(d, 1e-2);
    VecX s_q = VecX::Constant(d, 1e-2);

    for (int it = 0; it < 60; ++it) {
        // Map update for the query node.
        {
            MatX p = MatX::Zero(d, d);
            MatX rhs = -u_total;
            double scalar = 1.0 + 2.0 * m.beta_shift;
            for (int c = 0; c < k; ++c) {
                const int j = order[static_cast<size_t>(c)];
                const VecX ebar = m.latent_mean.row(j).transpose() - x;
                MatX suu = ebar * ebar.transpose();
                suu.diagonal() += (m.latent_var.row(j).transpose() + s_q);
                p += sw * w(c) * suu;
                rhs += sw * w(c) * (-dy[static_cast<size_t>(c)]) * ebar.transpose();
                scalar += 2.0 * m.hyper.omega_w * w(c);
                rhs += 2.0 * m.hyper.omega_w * w(c) * m.map_mean[static_cast<size_t>(j)];
            }
            p.diagonal().array() += scalar;
            const auto ldlt = p.ldlt();
            u_q = ldlt.solve(rhs.transpose()).transpose();
            vvar_q = p.diagonal().cwiseInverse();
        }
        // Latent update for the query node.
        MatX e_q = u_q.transpose() * u_q;
        e_q.diagonal() += static_cast<double>(D) * vvar_q;
        MatX p = MatX::Zero(d, d);
        VecX hvec = sigma_eff * x0_q;
        double scalar = sigma_eff;
        for (int c = 0; c < k; ++c) {
            const int j = order[static_cast<size_t>(c)];
            const MatX e_pair = e_q + e_sym[static_cast<size_t>(c)];
            p += sw * w(c) * e_pair;
            hvec += sw * w(c) *
                    (e_pair * m.latent_mean.row(j).transpose() +
                     (u_q + m.map_mean[static_cast<size_t>(j)]).transpose() * dy[static_cast<size_t>(c)]);
            scalar += 2.0 * m.hyper.omega_w * w(c);
            hvec += 2.0 * m.hyper.omega_w * w(c) *
                    (m.latent_mean.row(j).transpose() + x0_q -
                     m.latent_prior_mean.row(j).transpose());
        }
        p.diagonal().array() += scalar;
        const VecX x_new = p.ldlt().solve(hvec);
        s_q = p.diagonal().cwiseInverse();
        const double move = (x_new - x).norm();
        x = x_new;
        if (move < 1e-9) break;
    }

    EmbedResult res;
    res.latent = x;
    res.variance = s_q;
    res.neighbor_ids = order;
    res.weights = w;
    return res;
}

Classification classify(const TrainedManifold& m, const VecX& latent_query) {
    if (latent_query.size() != m.latent_dim()) {
        throw ValidationError("classify: latent query has wrong dimension");
    }
    const int n = m.n();
    const int k = std::min(m.graphs.k, n);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> dist(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        dist[static_cast<size_t>(i)] = (m.latent_mean.row(i).transpose() - latent_query).norm();
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return dist[static_cast<size_t>(a)] != dist[static_cast<size_t>(b)]
                   ? dist[static_cast<size_t>(a)] < dist[static_cast<size_t>(b)]
                   : a < b;
    });
    int votes_p = 0;
    for (int c = 0; c < k; ++c) {
        if (m.graphs.labels[static_cast<size_t>(order[static_cast<size_t>(c)])] == ClassLabel::P) {
            ++votes_p;
        }
    }
    Classification res;
    res.score = static_cast<double>(votes_p) / k;
    res.label = res.score >= 0.5 ? ClassLabel::P : ClassLabel::NP;
    return res;
}

}  // namespace spineprog
