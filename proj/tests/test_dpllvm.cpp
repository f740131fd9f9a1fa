#include <doctest.h>

#include "spineprog/cohort.hpp"
#include "spineprog/dpllvm.hpp"
#include "support/fixtures.hpp"

#include <random>

using namespace spineprog;
using namespace spineprog::test;

namespace {

SimilarityGraphs two_node_graph(bool within_edge) {
    SimilarityGraphs g;
    g.k = 1;
    g.labels = {ClassLabel::P, within_edge ? ClassLabel::P : ClassLabel::NP};
    g.w_within = MatX::Zero(2, 2);
    g.w_between = MatX::Zero(2, 2);
    if (within_edge) {
        g.w_within(0, 1) = g.w_within(1, 0) = 1.0;
    } else {
        g.w_between(0, 1) = g.w_between(1, 0) = 1.0;
    }
    return g;
}

// Small separable two-cluster feature set for fit tests: classes displaced in
// feature space, a few visits per patient.
std::vector<FeatureVector> cluster_features(int n_patients, std::uint64_t seed) {
    CohortConfig cfg = small_cohort_config(n_patients, seed);
    return cohort_features(generate_cohort(cfg), FeatureMode::ShapePoses);
}

TrainedManifold fit_small(int n_patients, int d, std::uint64_t seed, int k = 5) {
    const std::vector<FeatureVector> features = cluster_features(n_patients, seed);
    const SimilarityGraphs graphs = build_graphs(features, k);
    Hyperparams hyper;
    hyper.latent_dim = d;
    hyper.max_iters = 60;
    hyper.elbo_rel_tol = 1e-8;
    return fit(features, hyper, graphs);
}

}  // namespace

TEST_CASE("log_prior_latent hand-expanded values") {
    SimilarityGraphs g = two_node_graph(true);
    MatX x(2, 1);
    x << 0.0, 1.0;
    // sigma |x|^2 terms: 0 + 1; within double sum counts the edge twice: 2.
    CHECK(log_prior_latent(x, g, 1.0) == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(log_prior_latent(MatX::Zero(2, 1), g, 1.0) == 0.0);

    // Flipping the edge into the between graph flips the quadratic's sign.
    SimilarityGraphs gb = two_node_graph(false);
    CHECK(log_prior_latent(x, gb, 1.0) == doctest::Approx(-0.5 + 1.0).epsilon(1e-12));
}

TEST_CASE("log_prior_maps hand-expanded values") {
    SimilarityGraphs g = two_node_graph(true);
    std::vector<MatX> maps(2, MatX::Zero(3, 2));
    CHECK(log_prior_maps(maps, g) == 0.0);

    // Opposite maps with unit Frobenius difference and a single within edge:
    // the sum term vanishes and the difference term contributes -1/2 * 2 * 1.
    maps[0] = MatX::Zero(3, 2);
    maps[1] = MatX::Zero(3, 2);
    maps[0](0, 0) = 0.5;
    maps[1](0, 0) = -0.5;
    CHECK(log_prior_maps(maps, g) == doctest::Approx(-1.0).epsilon(1e-12));

    // Equal nonzero maps, no edges: only |sum M|^2 remains.
    SimilarityGraphs g0 = two_node_graph(true);
    g0.w_within.setZero();
    std::vector<MatX> eq(2, MatX::Zero(3, 2));
    eq[0](1, 1) = 2.0;
    eq[1](1, 1) = 2.0;
    CHECK(log_prior_maps(eq, g0) == doctest::Approx(-0.5 * 16.0).epsilon(1e-12));
}

TEST_CASE("log_likelihood against a brute-force double loop") {
    std::mt19937_64 rng(91);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 6, D = 4, d = 2;
    MatX y(n, D), x(n, d);
    std::vector<MatX> maps;
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < D; ++c) y(i, c) = u(rng);
        for (int c = 0; c < d; ++c) x(i, c) = u(rng);
        MatX m(D, d);
        for (int r = 0; r < D; ++r) {
            for (int c = 0; c < d; ++c) m(r, c) = u(rng);
        }
        maps.push_back(std::move(m));
    }
    SimilarityGraphs g;
    g.k = 2;
    g.labels.assign(n, ClassLabel::P);
    for (int i = 0; i < n / 2; ++i) g.labels[static_cast<size_t>(i)] = ClassLabel::NP;
    g.w_within = MatX::Zero(n, n);
    g.w_between = MatX::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (u(rng) > 0.0) continue;
            auto& target = g.labels[static_cast<size_t>(i)] == g.labels[static_cast<size_t>(j)]
                               ? g.w_within
                               : g.w_between;
            target(i, j) = target(j, i) = 1.0;
        }
    }

    const double omega_w = 0.3, omega_b = 0.7;
    double ref = y.colwise().sum().squaredNorm();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const VecX delta =
                (y.row(i) - y.row(j)).transpose() - maps[static_cast<size_t>(i)] * (x.row(i) - x.row(j)).transpose();
            ref += -0.5 * g.w_within(i, j) * omega_w * delta.squaredNorm() +
                   0.5 * g.w_between(i, j) * omega_b * delta.squaredNorm();
        }
    }
    CHECK(log_likelihood(y, x, maps, g, omega_w, omega_b) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("log_likelihood scales linearly in the within weight") {
    // With no between edges and centered features the value is pure within
    // penalty, linear in omega_w.
    std::mt19937_64 rng(93);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 4, D = 3, d = 2;
    MatX y(n, D), x(n, d);
    std::vector<MatX> maps(static_cast<size_t>(n), MatX::Zero(D, d));
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < D; ++c) y(i, c) = u(rng);
        for (int c = 0; c < d; ++c) x(i, c) = u(rng);
    }
    y.rowwise() -= y.colwise().mean();
    SimilarityGraphs g;
    g.k = 1;
    g.labels.assign(n, ClassLabel::P);
    g.w_within = MatX::Zero(n, n);
    g.w_between = MatX::Zero(n, n);
    g.w_within(0, 1) = g.w_within(1, 0) = 1.0;
    g.w_within(2, 3) = g.w_within(3, 2) = 1.0;
    const double v1 = log_likelihood(y, x, maps, g, 0.4, 0.7);
    const double v2 = log_likelihood(y, x, maps, g, 0.8, 0.7);
    CHECK(v2 == doctest::Approx(2.0 * v1).epsilon(1e-12));
}

TEST_CASE("perfect local linear structure zeroes the within penalty") {
    // y = A x exactly, common map A, within edges only: residuals vanish.
    const int n = 5, D = 3, d = 2;
    MatX a(D, d);
    a << 1, 0, 0, 1, 1, 1;
    MatX x(n, d);
    x << 0, 0, 1, 0, 0, 1, 1, 1, 2, 1;
    MatX y = x * a.transpose();
    std::vector<MatX> maps(static_cast<size_t>(n), a);
    SimilarityGraphs g;
    g.k = 2;
    g.labels.assign(n, ClassLabel::P);
    g.w_within = MatX::Ones(n, n) - MatX::Identity(n, n);
    g.w_between = MatX::Zero(n, n);
    const double value = log_likelihood(y, x, maps, g, 0.3, 0.7);
    CHECK(value == doctest::Approx(y.colwise().sum().squaredNorm()).epsilon(1e-9));
}

TEST_CASE("fit produces a monotone ELBO trace and separates the classes") {
    const TrainedManifold m = fit_small(20, 2, 1234);

    for (size_t i = 1; i < m.elbo_trace.size(); ++i) {
        CHECK(m.elbo_trace[i] >= m.elbo_trace[i - 1] - 1e-6);
    }
    // Centering gauge.
    CHECK(m.latent_mean.colwise().mean().cwiseAbs().maxCoeff() < 1e-9);

    // 1-NN classification of training latents by label.
    int correct = 0;
    for (int i = 0; i < m.n(); ++i) {
        double best = 1e300;
        int arg = -1;
        for (int j = 0; j < m.n(); ++j) {
            if (j == i) continue;
            const double dl = (m.latent_mean.row(i) - m.latent_mean.row(j)).norm();
            if (dl < best) {
                best = dl;
                arg = j;
            }
        }
        if (m.anchors[static_cast<size_t>(arg)].label == m.anchors[static_cast<size_t>(i)].label) {
            ++correct;
        }
    }
    CHECK(correct >= static_cast<int>(0.95 * m.n()));
}

TEST_CASE("the incremental latent delta matches a full ELBO recomputation") {
    const TrainedManifold m = fit_small(8, 2, 77, 3);
    const double base = training_elbo(m);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int trial = 0; trial < 5; ++trial) {
        const int i = trial % m.n();
        VecX new_mean = m.latent_mean.row(i).transpose();
        for (int c = 0; c < new_mean.size(); ++c) new_mean(c) += u(rng);
        const double delta = training_elbo_latent_delta(m, i, new_mean);
        TrainedManifold perturbed = m;
        perturbed.latent_mean.row(i) = new_mean.transpose();
        const double full = training_elbo(perturbed) - base;
        CHECK(delta == doctest::Approx(full).epsilon(1e-7));
    }
}

TEST_CASE("post-fit latent means are stationary points of the ELBO") {
    const TrainedManifold m = fit_small(14, 2, 4321, 4);
    const double step = 1e-5;
    double max_grad = 0.0;
    for (int i = 0; i < m.n(); ++i) {
        VecX grad(m.latent_dim());
        for (int c = 0; c < m.latent_dim(); ++c) {
            VecX plus = m.latent_mean.row(i).transpose();
            VecX minus = plus;
            plus(c) += step;
            minus(c) -= step;
            grad(c) = (training_elbo_latent_delta(m, i, plus) -
                       training_elbo_latent_delta(m, i, minus)) /
                      (2.0 * step);
        }
        max_grad = std::max(max_grad, grad.norm());
    }
    CHECK(max_grad < 1e-4);
}

TEST_CASE("permuting the samples permutes the latents") {
    const std::vector<FeatureVector> features = cluster_features(10, 99);
    const int n = static_cast<int>(features.size());
    const SimilarityGraphs graphs = build_graphs(features, 4);
    Hyperparams hyper;
    hyper.latent_dim = 2;
    hyper.max_iters = 30;
    const TrainedManifold m0 = fit(features, hyper, graphs);

    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(7);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<FeatureVector> permuted(static_cast<size_t>(n));
    SimilarityGraphs pg;
    pg.k = graphs.k;
    pg.labels.resize(static_cast<size_t>(n));
    pg.w_within = MatX::Zero(n, n);
    pg.w_between = MatX::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        permuted[static_cast<size_t>(perm[static_cast<size_t>(i)])] = features[static_cast<size_t>(i)];
        pg.labels[static_cast<size_t>(perm[static_cast<size_t>(i)])] = graphs.labels[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) {
            pg.w_within(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]) = graphs.w_within(i, j);
            pg.w_between(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]) = graphs.w_between(i, j);
        }
    }
    const TrainedManifold m1 = fit(permuted, hyper, pg);
    for (int i = 0; i < n; ++i) {
        const VecX a = m0.latent_mean.row(i).transpose();
        const VecX b = m1.latent_mean.row(perm[static_cast<size_t>(i)]).transpose();
        CHECK((a - b).norm() < 1e-6);
    }
}

TEST_CASE("embedding a training replica lands on its stored latent") {
    const TrainedManifold m = fit_small(20, 2, 2024);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(0, m.n() - 1);
    int ok = 0, total = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int i = pick(rng);
        const EmbedResult emb = embed_out_of_sample(m, m.anchors[static_cast<size_t>(i)]);
        const double err = (emb.latent - m.latent_mean.row(i).transpose()).norm();
        if (err < 0.05 * m.median_nn_latent_within) ++ok;
        ++total;
        CHECK((emb.variance.array() > 0.0).all());
    }
    CHECK(ok >= static_cast<int>(0.95 * total));
}

TEST_CASE("replica posterior variance is smaller than a mid-gap query's") {
    const TrainedManifold m = fit_small(20, 2, 512);
    const EmbedResult replica = embed_out_of_sample(m, m.anchors[0]);

    // A query midway between the two class centroids in feature space.
    VecX mid = VecX::Zero(m.ambient_dim());
    int cp = 0, cn = 0;
    VecX sum_p = VecX::Zero(m.ambient_dim()), sum_n = VecX::Zero(m.ambient_dim());
    for (const auto& a : m.anchors) {
        if (a.label == ClassLabel::P) {
            sum_p += a.values;
            ++cp;
        } else {
            sum_n += a.values;
            ++cn;
        }
    }
    mid = 0.5 * (sum_p / cp + sum_n / cn);
    FeatureVector probe = m.anchors[0];
    probe.values = mid;
    // Renormalize quaternion blocks so the probe is a valid pose vector.
    const int block = mode_block_size(probe.mode);
    for (int c = 0; c < kNumLevels; ++c) {
        Eigen::Vector4d q = probe.values.segment<4>(c * block);
        probe.values.segment<4>(c * block) = q / q.norm();
    }
    const EmbedResult gap = embed_out_of_sample(m, probe);
    CHECK(replica.variance.sum() < gap.variance.sum());
}

TEST_CASE("far out-of-distribution queries are rejected") {
    const TrainedManifold m = fit_small(12, 2, 640, 3);
    FeatureVector far = m.anchors[0];
    const int block = mode_block_size(far.mode);
    for (int c = 0; c < kNumLevels; ++c) {
        far.values.segment<3>(c * block + 4) *= 100.0;  // translations blown up
    }
    CHECK_THROWS_AS((void)embed_out_of_sample(m, far), NumericalError);
}

TEST_CASE("classify votes among nearest latents") {
    const TrainedManifold m = fit_small(20, 2, 31);
    // A training latent deep in its own class neighborhood.
    int pure = -1;
    for (int i = 0; i < m.n() && pure < 0; ++i) {
        const Classification c = classify(m, m.latent_mean.row(i).transpose());
        if (m.anchors[static_cast<size_t>(i)].label == ClassLabel::P && c.score == 1.0) pure = i;
    }
    REQUIRE(pure >= 0);
    const Classification c = classify(m, m.latent_mean.row(pure).transpose());
    CHECK(c.label == ClassLabel::P);
    CHECK(c.score == 1.0);

    // Scaling every latent leaves all vote labels unchanged.
    TrainedManifold scaled = m;
    scaled.latent_mean *= 3.7;
    for (int i = 0; i < m.n(); ++i) {
        const Classification a = classify(m, m.latent_mean.row(i).transpose());
        const Classification b = classify(scaled, scaled.latent_mean.row(i).transpose());
        CHECK(a.label == b.label);
        CHECK(a.score == b.score);
    }
}

TEST_CASE("classify tie goes to P") {
    TrainedManifold m;
    m.graphs.k = 2;
    m.graphs.labels = {ClassLabel::P, ClassLabel::NP};
    m.latent_mean = MatX(2, 1);
    m.latent_mean << -1.0, 1.0;
    m.anchors.resize(2);
    const Classification c = classify(m, VecX::Zero(1));
    CHECK(c.score == 0.5);
    CHECK(c.label == ClassLabel::P);
}

TEST_CASE("feature translation gauge leaves latents unchanged") {
    const std::vector<FeatureVector> features = cluster_features(10, 321);
    const SimilarityGraphs graphs = build_graphs(features, 4);
    Hyperparams hyper;
    hyper.latent_dim = 2;
    hyper.max_iters = 30;
    const TrainedManifold m0 = fit(features, hyper, graphs);

    std::vector<FeatureVector> shifted = features;
    for (auto& f : shifted) f.values.array() += 7.5;
    const TrainedManifold m1 = fit(shifted, hyper, graphs);
    CHECK((m0.latent_mean - m1.latent_mean).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("fit validates its inputs") {
    const std::vector<FeatureVector> features = cluster_features(6, 8);
    const SimilarityGraphs graphs = build_graphs(features, 3);
    Hyperparams bad;
    bad.latent_dim = 0;
    CHECK_THROWS_AS((void)fit(features, bad, graphs), ValidationError);

    Hyperparams huge;
    huge.latent_dim = static_cast<int>(features.size());
    CHECK_THROWS_AS((void)fit(features, huge, graphs), ValidationError);
}
