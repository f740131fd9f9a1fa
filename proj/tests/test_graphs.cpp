#include <doctest.h>

#include "spineprog/graphs.hpp"
#include "support/fixtures.hpp"

#include <random>

using namespace spineprog;
using namespace spineprog::test;

namespace {

// Brute-force reference: k same-class and k other-class nearest, or-rule.
SimilarityGraphs brute_force(const MatX& dist, const std::vector<ClassLabel>& labels, int k) {
    const int n = static_cast<int>(labels.size());
    SimilarityGraphs g;
    g.k = k;
    g.labels = labels;
    g.w_within = MatX::Zero(n, n);
    g.w_between = MatX::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> same, diff;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(i)] ? same : diff)
                .emplace_back(dist(i, j), j);
        }
        std::sort(same.begin(), same.end());
        std::sort(diff.begin(), diff.end());
        for (int c = 0; c < k && c < static_cast<int>(same.size()); ++c) {
            g.w_within(i, same[static_cast<size_t>(c)].second) = 1.0;
            g.w_within(same[static_cast<size_t>(c)].second, i) = 1.0;
        }
        for (int c = 0; c < k && c < static_cast<int>(diff.size()); ++c) {
            g.w_between(i, diff[static_cast<size_t>(c)].second) = 1.0;
            g.w_between(diff[static_cast<size_t>(c)].second, i) = 1.0;
        }
    }
    return g;
}

}  // namespace

TEST_CASE("kNN graphs match the brute-force oracle on random cohorts") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 60 + 20 * trial;
        std::vector<ClassLabel> labels;
        MatX pts(n, 3);
        for (int i = 0; i < n; ++i) {
            labels.push_back(u(rng) < 0.5 ? ClassLabel::P : ClassLabel::NP);
            pts.row(i) << u(rng), u(rng), u(rng);
        }
        MatX dist(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) dist(i, j) = (pts.row(i) - pts.row(j)).norm();
        }
        const SimilarityGraphs got = build_graphs_from_distances(dist, labels, 4);
        const SimilarityGraphs ref = brute_force(dist, labels, 4);
        CHECK((got.w_within - ref.w_within).cwiseAbs().maxCoeff() == 0.0);
        CHECK((got.w_between - ref.w_between).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("graph invariants: symmetry, zero diagonal, disjoint edge sets") {
    std::mt19937_64 rng(60);
    std::vector<FeatureVector> features;
    for (int i = 0; i < 40; ++i) {
        FeatureVector f = to_feature_vector(random_spine(rng), FeatureMode::ShapePoses);
        f.label = i % 2 == 0 ? ClassLabel::P : ClassLabel::NP;
        features.push_back(std::move(f));
    }
    const SimilarityGraphs g = build_graphs(features, 5);
    CHECK((g.w_within - g.w_within.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((g.w_between - g.w_between.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.w_within.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.w_between.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK((g.w_within.array() * g.w_between.array()).abs().maxCoeff() == 0.0);
    // Or-rule yields at least k within-edges per row when the class is big enough.
    for (int i = 0; i < g.size(); ++i) {
        CHECK(g.w_within.row(i).sum() >= 5.0);
        // Within edges only connect equal labels.
        for (int j = 0; j < g.size(); ++j) {
            if (g.w_within(i, j) != 0.0) CHECK(g.labels[static_cast<size_t>(i)] == g.labels[static_cast<size_t>(j)]);
            if (g.w_between(i, j) != 0.0) CHECK(g.labels[static_cast<size_t>(i)] != g.labels[static_cast<size_t>(j)]);
        }
    }
}

TEST_CASE("well-separated clusters connect between-class edges across clusters only") {
    // Two tight clusters, one per class: every between-edge must cross.
    const int n = 20;
    std::vector<ClassLabel> labels;
    MatX dist(n, n);
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    std::vector<double> coord;
    for (int i = 0; i < n; ++i) {
        const bool p = i < n / 2;
        labels.push_back(p ? ClassLabel::P : ClassLabel::NP);
        coord.push_back((p ? 0.0 : 10.0) + u(rng));
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) dist(i, j) = std::abs(coord[static_cast<size_t>(i)] - coord[static_cast<size_t>(j)]);
    }
    const SimilarityGraphs g = build_graphs_from_distances(dist, labels, 3);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (g.w_between(i, j) != 0.0) {
                CHECK(((i < n / 2) != (j < n / 2)));
            }
        }
    }
}

TEST_CASE("k=1 collinear within-class adjacency follows the or-rule") {
    // Same-class points at 0, 1, 3. Point 0 picks 1; point 1 picks 0 (nearer
    // than 2 away); point 2 picks 1. Or-rule: edges (0,1) and (1,2), no (0,2).
    const std::vector<ClassLabel> labels = {ClassLabel::P, ClassLabel::P, ClassLabel::P,
                                            ClassLabel::NP, ClassLabel::NP};
    const std::vector<double> x = {0.0, 1.0, 3.0, 100.0, 101.0};
    MatX dist(5, 5);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) dist(i, j) = std::abs(x[static_cast<size_t>(i)] - x[static_cast<size_t>(j)]);
    }
    const SimilarityGraphs g = build_graphs_from_distances(dist, labels, 1);
    CHECK(g.w_within(0, 1) == 1.0);
    CHECK(g.w_within(1, 2) == 1.0);
    CHECK(g.w_within(0, 2) == 0.0);
}

TEST_CASE("a class smaller than k+1 is rejected by name") {
    const std::vector<ClassLabel> labels = {ClassLabel::P, ClassLabel::P, ClassLabel::NP,
                                            ClassLabel::NP, ClassLabel::NP};
    MatX dist = MatX::Ones(5, 5);
    dist.diagonal().setZero();
    CHECK_THROWS_WITH_AS((void)build_graphs_from_distances(dist, labels, 2),
                         doctest::Contains("class P"), ValidationError);
}

TEST_CASE("laplacian of the path graph and invariants") {
    MatX w = MatX::Zero(3, 3);
    w(0, 1) = w(1, 0) = 1.0;
    w(1, 2) = w(2, 1) = 1.0;
    const GraphLaplacian l = laplacian(w);
    MatX expect(3, 3);
    expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    CHECK((l.laplacian - expect).cwiseAbs().maxCoeff() == 0.0);

    CHECK(laplacian(MatX::Zero(4, 4)).laplacian.cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(62);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatX rnd = MatX::Zero(12, 12);
    for (int i = 0; i < 12; ++i) {
        for (int j = i + 1; j < 12; ++j) {
            if (u(rng) < 0.3) rnd(i, j) = rnd(j, i) = 1.0;
        }
    }
    const GraphLaplacian lr = laplacian(rnd);
    CHECK(lr.laplacian.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);

    MatX asym = MatX::Zero(3, 3);
    asym(0, 1) = 1.0;
    CHECK_THROWS_AS((void)laplacian(asym), ValidationError);
}
