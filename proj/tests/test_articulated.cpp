#include <doctest.h>

#include "spineprog/articulated.hpp"
#include "support/fixtures.hpp"

#include <random>

using namespace spineprog;
using namespace spineprog::test;

TEST_CASE("to_absolute on identity and pure translations") {
    ArticulatedSpine s = identity_spine();
    for (const auto& t : to_absolute(s)) {
        CHECK((t.rotation - Mat3::Identity()).norm() == 0.0);
        CHECK(t.translation.norm() == 0.0);
    }
    for (auto& t : s.relative_transforms) t.translation = Vec3(0, 0, 30);
    const auto abs = to_absolute(s);
    for (int c = 0; c < kNumLevels; ++c) {
        CHECK((abs[static_cast<size_t>(c)].translation - Vec3(0, 0, 30.0 * (c + 1))).norm() < 1e-12);
    }
}

TEST_CASE("to_relative of to_absolute is the identity") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const ArticulatedSpine s = random_spine(rng);
        const auto rel = to_relative(to_absolute(s));
        for (int c = 0; c < kNumLevels; ++c) {
            CHECK((rel[static_cast<size_t>(c)].rotation -
                   s.relative_transforms[static_cast<size_t>(c)].rotation)
                      .norm() < 1e-9);
            CHECK((rel[static_cast<size_t>(c)].translation -
                   s.relative_transforms[static_cast<size_t>(c)].translation)
                      .norm() < 1e-9);
        }
    }
}

TEST_CASE("feature vector dimensions per mode") {
    const ArticulatedSpine s = identity_spine();
    CHECK(to_feature_vector(s, FeatureMode::Shape).values.size() == 306);
    CHECK(to_feature_vector(s, FeatureMode::Poses).values.size() == 119);
    CHECK(to_feature_vector(s, FeatureMode::ShapePoses).values.size() == 425);
}

TEST_CASE("identity spine flattens to unit quaternions and zero translations") {
    const FeatureVector fv = to_feature_vector(identity_spine(), FeatureMode::Poses);
    for (int c = 0; c < kNumLevels; ++c) {
        const int off = 7 * c;
        CHECK(fv.values(off) == 1.0);
        CHECK(fv.values.segment<6>(off + 1).norm() == 0.0);
    }
}

TEST_CASE("feature vector round trip restores poses and landmarks") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const ArticulatedSpine s = random_spine(rng);
        const auto abs_in = to_absolute(s);

        const ArticulatedSpine back =
            from_feature_vector(to_feature_vector(s, FeatureMode::ShapePoses));
        const auto abs_out = to_absolute(back);
        for (int c = 0; c < kNumLevels; ++c) {
            const size_t sc = static_cast<size_t>(c);
            CHECK((abs_in[sc].rotation - abs_out[sc].rotation).norm() < 1e-9);
            CHECK((abs_in[sc].translation - abs_out[sc].translation).norm() < 1e-9);
            for (int l = 0; l < kLandmarksPerVertebra; ++l) {
                CHECK((back.vertebrae[sc].landmarks[static_cast<size_t>(l)] -
                       s.vertebrae[sc].landmarks[static_cast<size_t>(l)])
                          .norm() < 1e-9);
            }
        }
        validate_spine(back);

        // Pose-only round trip restores poses.
        const ArticulatedSpine back_p = from_feature_vector(to_feature_vector(s, FeatureMode::Poses));
        const auto abs_p = to_absolute(back_p);
        for (int c = 0; c < kNumLevels; ++c) {
            CHECK((abs_in[static_cast<size_t>(c)].translation -
                   abs_p[static_cast<size_t>(c)].translation)
                      .norm() < 1e-9);
        }
    }
}

TEST_CASE("flattening is bitwise deterministic") {
    std::mt19937_64 rng(9);
    const ArticulatedSpine s = random_spine(rng);
    const FeatureVector a = to_feature_vector(s, FeatureMode::ShapePoses);
    const FeatureVector b = to_feature_vector(s, FeatureMode::ShapePoses);
    REQUIRE(a.values.size() == b.values.size());
    for (int i = 0; i < a.values.size(); ++i) CHECK(a.values(i) == b.values(i));
}

TEST_CASE("articulated distance basics") {
    std::mt19937_64 rng(13);
    const ArticulatedSpine s = random_spine(rng);
    const FeatureVector y = to_feature_vector(s, FeatureMode::ShapePoses);
    CHECK(articulated_distance(y, y) == 0.0);

    // Rotating one level's absolute pose by R_z(90) adds exactly sqrt(2)*pi/2.
    ArticulatedSpine s2 = s;
    auto abs = to_absolute(s);
    abs[10].rotation = abs[10].rotation * rot_z_deg(90.0);
    s2.relative_transforms = to_relative(abs);
    const FeatureVector y2 = to_feature_vector(s2, FeatureMode::ShapePoses);
    CHECK(articulated_distance(y, y2) ==
          doctest::Approx(std::sqrt(2.0) * kPi / 2).epsilon(1e-9));

    FeatureVector wrong_mode = to_feature_vector(s, FeatureMode::Poses);
    CHECK_THROWS_AS((void)articulated_distance(y, wrong_mode), ValidationError);
}

TEST_CASE("articulated distance metric axioms and rigid invariance") {
    std::mt19937_64 rng(21);
    std::vector<FeatureVector> ys;
    for (int i = 0; i < 12; ++i) {
        ys.push_back(to_feature_vector(random_spine(rng), FeatureMode::ShapePoses));
    }
    for (size_t i = 0; i < ys.size(); ++i) {
        for (size_t j = i + 1; j < ys.size(); ++j) {
            const double dij = articulated_distance(ys[i], ys[j]);
            CHECK(dij == doctest::Approx(articulated_distance(ys[j], ys[i])).epsilon(1e-12));
            CHECK(dij > 0.0);
            for (size_t k = 0; k < ys.size(); ++k) {
                if (k == i || k == j) continue;
                const double dik = articulated_distance(ys[i], ys[k]);
                const double dkj = articulated_distance(ys[k], ys[j]);
                CHECK(dij <= dik + dkj + 1e-9);
            }
        }
    }

    RigidTransform g;
    g.rotation = random_rotation(rng);
    g.translation = Vec3(40, -25, 60);
    for (int trial = 0; trial < 10; ++trial) {
        const ArticulatedSpine a = random_spine(rng);
        const ArticulatedSpine b = random_spine(rng);
        const double d0 = articulated_distance(to_feature_vector(a, FeatureMode::ShapePoses),
                                               to_feature_vector(b, FeatureMode::ShapePoses));
        const double d1 =
            articulated_distance(to_feature_vector(transform_spine(a, g), FeatureMode::ShapePoses),
                                 to_feature_vector(transform_spine(b, g), FeatureMode::ShapePoses));
        CHECK(d1 == doctest::Approx(d0).epsilon(1e-9));
    }
}

TEST_CASE("shape mode distance is Euclidean") {
    std::mt19937_64 rng(27);
    const FeatureVector a = to_feature_vector(random_spine(rng), FeatureMode::Shape);
    const FeatureVector b = to_feature_vector(random_spine(rng), FeatureMode::Shape);
    CHECK(articulated_distance(a, b) == doctest::Approx((a.values - b.values).norm()));
}

TEST_CASE("spine validation catches defects") {
    ArticulatedSpine s = identity_spine();
    s.vertebrae[3].landmarks[0] += Vec3(1, 0, 0);  // centroid off origin
    CHECK_THROWS_AS(validate_spine(s), ValidationError);

    ArticulatedSpine s2 = identity_spine();
    s2.relative_transforms[5].rotation(0, 0) = 1.5;
    CHECK_THROWS_AS(validate_spine(s2), ValidationError);

    ArticulatedSpine s3 = identity_spine();
    std::swap(s3.vertebrae[0], s3.vertebrae[1]);
    CHECK_THROWS_AS(validate_spine(s3), ValidationError);
}
