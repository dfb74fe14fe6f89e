#include <doctest.h>

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "otreg/error.hpp"
#include "otreg/pose.hpp"

using namespace otreg;

namespace {

PointCloud random_cloud(int n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<Eigen::Vector3d> pts;
    pts.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
    return PointCloud(std::move(pts));
}

RigidTransform example_motion() {
    return rotation_about_axis(Eigen::Vector3d(0.3, -1.0, 0.7), 1.2,
                               Eigen::Vector3d(0.4, -0.1, 0.9));
}

CorrespondenceSet identity_pairs(int n) {
    CorrespondenceSet pairs;
    for (int i = 0; i < n; ++i) pairs.push_back({i, i, 1.0});
    return pairs;
}

double procrustes_objective(const CorrespondenceSet& pairs, const PointCloud& src,
                            const PointCloud& tgt, const Eigen::VectorXd& w,
                            const RigidTransform& tf) {
    double obj = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k)
        obj += w[static_cast<Eigen::Index>(k)] *
               (tf(src[pairs[k].src]) - tgt[pairs[k].tgt]).squaredNorm();
    return obj;
}

}  // namespace

TEST_CASE("weighted procrustes recovers an exact four-point transform") {
    PointCloud src(std::vector<Eigen::Vector3d>{
        Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0),
        Eigen::Vector3d(0, 0, 1)});
    RigidTransform gt = example_motion();
    PointCloud tgt = apply_transform(src, gt);
    RigidTransform est = weighted_procrustes(identity_pairs(4), src, tgt, Eigen::VectorXd::Ones(4));
    CHECK((est.rotation - gt.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((est.translation - gt.translation).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zero-weight pairs do not affect the weighted procrustes fit") {
    PointCloud src(std::vector<Eigen::Vector3d>{
        Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0),
        Eigen::Vector3d(7, -3, 2), Eigen::Vector3d(-5, 9, 4)});
    RigidTransform gt = example_motion();
    PointCloud tgt = apply_transform(src, gt);
    // Corrupt the zero-weight targets with junk.
    tgt[3] = Eigen::Vector3d(100, 100, 100);
    tgt[4] = Eigen::Vector3d(-50, 20, 3);
    Eigen::VectorXd w(5);
    w << 1, 1, 1, 0, 0;
    RigidTransform est = weighted_procrustes(identity_pairs(5), src, tgt, w);
    CHECK((est.rotation - gt.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((est.translation - gt.translation).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("weighted procrustes beats random perturbed transforms on a noisy instance") {
    std::mt19937_64 rng(31);
    PointCloud src = random_cloud(30, rng);
    RigidTransform gt = example_motion();
    PointCloud tgt = apply_transform(src, gt);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (auto& p : tgt.points) p += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    std::uniform_real_distribution<double> uw(0.1, 1.0);
    Eigen::VectorXd w(30);
    for (int i = 0; i < 30; ++i) w[i] = uw(rng);
    CorrespondenceSet pairs = identity_pairs(30);
    RigidTransform est = weighted_procrustes(pairs, src, tgt, w);
    double best = procrustes_objective(pairs, src, tgt, w, est);
    std::uniform_real_distribution<double> ua(-0.3, 0.3);
    for (int trial = 0; trial < 1000; ++trial) {
        RigidTransform cand = compose(
            rotation_about_axis(Eigen::Vector3d(ua(rng), ua(rng), ua(rng)).normalized(), ua(rng),
                                Eigen::Vector3d(ua(rng), ua(rng), ua(rng)) * 0.1),
            est);
        CHECK(procrustes_objective(pairs, src, tgt, w, cand) >= best - 1e-12);
    }
}

TEST_CASE("weighted procrustes rotation is always in SO(3)") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 50; ++trial) {
        PointCloud src = random_cloud(6, rng);
        PointCloud tgt = random_cloud(6, rng);  // unrelated clouds invite reflections
        RigidTransform est =
            weighted_procrustes(identity_pairs(6), src, tgt, Eigen::VectorXd::Ones(6));
        CHECK(est.is_valid(1e-9));
    }
}

TEST_CASE("weighted procrustes is equivariant under a common rigid motion") {
    std::mt19937_64 rng(33);
    PointCloud src = random_cloud(12, rng);
    PointCloud tgt = random_cloud(12, rng);
    Eigen::VectorXd w = Eigen::VectorXd::Ones(12);
    CorrespondenceSet pairs = identity_pairs(12);
    RigidTransform est = weighted_procrustes(pairs, src, tgt, w);
    RigidTransform motion = example_motion();
    // Moving both clouds by `motion` conjugates the fit: est' = motion∘est∘motion⁻¹.
    RigidTransform est2 = weighted_procrustes(pairs, apply_transform(src, motion),
                                              apply_transform(tgt, motion), w);
    RigidTransform expected = compose(motion, compose(est, motion.inverse()));
    CHECK((est2.rotation - expected.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((est2.translation - expected.translation).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("scaling all weights leaves the weighted procrustes fit unchanged") {
    std::mt19937_64 rng(34);
    PointCloud src = random_cloud(10, rng);
    PointCloud tgt = random_cloud(10, rng);
    std::uniform_real_distribution<double> uw(0.1, 1.0);
    Eigen::VectorXd w(10);
    for (int i = 0; i < 10; ++i) w[i] = uw(rng);
    CorrespondenceSet pairs = identity_pairs(10);
    RigidTransform a = weighted_procrustes(pairs, src, tgt, w);
    RigidTransform b = weighted_procrustes(pairs, src, tgt, (w * 37.5).eval());
    CHECK((a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.translation - b.translation).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("weighted procrustes rejects degenerate inputs") {
    PointCloud two(std::vector<Eigen::Vector3d>{Eigen::Vector3d(0, 0, 0),
                                                Eigen::Vector3d(1, 0, 0)});
    CHECK_THROWS_AS(weighted_procrustes(identity_pairs(2), two, two, Eigen::VectorXd::Ones(2)),
                    InsufficientPairsError);

    PointCloud three(std::vector<Eigen::Vector3d>{
        Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)});
    CHECK_THROWS_AS(weighted_procrustes(identity_pairs(3), three, three, Eigen::VectorXd::Zero(3)),
                    InsufficientPairsError);

    PointCloud line(std::vector<Eigen::Vector3d>{
        Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(2, 0, 0),
        Eigen::Vector3d(3, 0, 0)});
    CHECK_THROWS_AS(weighted_procrustes(identity_pairs(4), line, line, Eigen::VectorXd::Ones(4)),
                    DegenerateGeometryError);
}

TEST_CASE("ransac recovers the transform from seventy inliers and thirty outliers") {
    std::mt19937_64 rng(35);
    PointCloud src = random_cloud(100, rng);
    RigidTransform gt = example_motion();
    PointCloud tgt = apply_transform(src, gt);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    // Pairs 70..99 point at random junk targets.
    for (int i = 70; i < 100; ++i) tgt[i] = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 3.0;
    RansacConfig cfg;
    cfg.inlier_threshold = 0.05;
    cfg.seed = 99;
    RansacResult res = ransac_register(identity_pairs(100), src, tgt, cfg);
    REQUIRE(res.found_inliers);

    CorrespondenceSet clean = identity_pairs(70);
    PointCloud tgt_clean = apply_transform(src, gt);
    RigidTransform oracle = weighted_procrustes(clean, src, tgt_clean, Eigen::VectorXd::Ones(70));
    CHECK((res.transform.rotation - oracle.rotation).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((res.transform.translation - oracle.translation).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("ransac on all-exact pairs marks every pair an inlier and recovers exactly") {
    std::mt19937_64 rng(36);
    PointCloud src = random_cloud(40, rng);
    RigidTransform gt = example_motion();
    PointCloud tgt = apply_transform(src, gt);
    RansacConfig cfg;
    cfg.seed = 5;
    RansacResult res = ransac_register(identity_pairs(40), src, tgt, cfg);
    REQUIRE(res.found_inliers);
    CHECK(res.inlier_count == 40);
    CHECK(std::all_of(res.inlier_mask.begin(), res.inlier_mask.end(), [](bool b) { return b; }));
    CHECK((res.transform.rotation - gt.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((res.transform.translation - gt.translation).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ransac with the same seed and inputs is bitwise deterministic") {
    std::mt19937_64 rng(37);
    PointCloud src = random_cloud(60, rng);
    PointCloud tgt = apply_transform(src, example_motion());
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 40; i < 60; ++i) tgt[i] = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 2.0;
    RansacConfig cfg;
    cfg.seed = 1234;
    RansacResult a = ransac_register(identity_pairs(60), src, tgt, cfg);
    RansacResult b = ransac_register(identity_pairs(60), src, tgt, cfg);
    CHECK(a.transform.rotation == b.transform.rotation);
    CHECK(a.transform.translation == b.transform.translation);
    CHECK(a.inlier_mask == b.inlier_mask);
    CHECK(a.inlier_count == b.inlier_count);
    CHECK(a.iterations_run == b.iterations_run);
}

TEST_CASE("ransac inlier count dominates every subsample refit") {
    // The returned model's inlier count must be at least that of any 3-sample
    // hypothesis; spot-check against many random hypotheses.
    std::mt19937_64 rng(38);
    PointCloud src = random_cloud(50, rng);
    PointCloud tgt = apply_transform(src, example_motion());
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 35; i < 50; ++i) tgt[i] = Eigen::Vector3d(u(rng), u(rng), u(rng)) * 2.0;
    CorrespondenceSet pairs = identity_pairs(50);
    RansacConfig cfg;
    cfg.inlier_threshold = 0.05;
    cfg.seed = 77;
    RansacResult res = ransac_register(pairs, src, tgt, cfg);
    auto count_inliers = [&](const RigidTransform& tf) {
        int n = 0;
        for (const auto& c : pairs)
            if ((tf(src[c.src]) - tgt[c.tgt]).norm() < cfg.inlier_threshold) ++n;
        return n;
    };
    std::uniform_int_distribution<int> pick(0, 49);
    for (int trial = 0; trial < 200; ++trial) {
        int a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || b == c || a == c) continue;
        CorrespondenceSet sample{pairs[static_cast<std::size_t>(a)],
                                 pairs[static_cast<std::size_t>(b)],
                                 pairs[static_cast<std::size_t>(c)]};
        RigidTransform tf;
        try {
            tf = weighted_procrustes(sample, src, tgt, Eigen::VectorXd::Ones(3));
        } catch (const DegenerateGeometryError&) {
            continue;
        }
        CHECK(res.inlier_count >= count_inliers(tf));
    }
}

TEST_CASE("ransac config validation and insufficient pairs") {
    RansacConfig cfg;
    cfg.max_iters = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.inlier_threshold = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.confidence = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    PointCloud two(std::vector<Eigen::Vector3d>{Eigen::Vector3d(0, 0, 0),
                                                Eigen::Vector3d(1, 0, 0)});
    CHECK_THROWS_AS(ransac_register(identity_pairs(2), two, two, RansacConfig{}),
                    InsufficientPairsError);
}
