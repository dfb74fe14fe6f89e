#include <doctest.h>

#include <cmath>
#include <random>

#include "otreg/costs.hpp"

using namespace otreg;

namespace {

Eigen::MatrixXd random_features(int n, int d, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd f(n, d);
    for (int i = 0; i < n; ++i) {
        do {
            for (int j = 0; j < d; ++j) f(i, j) = gauss(rng);
        } while (f.row(i).norm() < 1e-6);
    }
    return f;
}

PointCloud random_cloud(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    PointCloud c;
    for (int i = 0; i < n; ++i) c.points.push_back({uni(rng), uni(rng), uni(rng)});
    return c;
}

// Definition-level evaluation of the quadratic structural term.
Eigen::MatrixXd gw_term_quadruple(const Eigen::MatrixXd& cp, const Eigen::MatrixXd& cq,
                                  const Eigen::MatrixXd& g) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    for (int k = 0; k < cp.rows(); ++k)
        for (int l = 0; l < cq.rows(); ++l)
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) {
                    double d = cp(i, k) - cq(j, l);
                    h(k, l) += d * d * g(i, j);
                }
    return h;
}

Eigen::MatrixXd random_structure(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(0.0, 2.0);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) m(i, j) = m(j, i) = uni(rng);
    return m;
}

}  // namespace

TEST_CASE("feature_distance of identical vectors is zero") {
    Eigen::VectorXd f(3);
    f << 1, 2, 3;
    CHECK(feature_distance(f, f) == doctest::Approx(0.0));
}

TEST_CASE("feature_distance of orthogonal unit vectors is sqrt(2)") {
    Eigen::VectorXd f(2), g(2);
    f << 1, 0;
    g << 0, 1;
    CHECK(feature_distance(f, g) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("feature_distance is invariant to positive scaling") {
    Eigen::VectorXd f(4);
    f << 0.3, -1.2, 2.0, 0.5;
    CHECK(feature_distance(f, 2.0 * f) == doctest::Approx(0.0));
}

TEST_CASE("feature_distance rejects zero-norm input") {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(3), g = Eigen::VectorXd::Ones(3);
    CHECK_THROWS_AS(feature_distance(f, g), DegenerateFeatureError);
    CHECK_THROWS_AS(feature_distance(g, f), DegenerateFeatureError);
}

TEST_CASE("euclid_structure_distance basics") {
    Eigen::Vector3d p(0.4, -0.1, 2.0);
    CHECK(euclid_structure_distance(p, p) == doctest::Approx(0.0));
    CHECK(euclid_structure_distance({0, 0, 0}, {1, 0, 0}) == doctest::Approx(2.0 * std::tanh(1.0)));
    CHECK(euclid_structure_distance({0, 0, 0}, {100, 0, 0}) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("euclid_structure_distance is monotone in distance") {
    double prev = -1.0;
    for (double d = 0.0; d < 5.0; d += 0.25) {
        double v = euclid_structure_distance({0, 0, 0}, {d, 0, 0});
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("build_cross_cost has zero diagonal for identical feature sets") {
    std::mt19937_64 rng(21);
    Eigen::MatrixXd f = random_features(5, 3, rng);
    Eigen::MatrixXd c = build_cross_cost(f, f);
    for (int i = 0; i < 5; ++i) CHECK(c(i, i) == doctest::Approx(0.0));
}

TEST_CASE("build_cross_cost entries stay in [0,2]") {
    std::mt19937_64 rng(22);
    Eigen::MatrixXd c = random_features(6, 4, rng) * 1.0,
                    d = random_features(7, 4, rng);
    Eigen::MatrixXd m = build_cross_cost(c, d);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 2.0);
}

TEST_CASE("build_cross_cost matches the per-entry scalar loop") {
    std::mt19937_64 rng(23);
    Eigen::MatrixXd fp = random_features(4, 3, rng), fq = random_features(5, 3, rng);
    Eigen::MatrixXd m = build_cross_cost(fp, fq);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(m(i, j) == doctest::Approx(feature_distance(fp.row(i), fq.row(j))).epsilon(1e-12));
}

TEST_CASE("build_cross_cost rejects mismatched feature dimensions") {
    std::mt19937_64 rng(24);
    CHECK_THROWS_AS(build_cross_cost(random_features(3, 3, rng), random_features(3, 4, rng)),
                    ShapeError);
}

TEST_CASE("build_structure_cost at lambda=1 is the pure geometric matrix") {
    std::mt19937_64 rng(25);
    PointCloud c = random_cloud(5, rng);
    Eigen::MatrixXd f = random_features(5, 3, rng);
    Eigen::MatrixXd m = build_structure_cost(c, f, 1.0);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(m(i, j) == doctest::Approx(euclid_structure_distance(c[i], c[j])).epsilon(1e-12));
}

TEST_CASE("build_structure_cost at lambda=0 is the pure feature matrix") {
    std::mt19937_64 rng(26);
    PointCloud c = random_cloud(5, rng);
    Eigen::MatrixXd f = random_features(5, 3, rng);
    Eigen::MatrixXd m = build_structure_cost(c, f, 0.0);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            double expect = i == j ? 0.0 : feature_distance(f.row(i), f.row(j));
            CHECK(m(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("build_structure_cost blended value matches the scalar loop") {
    std::mt19937_64 rng(27);
    PointCloud c = random_cloud(6, rng);
    Eigen::MatrixXd f = random_features(6, 4, rng);
    const double lambda = 0.1;
    Eigen::MatrixXd m = build_structure_cost(c, f, lambda);
    for (int i = 0; i < 6; ++i) {
        CHECK(m(i, i) == 0.0);
        for (int j = 0; j < 6; ++j) {
            if (i == j) continue;
            double expect = lambda * euclid_structure_distance(c[i], c[j]) +
                            (1.0 - lambda) * feature_distance(f.row(i), f.row(j));
            CHECK(m(i, j) == doctest::Approx(expect).epsilon(1e-12));
            CHECK(m(i, j) == doctest::Approx(m(j, i)).epsilon(1e-12));
        }
    }
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 2.0);
}

TEST_CASE("build_structure_cost is rigid-invariant with features held fixed") {
    std::mt19937_64 rng(28);
    PointCloud c = random_cloud(7, rng);
    Eigen::MatrixXd f = random_features(7, 3, rng);
    RigidTransform tf = rotation_about_axis({1, 2, 3}, 1.1, {0.5, -0.2, 0.7});
    Eigen::MatrixXd a = build_structure_cost(c, f, 0.4);
    Eigen::MatrixXd b = build_structure_cost(apply_transform(c, tf), f, 0.4);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gw_term trivial cases") {
    Eigen::MatrixXd z1 = Eigen::MatrixXd::Zero(1, 1);
    CHECK(gw_term(z1, z1, Eigen::MatrixXd::Ones(1, 1))(0, 0) == doctest::Approx(0.0));

    std::mt19937_64 rng(29);
    Eigen::MatrixXd cp = random_structure(4, rng), cq = random_structure(5, rng);
    Eigen::MatrixXd h = gw_term(cp, cq, Eigen::MatrixXd::Zero(4, 5));
    CHECK(h.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("gw_term rank-reduced form equals the quadruple sum") {
    std::mt19937_64 rng(30);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::MatrixXd cp = random_structure(4, rng), cq = random_structure(5, rng);
        Eigen::MatrixXd g(4, 5);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 5; ++j) g(i, j) = uni(rng);
        Eigen::MatrixXd fast = gw_term(cp, cq, g);
        Eigen::MatrixXd slow = gw_term_quadruple(cp, cq, g);
        double rel = (fast - slow).cwiseAbs().maxCoeff() / (1.0 + slow.cwiseAbs().maxCoeff());
        CHECK(rel < 1e-10);
    }
}

TEST_CASE("gw_term rejects shape mismatches") {
    std::mt19937_64 rng(31);
    Eigen::MatrixXd cp = random_structure(4, rng), cq = random_structure(5, rng);
    CHECK_THROWS_AS(gw_term(cp, cq, Eigen::MatrixXd::Zero(5, 4)), ShapeError);
}

TEST_CASE("gw_objective is zero for an isometric self-match") {
    std::mt19937_64 rng(32);
    PointCloud c = random_cloud(6, rng);
    Eigen::MatrixXd f = random_features(6, 3, rng);
    Eigen::MatrixXd cp = build_structure_cost(c, f, 0.5);
    Eigen::MatrixXd g = Eigen::MatrixXd::Identity(6, 6) / 6.0;
    CHECK(gw_objective(cp, cp, g) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(gw_objective(cp, cp, Eigen::MatrixXd::Zero(6, 6)) == doctest::Approx(0.0));
}

TEST_CASE("gw_objective equals the quadruple-sum evaluation") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Eigen::MatrixXd cp = random_structure(4, rng), cq = random_structure(5, rng);
    Eigen::MatrixXd g(4, 5);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) g(i, j) = uni(rng);
    double slow = (gw_term_quadruple(cp, cq, g).array() * g.array()).sum();
    double fast = gw_objective(cp, cq, g);
    CHECK(std::abs(fast - slow) / (1.0 + std::abs(slow)) < 1e-10);
    CHECK(fast >= 0.0);
}

TEST_CASE("validate_features rejects zero-norm rows") {
    Eigen::MatrixXd f = Eigen::MatrixXd::Ones(3, 2);
    f.row(1).setZero();
    CHECK_THROWS_AS(validate_features(f), DegenerateFeatureError);
}
