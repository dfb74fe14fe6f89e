#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <random>
#include <set>

#include "otreg/geometry.hpp"
#include "otreg/io.hpp"

using namespace otreg;

namespace {

PointCloud random_cloud(int n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> uni(-scale, scale);
    PointCloud c;
    for (int i = 0; i < n; ++i) c.points.push_back({uni(rng), uni(rng), uni(rng)});
    return c;
}

RigidTransform random_transform(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
    std::uniform_real_distribution<double> ang(-3.0, 3.0), tr(-2.0, 2.0);
    return rotation_about_axis(axis, ang(rng), {tr(rng), tr(rng), tr(rng)});
}

}  // namespace

TEST_CASE("apply_transform identity returns the same cloud") {
    std::mt19937_64 rng(1);
    PointCloud c = random_cloud(20, rng);
    PointCloud out = apply_transform(c, RigidTransform{});
    REQUIRE(out.size() == c.size());
    for (int i = 0; i < c.size(); ++i) CHECK((out[i] - c[i]).norm() == doctest::Approx(0.0));
}

TEST_CASE("apply_transform rotates (1,0,0) by 90 degrees about z to (0,1,0)") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(1, 0, 0)});
    RigidTransform tf = rotation_about_axis({0, 0, 1}, M_PI / 2);
    PointCloud out = apply_transform(c, tf);
    CHECK((out[0] - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("apply_transform pure translation") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(0, 0, 0)});
    RigidTransform tf;
    tf.translation = {1, 2, 3};
    CHECK((apply_transform(c, tf)[0] - Eigen::Vector3d(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("apply_transform composition law") {
    std::mt19937_64 rng(2);
    PointCloud c = random_cloud(15, rng);
    RigidTransform a = random_transform(rng), b = random_transform(rng);
    PointCloud lhs = apply_transform(apply_transform(c, a), b);
    PointCloud rhs = apply_transform(c, compose(b, a));
    for (int i = 0; i < c.size(); ++i) CHECK((lhs[i] - rhs[i]).norm() < 1e-12);
}

TEST_CASE("apply_transform rejects a non-orthonormal rotation") {
    RigidTransform tf;
    tf.rotation(0, 0) = 2.0;
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(1, 1, 1)});
    CHECK_THROWS_AS(apply_transform(c, tf), InvalidTransformError);
}

TEST_CASE("rigidity: pairwise distances preserved under random transforms") {
    std::mt19937_64 rng(3);
    PointCloud c = random_cloud(12, rng);
    RigidTransform tf = random_transform(rng);
    PointCloud out = apply_transform(c, tf);
    for (int i = 0; i < c.size(); ++i)
        for (int j = i + 1; j < c.size(); ++j)
            CHECK(std::abs((out[i] - out[j]).norm() - (c[i] - c[j]).norm()) < 1e-9);
}

TEST_CASE("voxel_downsample merges two points in one cell into their centroid") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0.1, 0, 0)});
    DownsampleResult r = voxel_downsample(c, 1.0);
    REQUIRE(r.centroids.size() == 1);
    CHECK((r.centroids[0] - Eigen::Vector3d(0.05, 0, 0)).norm() < 1e-15);
    CHECK(r.assignment == std::vector<int>({0, 0}));
}

TEST_CASE("voxel_downsample with well-separated points keeps all of them") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(5, 0, 0), Eigen::Vector3d(0, 5, 0)});
    DownsampleResult r = voxel_downsample(c, 1.0);
    REQUIRE(r.centroids.size() == 3);
    // Every input point must appear exactly once among the centroids.
    for (int i = 0; i < 3; ++i) {
        bool found = false;
        for (int j = 0; j < 3; ++j) found = found || (r.centroids[j] - c[i]).norm() < 1e-15;
        CHECK(found);
    }
}

TEST_CASE("voxel_downsample occupied-cell count matches direct enumeration") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    PointCloud c;
    for (int i = 0; i < 1000; ++i) c.points.push_back({uni(rng), uni(rng), uni(rng)});
    DownsampleResult r = voxel_downsample(c, 0.25);
    CHECK(r.centroids.size() <= 64);
    // Oracle: enumerate occupied cells directly.
    std::set<std::tuple<long, long, long>> cells;
    for (int i = 0; i < c.size(); ++i)
        cells.insert({static_cast<long>(std::floor(c[i].x() / 0.25)),
                      static_cast<long>(std::floor(c[i].y() / 0.25)),
                      static_cast<long>(std::floor(c[i].z() / 0.25))});
    CHECK(r.centroids.size() == static_cast<int>(cells.size()));
}

TEST_CASE("voxel_downsample assignment is total") {
    std::mt19937_64 rng(5);
    PointCloud c = random_cloud(200, rng);
    DownsampleResult r = voxel_downsample(c, 0.3);
    REQUIRE(r.assignment.size() == 200);
    for (int a : r.assignment) {
        CHECK(a >= 0);
        CHECK(a < r.centroids.size());
    }
}

TEST_CASE("voxel_downsample rejects an empty cloud") {
    CHECK_THROWS_AS(voxel_downsample(PointCloud{}, 1.0), EmptyInputError);
}

TEST_CASE("nearest_neighbor returns an existing point at distance zero") {
    std::mt19937_64 rng(6);
    PointCloud c = random_cloud(30, rng);
    auto [idx, dist] = nearest_neighbor(c[17], c);
    CHECK(idx == 17);
    CHECK(dist == 0.0);
}

TEST_CASE("nearest_neighbor picks the smaller norm") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 2, 0)});
    auto [idx, dist] = nearest_neighbor({0, 0, 0}, c);
    CHECK(idx == 0);
    CHECK(dist == doctest::Approx(1.0));
}

TEST_CASE("nearest_neighbor ties break to the lowest index") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(-1, 0, 0)});
    auto [idx, dist] = nearest_neighbor({0, 0, 0}, c);
    CHECK(idx == 0);
}

TEST_CASE("SpatialGrid nearest matches the exhaustive scan on random instances") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        PointCloud c = random_cloud(100 + (trial % 3) * 200, rng);
        SpatialGrid grid(c, 0.2);
        Eigen::Vector3d q(std::uniform_real_distribution<double>(-1.2, 1.2)(rng),
                          std::uniform_real_distribution<double>(-1.2, 1.2)(rng),
                          std::uniform_real_distribution<double>(-1.2, 1.2)(rng));
        auto fast = grid.nearest(q);
        auto slow = nearest_neighbor(q, c);
        CHECK(fast.first == slow.first);
        CHECK(fast.second == doctest::Approx(slow.second));
    }
}

TEST_CASE("SpatialGrid radius_search equals a linear scan") {
    std::mt19937_64 rng(8);
    PointCloud c = random_cloud(500, rng);
    SpatialGrid grid(c, 0.25);
    Eigen::Vector3d q(0.1, -0.2, 0.3);
    std::vector<int> fast = grid.radius_search(q, 0.25);
    std::vector<int> slow;
    for (int i = 0; i < c.size(); ++i)
        if ((c[i] - q).norm() <= 0.25) slow.push_back(i);
    CHECK(fast == slow);
}

TEST_CASE("pose_error of identical transforms is zero") {
    std::mt19937_64 rng(9);
    RigidTransform tf = random_transform(rng);
    auto [rre, rte] = pose_error(tf, tf);
    CHECK(rre == doctest::Approx(0.0));
    CHECK(rte == doctest::Approx(0.0));
}

TEST_CASE("pose_error of a 90 degree rotation offset is 90") {
    RigidTransform est = rotation_about_axis({0, 0, 1}, M_PI / 2);
    RigidTransform gt;
    auto [rre, rte] = pose_error(est, gt);
    CHECK(rre == doctest::Approx(90.0));
    CHECK(rte == doctest::Approx(0.0));
}

TEST_CASE("pose_error translation offset (3,4,0) gives rte 5") {
    RigidTransform est, gt;
    est.translation = {3, 4, 0};
    auto [rre, rte] = pose_error(est, gt);
    CHECK(rte == doctest::Approx(5.0));
}

TEST_CASE("pose_error rotation part is symmetric in its arguments") {
    std::mt19937_64 rng(10);
    for (int t = 0; t < 10; ++t) {
        RigidTransform a = random_transform(rng), b = random_transform(rng);
        CHECK(pose_error(a, b).first == doctest::Approx(pose_error(b, a).first));
    }
}

TEST_CASE("rmse_under_transform is zero for exact pairs under the true transform") {
    std::mt19937_64 rng(11);
    PointCloud src = random_cloud(25, rng);
    RigidTransform gt = random_transform(rng);
    PointCloud tgt = apply_transform(src, gt);
    CorrespondenceSet pairs;
    for (int i = 0; i < src.size(); ++i) pairs.push_back({i, i, 1.0});
    CHECK(rmse_under_transform(src, pairs, tgt, gt) < 1e-12);
}

TEST_CASE("rmse_under_transform uniform offset of 0.1 gives 0.1") {
    std::mt19937_64 rng(12);
    PointCloud src = random_cloud(25, rng);
    RigidTransform gt = random_transform(rng);
    PointCloud tgt = apply_transform(src, gt);
    RigidTransform est = gt;
    est.translation += Eigen::Vector3d(0.1, 0, 0);
    CorrespondenceSet pairs;
    for (int i = 0; i < src.size(); ++i) pairs.push_back({i, i, 1.0});
    CHECK(rmse_under_transform(src, pairs, tgt, est) == doctest::Approx(0.1));
}

TEST_CASE("rmse_under_transform matches the direct summation oracle") {
    std::mt19937_64 rng(13);
    PointCloud src = random_cloud(30, rng);
    PointCloud tgt = random_cloud(30, rng);
    RigidTransform est = random_transform(rng);
    CorrespondenceSet pairs;
    std::uniform_int_distribution<int> pick(0, 29);
    for (int k = 0; k < 20; ++k) pairs.push_back({pick(rng), pick(rng), 1.0});
    double acc = 0.0;
    for (const auto& p : pairs) acc += (est(src[p.src]) - tgt[p.tgt]).squaredNorm();
    double oracle = std::sqrt(acc / static_cast<double>(pairs.size()));
    CHECK(rmse_under_transform(src, pairs, tgt, est) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("rmse_under_transform rejects empty pair lists") {
    PointCloud c(std::vector<Eigen::Vector3d>{Eigen::Vector3d(0, 0, 0)});
    CHECK_THROWS_AS(rmse_under_transform(c, {}, c, RigidTransform{}), EmptyInputError);
}

TEST_CASE("point cloud text round trip with comment lines") {
    std::mt19937_64 rng(14);
    PointCloud c = random_cloud(17, rng);
    const std::string path = "geom_roundtrip.xyz";
    write_point_cloud(path, c);
    PointCloud back = read_point_cloud(path);
    REQUIRE(back.size() == c.size());
    for (int i = 0; i < c.size(); ++i) CHECK((back[i] - c[i]).norm() < 1e-12);
    CHECK_THROWS_AS(read_point_cloud("does_not_exist.xyz"), ConfigError);
}

TEST_CASE("transform file round trip") {
    std::mt19937_64 rng(15);
    RigidTransform tf = random_transform(rng);
    const std::string path = "geom_tf.txt";
    write_transform(path, tf);
    RigidTransform back = read_transform(path);
    CHECK((back.rotation - tf.rotation).norm() < 1e-9);
    CHECK((back.translation - tf.translation).norm() < 1e-9);
}
