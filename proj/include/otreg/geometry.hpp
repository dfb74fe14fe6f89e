#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "otreg/error.hpp"

namespace otreg {

/// Ordered list of 3D points; indices are implicit 0-based ids.
struct PointCloud {
    std::vector<Eigen::Vector3d> points;

    PointCloud() = default;
    explicit PointCloud(std::vector<Eigen::Vector3d> pts) : points(std::move(pts)) {}

    int size() const { return static_cast<int>(points.size()); }
    bool empty() const { return points.empty(); }
    const Eigen::Vector3d& operator[](int i) const { return points[static_cast<std::size_t>(i)]; }
    Eigen::Vector3d& operator[](int i) { return points[static_cast<std::size_t>(i)]; }

    /// Throws DomainError if any coordinate is non-finite.
    void validate() const;
};

/// Rotation in SO(3) plus translation.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    Eigen::Vector3d operator()(const Eigen::Vector3d& p) const {
        return rotation * p + translation;
    }

    /// Orthonormality and det(+1), each within tol elementwise.
    bool is_valid(double tol = 1e-9) const;

    RigidTransform inverse() const;
};

/// outer ∘ inner: apply inner first, then outer.
RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner);

/// Rotation by angle (radians) about a (not necessarily unit) axis.
RigidTransform rotation_about_axis(const Eigen::Vector3d& axis, double angle_rad,
                                   const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());

/// Maps every point through tf. Throws InvalidTransformError on a bad rotation.
PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& tf);

struct VoxelKey {
    std::int64_t x = 0, y = 0, z = 0;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = 1469598103934665603ull;
        for (std::int64_t v : {k.x, k.y, k.z}) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

/// Uniform grid partition; every point belongs to exactly one cell.
struct VoxelGrid {
    double voxel_size = 0.0;
    std::unordered_map<VoxelKey, std::vector<int>, VoxelKeyHash> cells;

    static VoxelGrid build(const PointCloud& cloud, double voxel_size);
    VoxelKey key_of(const Eigen::Vector3d& p) const;
};

struct DownsampleResult {
    PointCloud centroids;            // one per occupied cell, ordered by (cell_z, cell_y, cell_x)
    std::vector<int> assignment;     // input point index -> centroid index
};

/// Centroid per occupied cell. Throws EmptyInputError on an empty cloud.
DownsampleResult voxel_downsample(const PointCloud& cloud, double voxel_size);

/// Exhaustive scan; ties broken by lowest index. Cloud must be non-empty.
std::pair<int, double> nearest_neighbor(const Eigen::Vector3d& query, const PointCloud& cloud);

/// Hash-grid accelerated neighbor queries. Falls back to a linear scan for
/// small clouds so results stay identical to nearest_neighbor().
class SpatialGrid {
public:
    SpatialGrid(const PointCloud& cloud, double cell_size);

    /// Same contract as nearest_neighbor (argmin distance, ties by lowest index).
    std::pair<int, double> nearest(const Eigen::Vector3d& query) const;

    /// Indices with distance <= radius, ascending.
    std::vector<int> radius_search(const Eigen::Vector3d& query, double radius) const;

    const PointCloud& cloud() const { return *cloud_; }

private:
    static constexpr int kBruteForceBelow = 256;

    const PointCloud* cloud_;
    double cell_;
    std::unordered_map<VoxelKey, std::vector<int>, VoxelKeyHash> cells_;
    VoxelKey min_key_, max_key_;

    VoxelKey key_of(const Eigen::Vector3d& p) const;
};

/// One putative match between source index and target index.
struct Correspondence {
    int src = 0;
    int tgt = 0;
    double confidence = 0.0;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// (RRE degrees, RTE). RRE = arccos(clamp((tr(R_e^T R_g) - 1)/2, -1, 1)).
std::pair<double, double> pose_error(const RigidTransform& est, const RigidTransform& gt);

/// RMS of ||est(p_i) - q_j|| over the ground-truth pairs.
double rmse_under_transform(const PointCloud& src, const CorrespondenceSet& gt_pairs,
                            const PointCloud& tgt, const RigidTransform& est);

}  // namespace otreg
