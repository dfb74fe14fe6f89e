#include "otreg/geometry.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>

namespace otreg {

void PointCloud::validate() const {
    for (const auto& p : points) {
        if (!p.allFinite()) throw DomainError("point cloud contains non-finite coordinates");
    }
}

bool RigidTransform::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
}

RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
    RigidTransform out;
    out.rotation = outer.rotation * inner.rotation;
    out.translation = outer.rotation * inner.translation + outer.translation;
    return out;
}

RigidTransform rotation_about_axis(const Eigen::Vector3d& axis, double angle_rad,
                                   const Eigen::Vector3d& translation) {
    double n = axis.norm();
    if (n <= 0.0) throw DomainError("rotation axis must be non-zero");
    Eigen::Vector3d u = axis / n;
    // Rodrigues' formula.
    Eigen::Matrix3d k;
    k << 0, -u.z(), u.y(), u.z(), 0, -u.x(), -u.y(), u.x(), 0;
    RigidTransform tf;
    tf.rotation = Eigen::Matrix3d::Identity() + std::sin(angle_rad) * k +
                  (1.0 - std::cos(angle_rad)) * (k * k);
    tf.translation = translation;
    return tf;
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& tf) {
    if (!tf.is_valid()) throw InvalidTransformError("rotation is not orthonormal with det +1");
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points) out.points.push_back(tf(p));
    return out;
}

VoxelKey VoxelGrid::key_of(const Eigen::Vector3d& p) const {
    return VoxelKey{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                    static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                    static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

VoxelGrid VoxelGrid::build(const PointCloud& cloud, double voxel_size) {
    if (voxel_size <= 0.0) throw DomainError("voxel_size must be positive");
    VoxelGrid grid;
    grid.voxel_size = voxel_size;
    for (int i = 0; i < cloud.size(); ++i) grid.cells[grid.key_of(cloud[i])].push_back(i);
    return grid;
}

DownsampleResult voxel_downsample(const PointCloud& cloud, double voxel_size) {
    if (cloud.empty()) throw EmptyInputError("voxel_downsample: empty cloud");
    VoxelGrid grid = VoxelGrid::build(cloud, voxel_size);

    std::vector<VoxelKey> keys;
    keys.reserve(grid.cells.size());
    for (const auto& [key, members] : grid.cells) keys.push_back(key);
    // Canonical centroid order for reproducible superpoint indices.
    std::sort(keys.begin(), keys.end(), [](const VoxelKey& a, const VoxelKey& b) {
        if (a.z != b.z) return a.z < b.z;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });

    DownsampleResult result;
    result.assignment.assign(cloud.points.size(), -1);
    result.centroids.points.reserve(keys.size());
    for (std::size_t c = 0; c < keys.size(); ++c) {
        const auto& members = grid.cells.at(keys[c]);
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        for (int idx : members) {
            sum += cloud[idx];
            result.assignment[static_cast<std::size_t>(idx)] = static_cast<int>(c);
        }
        result.centroids.points.push_back(sum / static_cast<double>(members.size()));
    }
    return result;
}

std::pair<int, double> nearest_neighbor(const Eigen::Vector3d& query, const PointCloud& cloud) {
    if (cloud.empty()) throw EmptyInputError("nearest_neighbor: empty cloud");
    int best = 0;
    double best_sq = (cloud[0] - query).squaredNorm();
    for (int i = 1; i < cloud.size(); ++i) {
        double d = (cloud[i] - query).squaredNorm();
        if (d < best_sq) {
            best_sq = d;
            best = i;
        }
    }
    return {best, std::sqrt(best_sq)};
}

SpatialGrid::SpatialGrid(const PointCloud& cloud, double cell_size)
    : cloud_(&cloud), cell_(cell_size) {
    if (cell_size <= 0.0) throw DomainError("SpatialGrid: cell size must be positive");
    if (cloud.empty()) throw EmptyInputError("SpatialGrid: empty cloud");
    min_key_ = max_key_ = key_of(cloud[0]);
    for (int i = 0; i < cloud.size(); ++i) {
        VoxelKey k = key_of(cloud[i]);
        cells_[k].push_back(i);
        min_key_.x = std::min(min_key_.x, k.x);
        min_key_.y = std::min(min_key_.y, k.y);
        min_key_.z = std::min(min_key_.z, k.z);
        max_key_.x = std::max(max_key_.x, k.x);
        max_key_.y = std::max(max_key_.y, k.y);
        max_key_.z = std::max(max_key_.z, k.z);
    }
}

VoxelKey SpatialGrid::key_of(const Eigen::Vector3d& p) const {
    return VoxelKey{static_cast<std::int64_t>(std::floor(p.x() / cell_)),
                    static_cast<std::int64_t>(std::floor(p.y() / cell_)),
                    static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

std::pair<int, double> SpatialGrid::nearest(const Eigen::Vector3d& query) const {
    if (cloud_->size() < kBruteForceBelow) return nearest_neighbor(query, *cloud_);

    const VoxelKey q = key_of(query);
    int best = -1;
    double best_sq = std::numeric_limits<double>::infinity();
    auto consider = [&](const VoxelKey& k) {
        auto it = cells_.find(k);
        if (it == cells_.end()) return;
        for (int idx : it->second) {
            double d = ((*cloud_)[idx] - query).squaredNorm();
            if (d < best_sq || (d == best_sq && idx < best)) {
                best_sq = d;
                best = idx;
            }
        }
    };

    std::int64_t max_ring = 1;
    max_ring = std::max(max_ring, std::max(q.x - min_key_.x, max_key_.x - q.x));
    max_ring = std::max(max_ring, std::max(q.y - min_key_.y, max_key_.y - q.y));
    max_ring = std::max(max_ring, std::max(q.z - min_key_.z, max_key_.z - q.z));

    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
        // Any cell at Chebyshev distance `ring` is at least (ring-1)*cell away,
        // so once that bound exceeds the best distance no closer (or equal,
        // lower-index) point remains.
        if (best >= 0) {
            double lower = static_cast<double>(ring - 1) * cell_;
            if (lower > 0.0 && lower * lower > best_sq) break;
        }
        for (std::int64_t dx = -ring; dx <= ring; ++dx) {
            for (std::int64_t dy = -ring; dy <= ring; ++dy) {
                for (std::int64_t dz = -ring; dz <= ring; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                    consider(VoxelKey{q.x + dx, q.y + dy, q.z + dz});
                }
            }
        }
    }
    return {best, std::sqrt(best_sq)};
}

std::vector<int> SpatialGrid::radius_search(const Eigen::Vector3d& query, double radius) const {
    if (radius < 0.0) throw DomainError("radius_search: negative radius");
    std::vector<int> out;
    const double r_sq = radius * radius;
    if (cloud_->size() < kBruteForceBelow) {
        for (int i = 0; i < cloud_->size(); ++i) {
            if (((*cloud_)[i] - query).squaredNorm() <= r_sq) out.push_back(i);
        }
        return out;
    }
    const VoxelKey lo = key_of(query - Eigen::Vector3d::Constant(radius));
    const VoxelKey hi = key_of(query + Eigen::Vector3d::Constant(radius));
    for (std::int64_t x = lo.x; x <= hi.x; ++x) {
        for (std::int64_t y = lo.y; y <= hi.y; ++y) {
            for (std::int64_t z = lo.z; z <= hi.z; ++z) {
                auto it = cells_.find(VoxelKey{x, y, z});
                if (it == cells_.end()) continue;
                for (int idx : it->second) {
                    if (((*cloud_)[idx] - query).squaredNorm() <= r_sq) out.push_back(idx);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<double, double> pose_error(const RigidTransform& est, const RigidTransform& gt) {
    double tr = (est.rotation.transpose() * gt.rotation).trace();
    double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    double rre = std::acos(c) * 180.0 / M_PI;
    double rte = (est.translation - gt.translation).norm();
    return {rre, rte};
}

double rmse_under_transform(const PointCloud& src, const CorrespondenceSet& gt_pairs,
                            const PointCloud& tgt, const RigidTransform& est) {
    if (gt_pairs.empty()) throw EmptyInputError("rmse_under_transform: empty pair list");
    double sum_sq = 0.0;
    for (const auto& pair : gt_pairs) {
        sum_sq += (est(src[pair.src]) - tgt[pair.tgt]).squaredNorm();
    }
    return std::sqrt(sum_sq / static_cast<double>(gt_pairs.size()));
}

}  // namespace otreg
