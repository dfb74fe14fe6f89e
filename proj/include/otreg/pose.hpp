#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "otreg/geometry.hpp"

namespace otreg {

struct RansacConfig {
    int max_iters = 50000;
    double inlier_threshold = 0.05;
    int sample_size = 3;
    double confidence = 0.999;
    std::uint64_t seed = 0;  // seeded RNG only; no entropy source

    void validate() const;
};

/// Minimizer of sum_k w_k ||R p_k + t - q_k||^2: weighted demeaning, SVD of
/// the weighted cross-covariance, determinant-corrected rotation (always
/// det +1), t = q_bar - R p_bar.
/// Throws InsufficientPairsError (< 3 pairs or zero total weight) and
/// DegenerateGeometryError (collinear weighted configuration).
RigidTransform weighted_procrustes(const CorrespondenceSet& pairs, const PointCloud& src,
                                   const PointCloud& tgt, const Eigen::VectorXd& weights);

struct RansacResult {
    RigidTransform transform;
    std::vector<bool> inlier_mask;
    bool found_inliers = false;
    int inlier_count = 0;
    int iterations_run = 0;
};

/// Seeded 3-point RANSAC with hypothesis fits via weighted_procrustes, best
/// inlier count kept (ties to the earlier iteration), a final refit on the
/// winning inliers, and the standard (1 - w^3)^n early-stop bound.
RansacResult ransac_register(const CorrespondenceSet& pairs, const PointCloud& src,
                             const PointCloud& tgt, const RansacConfig& cfg);

}  // namespace otreg
