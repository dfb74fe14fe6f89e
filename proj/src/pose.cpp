#include "otreg/pose.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "otreg/error.hpp"

namespace otreg {

void RansacConfig::validate() const {
    if (max_iters < 1) throw ConfigError("RansacConfig: max_iters must be >= 1");
    if (inlier_threshold <= 0.0) throw ConfigError("RansacConfig: inlier_threshold must be positive");
    if (confidence <= 0.0 || confidence >= 1.0) throw ConfigError("RansacConfig: confidence in (0,1)");
    if (sample_size != 3) throw ConfigError("RansacConfig: sample_size must be 3");
}

RigidTransform weighted_procrustes(const CorrespondenceSet& pairs, const PointCloud& src,
                                   const PointCloud& tgt, const Eigen::VectorXd& weights) {
    if (static_cast<Eigen::Index>(pairs.size()) != weights.size())
        throw ShapeError("weighted_procrustes: pair/weight length mismatch");
    if (pairs.size() < 3) throw InsufficientPairsError("weighted_procrustes: need at least 3 pairs");
    double total = weights.sum();
    if (!(total > 0.0)) throw InsufficientPairsError("weighted_procrustes: total weight must be positive");
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) throw DomainError("weighted_procrustes: negative weight");
    }

    Eigen::Vector3d src_bar = Eigen::Vector3d::Zero();
    Eigen::Vector3d tgt_bar = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        double w = weights[static_cast<Eigen::Index>(k)];
        src_bar += w * src[pairs[k].src];
        tgt_bar += w * tgt[pairs[k].tgt];
    }
    src_bar /= total;
    tgt_bar /= total;

    Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        double w = weights[static_cast<Eigen::Index>(k)];
        cross += w * (src[pairs[k].src] - src_bar) * (tgt[pairs[k].tgt] - tgt_bar).transpose();
    }
    cross /= total;

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d& sigma = svd.singularValues();
    // Weighted source points on a line give a rank-<2 cross-covariance.
    if (sigma[1] <= 1e-12 * std::max(sigma[0], 1e-300))
        throw DegenerateGeometryError("weighted_procrustes: collinear configuration");

    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

    RigidTransform tf;
    tf.rotation = v * d * u.transpose();
    tf.translation = tgt_bar - tf.rotation * src_bar;
    return tf;
}

namespace {

int count_inliers(const CorrespondenceSet& pairs, const PointCloud& src, const PointCloud& tgt,
                  const RigidTransform& tf, double threshold, std::vector<bool>* mask) {
    int count = 0;
    if (mask != nullptr) mask->assign(pairs.size(), false);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if ((tf(src[pairs[k].src]) - tgt[pairs[k].tgt]).norm() < threshold) {
            ++count;
            if (mask != nullptr) (*mask)[k] = true;
        }
    }
    return count;
}

}  // namespace

RansacResult ransac_register(const CorrespondenceSet& pairs, const PointCloud& src,
                             const PointCloud& tgt, const RansacConfig& cfg) {
    cfg.validate();
    const int n = static_cast<int>(pairs.size());
    if (n < 3) throw InsufficientPairsError("ransac_register: need at least 3 pairs");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    const Eigen::Vector3d unit_w = Eigen::Vector3d::Ones();

    RansacResult result;
    int best_count = -1;
    RigidTransform best_tf;
    bool have_candidate = false;

    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        int a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || b == c || a == c) continue;

        CorrespondenceSet sample = {pairs[static_cast<std::size_t>(a)],
                                    pairs[static_cast<std::size_t>(b)],
                                    pairs[static_cast<std::size_t>(c)]};
        RigidTransform tf;
        try {
            tf = weighted_procrustes(sample, src, tgt, unit_w);
        } catch (const DegenerateGeometryError&) {
            continue;
        }
        have_candidate = true;
        int count = count_inliers(pairs, src, tgt, tf, cfg.inlier_threshold, nullptr);
        if (count > best_count) {
            best_count = count;
            best_tf = tf;
        }
        if (best_count >= 3) {
            double inlier_ratio = static_cast<double>(best_count) / n;
            double miss = std::pow(1.0 - std::pow(inlier_ratio, 3), it + 1);
            if (miss < 1.0 - cfg.confidence) {
                ++it;
                break;
            }
        }
    }
    result.iterations_run = it;

    if (!have_candidate || best_count < 3) {
        result.transform = best_tf;
        result.inlier_mask.assign(pairs.size(), false);
        result.found_inliers = false;
        result.inlier_count = 0;
        return result;
    }

    std::vector<bool> best_mask;
    count_inliers(pairs, src, tgt, best_tf, cfg.inlier_threshold, &best_mask);

    // Refit on the winning inliers; keep it only if it does not lose inliers.
    CorrespondenceSet inlier_pairs;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (best_mask[k]) inlier_pairs.push_back(pairs[k]);
    }
    RigidTransform final_tf = best_tf;
    std::vector<bool> final_mask = best_mask;
    int final_count = best_count;
    try {
        RigidTransform refit = weighted_procrustes(
            inlier_pairs, src, tgt, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(inlier_pairs.size())));
        std::vector<bool> refit_mask;
        int refit_count = count_inliers(pairs, src, tgt, refit, cfg.inlier_threshold, &refit_mask);
        if (refit_count >= best_count) {
            final_tf = refit;
            final_mask = std::move(refit_mask);
            final_count = refit_count;
        }
    } catch (const DegenerateGeometryError&) {
        // keep the sample fit
    }

    result.transform = final_tf;
    result.inlier_mask = std::move(final_mask);
    result.found_inliers = final_count > 0;
    result.inlier_count = final_count;
    return result;
}

}  // namespace otreg
