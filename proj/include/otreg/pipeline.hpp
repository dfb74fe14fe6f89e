#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "otreg/geometry.hpp"
#include "otreg/otsolve.hpp"

namespace otreg {

/// Downsampled aggregate points plus the partition of the fine cloud into
/// patches (each fine point belongs to its nearest superpoint).
struct Superpoints {
    PointCloud points;
    std::vector<std::vector<int>> members;  // superpoint -> fine point indices
};

/// Superpoints are voxel centroids; membership is by nearest superpoint in
/// geometry space (ties to the lowest superpoint index), which is not always
/// the originating voxel.
Superpoints make_superpoints(const PointCloud& cloud, double coarse_voxel);

/// Rigid-invariant test features: coordinates mapped into the ground-truth
/// aligned frame plus a constant bias channel. Evaluation instrument only.
Eigen::MatrixXd oracle_features(const PointCloud& cloud, const RigidTransform& align);

/// Handcrafted rotation-invariant descriptor: normalized covariance
/// eigenvalues (3 dims) plus an 8-bin histogram of neighbor distances within
/// `radius`, L2-normalized. Points with fewer than 3 neighbors fall back to a
/// uniform eigenvalue triplet.
Eigen::MatrixXd spectral_descriptor(const PointCloud& cloud, double radius, int bins = 8);

/// Same descriptor evaluated at `queries` with neighborhoods drawn from
/// `support`; used to describe superpoint centroids against the fine cloud.
Eigen::MatrixXd spectral_descriptor_at(const PointCloud& queries, const PointCloud& support,
                                       double radius, int bins = 8);

enum class OverlapLevel { Coarse, Fine };

/// Ground-truth overlap labels for cloud_p against cloud_q under gt. Coarse
/// level: per-superpoint fraction of members with a gt-neighbor within r_o.
/// Fine level: binary per-point indicator.
OverlapScores gt_overlap_scores(const PointCloud& cloud_p, const PointCloud& cloud_q,
                                const RigidTransform& gt, double r_o, OverlapLevel level,
                                const Superpoints* superpoints = nullptr);

/// Supplies per-point features for a cloud pair; rows align with point
/// indices and contain no zero-norm rows.
class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;
    virtual Eigen::MatrixXd source_features(const PointCloud& cloud) const = 0;
    virtual Eigen::MatrixXd target_features(const PointCloud& cloud) const = 0;

    // Superpoint-level features default to evaluating on the centroid cloud.
    virtual Eigen::MatrixXd source_superpoint_features(const Superpoints& sp,
                                                       const PointCloud& fine) const;
    virtual Eigen::MatrixXd target_superpoint_features(const Superpoints& sp,
                                                       const PointCloud& fine) const;
};

/// Rigid-invariant oracle features keyed to a known ground-truth transform.
class OracleFeatureProvider final : public FeatureProvider {
public:
    explicit OracleFeatureProvider(const RigidTransform& gt) : gt_(gt) {}
    Eigen::MatrixXd source_features(const PointCloud& cloud) const override;
    Eigen::MatrixXd target_features(const PointCloud& cloud) const override;

private:
    RigidTransform gt_;
};

class SpectralFeatureProvider final : public FeatureProvider {
public:
    explicit SpectralFeatureProvider(double radius, int bins = 8,
                                     double superpoint_radius_scale = 2.5, int scales = 1)
        : radius_(radius), bins_(bins), sp_scale_(superpoint_radius_scale), scales_(scales) {}
    Eigen::MatrixXd source_features(const PointCloud& cloud) const override;
    Eigen::MatrixXd target_features(const PointCloud& cloud) const override;
    // Descriptors from successive radius doublings are concatenated when
    // scales > 1. Centroid clouds are too sparse to describe themselves, so
    // superpoint descriptors are evaluated at the centroids with the fine
    // cloud as neighborhood support, over a proportionally larger radius.
    Eigen::MatrixXd source_superpoint_features(const Superpoints& sp,
                                               const PointCloud& fine) const override;
    Eigen::MatrixXd target_superpoint_features(const Superpoints& sp,
                                               const PointCloud& fine) const override;

    double superpoint_radius() const { return radius_ * sp_scale_; }

private:
    Eigen::MatrixXd multi_scale(const PointCloud& queries, const PointCloud& support,
                                double base_radius) const;

    double radius_;
    int bins_;
    double sp_scale_;
    int scales_;
};

/// Externally supplied per-point descriptors (e.g. from files). Superpoint
/// features are the normalized means of member rows.
class ExternalFeatureProvider final : public FeatureProvider {
public:
    ExternalFeatureProvider(Eigen::MatrixXd source, Eigen::MatrixXd target);
    Eigen::MatrixXd source_features(const PointCloud& cloud) const override;
    Eigen::MatrixXd target_features(const PointCloud& cloud) const override;
    Eigen::MatrixXd source_superpoint_features(const Superpoints& sp,
                                               const PointCloud& fine) const override;
    Eigen::MatrixXd target_superpoint_features(const Superpoints& sp,
                                               const PointCloud& fine) const override;

private:
    Eigen::MatrixXd source_;
    Eigen::MatrixXd target_;
};

/// Supplies overlap-score marginals for both clouds of a pair.
class OverlapProvider {
public:
    virtual ~OverlapProvider() = default;
    virtual OverlapScores coarse_source(const Superpoints& sp, const PointCloud& source,
                                        const PointCloud& target) const = 0;
    virtual OverlapScores coarse_target(const Superpoints& sp, const PointCloud& target,
                                        const PointCloud& source) const = 0;
    virtual OverlapScores fine_source(const PointCloud& source, const PointCloud& target) const = 0;
    virtual OverlapScores fine_target(const PointCloud& target, const PointCloud& source) const = 0;
};

/// All scores 1.0; the no-prior baseline.
class UniformOverlapProvider final : public OverlapProvider {
public:
    OverlapScores coarse_source(const Superpoints& sp, const PointCloud&, const PointCloud&) const override;
    OverlapScores coarse_target(const Superpoints& sp, const PointCloud&, const PointCloud&) const override;
    OverlapScores fine_source(const PointCloud& source, const PointCloud&) const override;
    OverlapScores fine_target(const PointCloud& target, const PointCloud&) const override;
};

class GroundTruthOverlapProvider final : public OverlapProvider {
public:
    GroundTruthOverlapProvider(const RigidTransform& gt, double r_o) : gt_(gt), r_o_(r_o) {}
    OverlapScores coarse_source(const Superpoints& sp, const PointCloud& source,
                                const PointCloud& target) const override;
    OverlapScores coarse_target(const Superpoints& sp, const PointCloud& target,
                                const PointCloud& source) const override;
    OverlapScores fine_source(const PointCloud& source, const PointCloud& target) const override;
    OverlapScores fine_target(const PointCloud& target, const PointCloud& source) const override;

private:
    RigidTransform gt_;
    double r_o_;
};

struct MatchConfig {
    double coarse_voxel = 0.2;
    int patch_size = 64;  // K; top-K patch members by overlap score
    double lambda_coarse = 0.1;
    double lambda_fine = 0.1;
    bool mnn_enabled = true;
    SolverConfig coarse_solver;
    SolverConfig fine_solver;
    std::string feature_provider = "spectral";   // "spectral" | "oracle" | "external"
    std::string overlap_provider = "uniform";    // "uniform" | "ground_truth"
    double descriptor_radius = 0.1;
    double overlap_radius = 0.0375;  // r_o
    int max_superpoints = 2048;
    double min_confidence = 0.0;   // fine pairs at or below this mass are dropped
    int max_correspondences = 0;   // keep only the top-k by confidence; 0 = unlimited
    int descriptor_scales = 1;     // concatenated radius doublings of the spectral descriptor

    void validate() const;
};

/// Keeps (i,j) where j is row-i argmax and i is column-j argmax of the
/// coupling; confidence = coupling(i,j). With mnn disabled returns all
/// row-argmax pairs.
CorrespondenceSet mutual_argmax_pairs(const Eigen::MatrixXd& coupling, bool mnn_enabled);

/// Coarse-level matching: builds the superpoint cost bundle, runs the coupled
/// solver, then filters by mutual argmax.
CorrespondenceSet coarse_match(const Superpoints& sp_p, const Superpoints& sp_q,
                               const Eigen::MatrixXd& Fp, const Eigen::MatrixXd& Fq,
                               const OverlapScores& mu_p, const OverlapScores& mu_q,
                               const MatchConfig& cfg, const TraceSink& trace = nullptr);

struct PredictionResult {
    CorrespondenceSet correspondences;
    CorrespondenceSet coarse_pairs;  // superpoint-level matches that seeded the fine stage
    std::vector<std::string> notes;  // diagnostics (skipped patches, voxel adjustments, ...)
};

/// Fine matching of one coarse pair: truncate both patches to their top-K
/// members by overlap score, solve the per-patch coupled OT, keep mutual
/// row/column maxima. Returns global-index pairs; empty (with a note) when the
/// patch instance is empty or infeasible.
CorrespondenceSet fine_match(const Correspondence& coarse_pair, const Superpoints& sp_p,
                             const Superpoints& sp_q, const PointCloud& cloud_p,
                             const PointCloud& cloud_q, const Eigen::MatrixXd& fine_fp,
                             const Eigen::MatrixXd& fine_fq, const OverlapScores& fine_mu_p,
                             const OverlapScores& fine_mu_q, const MatchConfig& cfg,
                             std::vector<std::string>* notes = nullptr);

/// Full coarse-to-fine correspondence prediction. fine_match calls over
/// distinct coarse pairs run on up to `workers` threads; the union merges
/// duplicate (src,tgt) pairs keeping the maximum confidence.
PredictionResult predict_correspondences(const PointCloud& cloud_p, const PointCloud& cloud_q,
                                         const MatchConfig& cfg, const FeatureProvider& features,
                                         const OverlapProvider& overlap, int workers = 1,
                                         const TraceSink& coarse_trace = nullptr);

}  // namespace otreg
