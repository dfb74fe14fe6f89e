#pragma once

#include <limits>
#include <string>
#include <vector>

#include "otreg/geometry.hpp"

namespace otreg {

struct EvalThresholds {
    double inlier_radius = 0.1;          // residual bound for IR
    double fmr_min_inlier_ratio = 0.05;  // IR must exceed this for FMR
    double rr_rmse = 0.2;                // RMSE mode bound
    double rr_rre_deg = 5.0;             // rotation bound, RRE/RTE mode
    double rr_rte = 2.0;                 // translation bound, RRE/RTE mode

    void validate() const;
};

/// Fraction of pairs whose residual under gt is below `radius`.
/// Empty correspondence sets yield 0 and set *empty_flag when provided.
double inlier_ratio(const CorrespondenceSet& pairs, const PointCloud& src, const PointCloud& tgt,
                    const RigidTransform& gt, double radius, bool* empty_flag = nullptr);

/// Fraction of per-pair inlier ratios strictly above the threshold.
double feature_matching_recall(const std::vector<double>& inlier_ratios, double threshold);

enum class RecallMode { Rmse, RreRte };

/// Everything recorded for one evaluated pair. Unprocessed pairs keep the
/// infinite error defaults and count against recall.
struct PairRecord {
    std::string id;
    bool processed = false;
    std::string error;
    int n_correspondences = 0;
    bool empty_correspondences = false;
    double inlier_ratio = 0.0;
    double rmse = std::numeric_limits<double>::infinity();
    double rre_deg = std::numeric_limits<double>::infinity();
    double rte = std::numeric_limits<double>::infinity();
    double measured_overlap = 0.0;
    double model_ms = 0.0;  // correspondence stage
    double pose_ms = 0.0;   // estimation stage
};

double registration_recall(const std::vector<PairRecord>& records, const EvalThresholds& thresholds,
                           RecallMode mode);

}  // namespace otreg
