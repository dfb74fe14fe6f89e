#include "otreg/metrics.hpp"

#include "otreg/error.hpp"

namespace otreg {

void EvalThresholds::validate() const {
    if (inlier_radius <= 0.0 || fmr_min_inlier_ratio <= 0.0 || rr_rmse <= 0.0 ||
        rr_rre_deg <= 0.0 || rr_rte <= 0.0) {
        throw ConfigError("EvalThresholds: all thresholds must be positive");
    }
}

double inlier_ratio(const CorrespondenceSet& pairs, const PointCloud& src, const PointCloud& tgt,
                    const RigidTransform& gt, double radius, bool* empty_flag) {
    if (empty_flag != nullptr) *empty_flag = pairs.empty();
    if (pairs.empty()) return 0.0;
    int inliers = 0;
    for (const auto& c : pairs) {
        if ((gt(src[c.src]) - tgt[c.tgt]).norm() < radius) ++inliers;
    }
    return static_cast<double>(inliers) / static_cast<double>(pairs.size());
}

double feature_matching_recall(const std::vector<double>& inlier_ratios, double threshold) {
    if (inlier_ratios.empty()) throw EmptyInputError("feature_matching_recall: empty report list");
    int above = 0;
    for (double ir : inlier_ratios) {
        if (ir > threshold) ++above;
    }
    return static_cast<double>(above) / static_cast<double>(inlier_ratios.size());
}

double registration_recall(const std::vector<PairRecord>& records, const EvalThresholds& thresholds,
                           RecallMode mode) {
    if (records.empty()) throw EmptyInputError("registration_recall: empty report list");
    int recalled = 0;
    for (const auto& r : records) {
        if (!r.processed) continue;  // failures count against the denominator
        bool hit = mode == RecallMode::Rmse
                       ? r.rmse < thresholds.rr_rmse
                       : (r.rre_deg < thresholds.rr_rre_deg && r.rte < thresholds.rr_rte);
        if (hit) ++recalled;
    }
    return static_cast<double>(recalled) / static_cast<double>(records.size());
}

}  // namespace otreg
