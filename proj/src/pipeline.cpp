#include "otreg/pipeline.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "otreg/error.hpp"

namespace otreg {

Superpoints make_superpoints(const PointCloud& cloud, double coarse_voxel) {
    if (cloud.empty()) throw EmptyInputError("make_superpoints: empty cloud");
    if (coarse_voxel <= 0.0) throw DomainError("make_superpoints: coarse_voxel must be positive");

    Superpoints sp;
    sp.points = voxel_downsample(cloud, coarse_voxel).centroids;
    sp.members.resize(static_cast<std::size_t>(sp.points.size()));
    SpatialGrid grid(sp.points, coarse_voxel);
    for (int i = 0; i < cloud.size(); ++i) {
        auto [idx, dist] = grid.nearest(cloud[i]);
        sp.members[static_cast<std::size_t>(idx)].push_back(i);
    }
    return sp;
}

Eigen::MatrixXd oracle_features(const PointCloud& cloud, const RigidTransform& align) {
    Eigen::MatrixXd f(cloud.size(), 4);
    for (int i = 0; i < cloud.size(); ++i) {
        f.row(i).head<3>() = align(cloud[i]).transpose();
        f(i, 3) = 1.0;  // bias channel keeps rows away from zero norm
    }
    return f;
}

Eigen::MatrixXd spectral_descriptor_at(const PointCloud& queries, const PointCloud& support,
                                       double radius, int bins) {
    if (radius <= 0.0) throw DomainError("spectral_descriptor: radius must be positive");
    if (bins < 1) throw DomainError("spectral_descriptor: bins must be >= 1");
    if (queries.empty() || support.empty())
        throw EmptyInputError("spectral_descriptor: empty cloud");

    SpatialGrid grid(support, radius);
    Eigen::MatrixXd out(queries.size(), 3 + bins);
    for (int i = 0; i < queries.size(); ++i) {
        std::vector<int> hits = grid.radius_search(queries[i], radius);
        std::vector<int> neighbors;  // distance in (0, radius]
        neighbors.reserve(hits.size());
        for (int j : hits) {
            if ((support[j] - queries[i]).norm() > 0.0) neighbors.push_back(j);
        }

        Eigen::Vector3d eigs(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0);
        if (neighbors.size() >= 3) {
            Eigen::Vector3d mean = queries[i];
            for (int j : neighbors) mean += support[j];
            mean /= static_cast<double>(neighbors.size() + 1);
            Eigen::Matrix3d cov = (queries[i] - mean) * (queries[i] - mean).transpose();
            for (int j : neighbors) cov += (support[j] - mean) * (support[j] - mean).transpose();
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
            Eigen::Vector3d lambda = solver.eigenvalues().reverse();  // descending
            double total = lambda.sum();
            if (total > 0.0) eigs = lambda / total;
        }

        Eigen::VectorXd hist = Eigen::VectorXd::Zero(bins);
        for (int j : neighbors) {
            double d = (support[j] - queries[i]).norm();
            int bin = std::min(bins - 1, static_cast<int>(std::floor(d / radius * bins)));
            hist[bin] += 1.0;
        }
        if (!neighbors.empty()) hist /= static_cast<double>(neighbors.size());

        Eigen::VectorXd row(3 + bins);
        row.head<3>() = eigs;
        row.tail(bins) = hist;
        out.row(i) = row.transpose() / row.norm();
    }
    return out;
}

Eigen::MatrixXd spectral_descriptor(const PointCloud& cloud, double radius, int bins) {
    return spectral_descriptor_at(cloud, cloud, radius, bins);
}

OverlapScores gt_overlap_scores(const PointCloud& cloud_p, const PointCloud& cloud_q,
                                const RigidTransform& gt, double r_o, OverlapLevel level,
                                const Superpoints* superpoints) {
    if (!gt.is_valid()) throw InvalidTransformError("gt_overlap_scores: invalid transform");
    if (r_o <= 0.0) throw DomainError("gt_overlap_scores: r_o must be positive");
    SpatialGrid grid(cloud_q, r_o);
    auto in_overlap = [&](const Eigen::Vector3d& p) {
        return grid.nearest(gt(p)).second < r_o;
    };

    OverlapScores scores;
    if (level == OverlapLevel::Fine) {
        scores.weights.resize(cloud_p.size());
        for (int i = 0; i < cloud_p.size(); ++i) scores.weights[i] = in_overlap(cloud_p[i]) ? 1.0 : 0.0;
    } else {
        if (superpoints == nullptr)
            throw DomainError("gt_overlap_scores: coarse level requires superpoints");
        scores.weights.resize(superpoints->points.size());
        for (std::size_t s = 0; s < superpoints->members.size(); ++s) {
            const auto& members = superpoints->members[s];
            if (members.empty()) {
                scores.weights[static_cast<Eigen::Index>(s)] = 0.0;
                continue;
            }
            int hits = 0;
            for (int i : members) {
                if (in_overlap(cloud_p[i])) ++hits;
            }
            scores.weights[static_cast<Eigen::Index>(s)] =
                static_cast<double>(hits) / static_cast<double>(members.size());
        }
    }
    return scores;
}

Eigen::MatrixXd FeatureProvider::source_superpoint_features(const Superpoints& sp,
                                                            const PointCloud&) const {
    return source_features(sp.points);
}

Eigen::MatrixXd FeatureProvider::target_superpoint_features(const Superpoints& sp,
                                                            const PointCloud&) const {
    return target_features(sp.points);
}

Eigen::MatrixXd OracleFeatureProvider::source_features(const PointCloud& cloud) const {
    return oracle_features(cloud, gt_);
}

Eigen::MatrixXd OracleFeatureProvider::target_features(const PointCloud& cloud) const {
    return oracle_features(cloud, RigidTransform{});
}

Eigen::MatrixXd SpectralFeatureProvider::multi_scale(const PointCloud& queries,
                                                     const PointCloud& support,
                                                     double base_radius) const {
    Eigen::MatrixXd out;
    for (int s = 0; s < std::max(1, scales_); ++s) {
        Eigen::MatrixXd d =
            spectral_descriptor_at(queries, support, base_radius * static_cast<double>(1 << s), bins_);
        if (out.size() == 0) {
            out = std::move(d);
        } else {
            Eigen::MatrixXd joined(out.rows(), out.cols() + d.cols());
            joined << out, d;
            out = std::move(joined);
        }
    }
    return out;
}

Eigen::MatrixXd SpectralFeatureProvider::source_features(const PointCloud& cloud) const {
    return multi_scale(cloud, cloud, radius_);
}

Eigen::MatrixXd SpectralFeatureProvider::target_features(const PointCloud& cloud) const {
    return multi_scale(cloud, cloud, radius_);
}

ExternalFeatureProvider::ExternalFeatureProvider(Eigen::MatrixXd source, Eigen::MatrixXd target)
    : source_(std::move(source)), target_(std::move(target)) {
    validate_features(source_);
    validate_features(target_);
}

Eigen::MatrixXd ExternalFeatureProvider::source_features(const PointCloud& cloud) const {
    if (source_.rows() != cloud.size())
        throw ShapeError("external features: row count does not match source cloud");
    return source_;
}

Eigen::MatrixXd ExternalFeatureProvider::target_features(const PointCloud& cloud) const {
    if (target_.rows() != cloud.size())
        throw ShapeError("external features: row count does not match target cloud");
    return target_;
}

namespace {

Eigen::MatrixXd member_mean_features(const Superpoints& sp, const Eigen::MatrixXd& fine) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(sp.members.size()), fine.cols());
    for (std::size_t s = 0; s < sp.members.size(); ++s) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(fine.cols());
        for (int i : sp.members[s]) mean += fine.row(i);
        if (!sp.members[s].empty()) mean /= static_cast<double>(sp.members[s].size());
        double n = mean.norm();
        if (n < 1e-12) {
            // Memberless superpoints carry no evidence; give them a flat direction.
            mean.setOnes();
            n = mean.norm();
        }
        out.row(static_cast<Eigen::Index>(s)) = mean / n;
    }
    return out;
}

}  // namespace

Eigen::MatrixXd SpectralFeatureProvider::source_superpoint_features(const Superpoints& sp,
                                                                    const PointCloud& fine) const {
    return multi_scale(sp.points, fine, superpoint_radius());
}

Eigen::MatrixXd SpectralFeatureProvider::target_superpoint_features(const Superpoints& sp,
                                                                    const PointCloud& fine) const {
    return multi_scale(sp.points, fine, superpoint_radius());
}

Eigen::MatrixXd ExternalFeatureProvider::source_superpoint_features(const Superpoints& sp,
                                                                    const PointCloud& fine) const {
    return member_mean_features(sp, source_features(fine));
}

Eigen::MatrixXd ExternalFeatureProvider::target_superpoint_features(const Superpoints& sp,
                                                                    const PointCloud& fine) const {
    return member_mean_features(sp, target_features(fine));
}

OverlapScores UniformOverlapProvider::coarse_source(const Superpoints& sp, const PointCloud&,
                                                    const PointCloud&) const {
    return OverlapScores{Eigen::VectorXd::Ones(sp.points.size())};
}

OverlapScores UniformOverlapProvider::coarse_target(const Superpoints& sp, const PointCloud&,
                                                    const PointCloud&) const {
    return OverlapScores{Eigen::VectorXd::Ones(sp.points.size())};
}

OverlapScores UniformOverlapProvider::fine_source(const PointCloud& source, const PointCloud&) const {
    return OverlapScores{Eigen::VectorXd::Ones(source.size())};
}

OverlapScores UniformOverlapProvider::fine_target(const PointCloud& target, const PointCloud&) const {
    return OverlapScores{Eigen::VectorXd::Ones(target.size())};
}

OverlapScores GroundTruthOverlapProvider::coarse_source(const Superpoints& sp,
                                                        const PointCloud& source,
                                                        const PointCloud& target) const {
    return gt_overlap_scores(source, target, gt_, r_o_, OverlapLevel::Coarse, &sp);
}

OverlapScores GroundTruthOverlapProvider::coarse_target(const Superpoints& sp,
                                                        const PointCloud& target,
                                                        const PointCloud& source) const {
    return gt_overlap_scores(target, source, gt_.inverse(), r_o_, OverlapLevel::Coarse, &sp);
}

OverlapScores GroundTruthOverlapProvider::fine_source(const PointCloud& source,
                                                      const PointCloud& target) const {
    return gt_overlap_scores(source, target, gt_, r_o_, OverlapLevel::Fine);
}

OverlapScores GroundTruthOverlapProvider::fine_target(const PointCloud& target,
                                                      const PointCloud& source) const {
    return gt_overlap_scores(target, source, gt_.inverse(), r_o_, OverlapLevel::Fine);
}

void MatchConfig::validate() const {
    if (coarse_voxel <= 0.0) throw ConfigError("MatchConfig: coarse_voxel must be positive");
    if (patch_size < 3) throw ConfigError("MatchConfig: patch_size must be >= 3");
    if (lambda_coarse < 0.0 || lambda_coarse > 1.0 || lambda_fine < 0.0 || lambda_fine > 1.0)
        throw ConfigError("MatchConfig: lambda must lie in [0,1]");
    if (max_superpoints < 1) throw ConfigError("MatchConfig: max_superpoints must be >= 1");
    if (min_confidence < 0.0) throw ConfigError("MatchConfig: min_confidence must be >= 0");
    if (max_correspondences < 0) throw ConfigError("MatchConfig: max_correspondences must be >= 0");
    if (descriptor_scales < 1) throw ConfigError("MatchConfig: descriptor_scales must be >= 1");
    coarse_solver.validate();
    fine_solver.validate();
}

CorrespondenceSet mutual_argmax_pairs(const Eigen::MatrixXd& coupling, bool mnn_enabled) {
    CorrespondenceSet pairs;
    std::vector<int> row_best = row_argmax(coupling);
    if (!mnn_enabled) {
        for (Eigen::Index i = 0; i < coupling.rows(); ++i) {
            int j = row_best[static_cast<std::size_t>(i)];
            pairs.push_back({static_cast<int>(i), j, coupling(i, j)});
        }
        return pairs;
    }
    std::vector<int> col_best = row_argmax(coupling.transpose());
    for (Eigen::Index i = 0; i < coupling.rows(); ++i) {
        int j = row_best[static_cast<std::size_t>(i)];
        if (col_best[static_cast<std::size_t>(j)] == static_cast<int>(i)) {
            pairs.push_back({static_cast<int>(i), j, coupling(i, j)});
        }
    }
    return pairs;
}

CorrespondenceSet coarse_match(const Superpoints& sp_p, const Superpoints& sp_q,
                               const Eigen::MatrixXd& Fp, const Eigen::MatrixXd& Fq,
                               const OverlapScores& mu_p, const OverlapScores& mu_q,
                               const MatchConfig& cfg, const TraceSink& trace) {
    CostBundle bundle = build_cost_bundle(sp_p.points, sp_q.points, Fp, Fq, cfg.lambda_coarse);
    Eigen::MatrixXd coupling = solve_coupled_ot(bundle, mu_p, mu_q, cfg.coarse_solver, trace);
    CorrespondenceSet pairs = mutual_argmax_pairs(coupling, cfg.mnn_enabled);
    if (cfg.min_confidence > 0.0) {
        std::erase_if(pairs,
                      [&](const Correspondence& c) { return c.confidence <= cfg.min_confidence; });
    }
    return pairs;
}

namespace {

// Top-K member indices by overlap score descending, ties to the lowest index.
std::vector<int> truncate_patch(const std::vector<int>& members, const Eigen::VectorXd& scores,
                                int k) {
    std::vector<int> order = members;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    if (static_cast<int>(order.size()) > k) order.resize(static_cast<std::size_t>(k));
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

CorrespondenceSet fine_match(const Correspondence& coarse_pair, const Superpoints& sp_p,
                             const Superpoints& sp_q, const PointCloud& cloud_p,
                             const PointCloud& cloud_q, const Eigen::MatrixXd& fine_fp,
                             const Eigen::MatrixXd& fine_fq, const OverlapScores& fine_mu_p,
                             const OverlapScores& fine_mu_q, const MatchConfig& cfg,
                             std::vector<std::string>* notes) {
    auto note = [&](const std::string& msg) {
        if (notes != nullptr) notes->push_back(msg);
    };
    const std::string tag = "patch (" + std::to_string(coarse_pair.src) + "," +
                            std::to_string(coarse_pair.tgt) + ")";

    std::vector<int> src_idx = truncate_patch(sp_p.members[static_cast<std::size_t>(coarse_pair.src)],
                                              fine_mu_p.weights, cfg.patch_size);
    std::vector<int> tgt_idx = truncate_patch(sp_q.members[static_cast<std::size_t>(coarse_pair.tgt)],
                                              fine_mu_q.weights, cfg.patch_size);
    if (src_idx.empty() || tgt_idx.empty()) {
        note(tag + " skipped: empty after truncation");
        return {};
    }

    PointCloud patch_p, patch_q;
    Eigen::MatrixXd fp(static_cast<Eigen::Index>(src_idx.size()), fine_fp.cols());
    Eigen::MatrixXd fq(static_cast<Eigen::Index>(tgt_idx.size()), fine_fq.cols());
    OverlapScores mu_p, mu_q;
    mu_p.weights.resize(static_cast<Eigen::Index>(src_idx.size()));
    mu_q.weights.resize(static_cast<Eigen::Index>(tgt_idx.size()));
    for (std::size_t a = 0; a < src_idx.size(); ++a) {
        patch_p.points.push_back(cloud_p[src_idx[a]]);
        fp.row(static_cast<Eigen::Index>(a)) = fine_fp.row(src_idx[a]);
        mu_p.weights[static_cast<Eigen::Index>(a)] = fine_mu_p.weights[src_idx[a]];
    }
    for (std::size_t b = 0; b < tgt_idx.size(); ++b) {
        patch_q.points.push_back(cloud_q[tgt_idx[b]]);
        fq.row(static_cast<Eigen::Index>(b)) = fine_fq.row(tgt_idx[b]);
        mu_q.weights[static_cast<Eigen::Index>(b)] = fine_mu_q.weights[tgt_idx[b]];
    }

    Eigen::MatrixXd coupling;
    try {
        CostBundle bundle = build_cost_bundle(patch_p, patch_q, fp, fq, cfg.lambda_fine);
        coupling = solve_coupled_ot(bundle, mu_p, mu_q, cfg.fine_solver);
    } catch (const InfeasibleInstanceError&) {
        note(tag + " skipped: infeasible transport instance");
        return {};
    }

    CorrespondenceSet local = mutual_argmax_pairs(coupling, true);
    CorrespondenceSet global;
    global.reserve(local.size());
    for (const auto& c : local) {
        if (c.confidence <= cfg.min_confidence && cfg.min_confidence > 0.0) continue;
        global.push_back({src_idx[static_cast<std::size_t>(c.src)],
                          tgt_idx[static_cast<std::size_t>(c.tgt)], c.confidence});
    }
    return global;
}

PredictionResult predict_correspondences(const PointCloud& cloud_p, const PointCloud& cloud_q,
                                         const MatchConfig& cfg, const FeatureProvider& features,
                                         const OverlapProvider& overlap, int workers,
                                         const TraceSink& coarse_trace) {
    cfg.validate();
    if (cloud_p.empty() || cloud_q.empty())
        throw EmptyInputError("predict_correspondences: empty input cloud");

    PredictionResult result;

    double voxel = cfg.coarse_voxel;
    Superpoints sp_p = make_superpoints(cloud_p, voxel);
    Superpoints sp_q = make_superpoints(cloud_q, voxel);
    while (std::max(sp_p.points.size(), sp_q.points.size()) > cfg.max_superpoints) {
        voxel *= 1.25;
        result.notes.push_back("coarse_voxel raised to " + std::to_string(voxel) +
                               " to respect the superpoint cap");
        sp_p = make_superpoints(cloud_p, voxel);
        sp_q = make_superpoints(cloud_q, voxel);
    }

    Eigen::MatrixXd coarse_fp = features.source_superpoint_features(sp_p, cloud_p);
    Eigen::MatrixXd coarse_fq = features.target_superpoint_features(sp_q, cloud_q);
    OverlapScores coarse_mu_p = overlap.coarse_source(sp_p, cloud_p, cloud_q);
    OverlapScores coarse_mu_q = overlap.coarse_target(sp_q, cloud_q, cloud_p);

    result.coarse_pairs = coarse_match(sp_p, sp_q, coarse_fp, coarse_fq, coarse_mu_p, coarse_mu_q,
                                       cfg, coarse_trace);
    if (result.coarse_pairs.empty()) {
        result.notes.push_back("no coarse matches");
        return result;
    }

    Eigen::MatrixXd fine_fp = features.source_features(cloud_p);
    Eigen::MatrixXd fine_fq = features.target_features(cloud_q);
    OverlapScores fine_mu_p = overlap.fine_source(cloud_p, cloud_q);
    OverlapScores fine_mu_q = overlap.fine_target(cloud_q, cloud_p);

    const std::size_t n_pairs = result.coarse_pairs.size();
    std::vector<CorrespondenceSet> per_pair(n_pairs);
    std::vector<std::vector<std::string>> per_pair_notes(n_pairs);

    auto run_one = [&](std::size_t idx) {
        per_pair[idx] = fine_match(result.coarse_pairs[idx], sp_p, sp_q, cloud_p, cloud_q, fine_fp,
                                   fine_fq, fine_mu_p, fine_mu_q, cfg, &per_pair_notes[idx]);
    };

    if (workers <= 1 || n_pairs <= 1) {
        for (std::size_t i = 0; i < n_pairs; ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t i = next.fetch_add(1); i < n_pairs; i = next.fetch_add(1)) run_one(i);
        };
        std::vector<std::thread> pool;
        int n_threads = std::min<int>(workers, static_cast<int>(n_pairs));
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Union with duplicate (src,tgt) pairs merged by maximum confidence.
    std::map<std::pair<int, int>, double> merged;
    for (const auto& set : per_pair) {
        for (const auto& c : set) {
            auto key = std::make_pair(c.src, c.tgt);
            auto it = merged.find(key);
            if (it == merged.end() || c.confidence > it->second) merged[key] = c.confidence;
        }
    }
    for (const auto& [key, conf] : merged) {
        result.correspondences.push_back({key.first, key.second, conf});
    }
    if (cfg.max_correspondences > 0 &&
        result.correspondences.size() > static_cast<std::size_t>(cfg.max_correspondences)) {
        // Stable sort keeps the (src,tgt)-ordered ties deterministic.
        std::stable_sort(result.correspondences.begin(), result.correspondences.end(),
                         [](const Correspondence& a, const Correspondence& b) {
                             return a.confidence > b.confidence;
                         });
        result.correspondences.resize(static_cast<std::size_t>(cfg.max_correspondences));
    }
    for (auto& notes : per_pair_notes) {
        for (auto& n : notes) result.notes.push_back(std::move(n));
    }
    return result;
}

}  // namespace otreg
