#include "otreg/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <thread>

#include "otreg/error.hpp"
#include "otreg/io.hpp"

namespace otreg {
namespace {

using nlohmann::json;

// Pulls known keys with defaults and rejects unknown ones.
class JsonReader {
public:
    JsonReader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
        if (!j_.is_object()) throw ConfigError(what_ + ": expected a JSON object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(what_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.contains(item.key()))
                throw ConfigError(what_ + ": unknown key '" + item.key() + "'");
        }
    }

private:
    const json& j_;
    std::string what_;
    std::set<std::string> seen_;
};

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double now_ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace

SolverConfig solver_config_from_json(const json& j) {
    SolverConfig cfg;
    JsonReader r(j, "solver");
    r.get("xi1", cfg.xi1);
    r.get("xi2_final", cfg.xi2_final);
    r.get("tau", cfg.tau);
    r.get("epsilon", cfg.epsilon);
    r.get("outer_iters", cfg.outer_iters);
    r.get("inner_iters", cfg.inner_iters);
    r.get("gamma_floor", cfg.gamma_floor);
    r.get("ramp_xi2", cfg.ramp_xi2);
    r.get("inner_early_exit", cfg.inner_early_exit);
    r.get("inner_early_exit_tol", cfg.inner_early_exit_tol);
    r.finish();
    cfg.validate();
    return cfg;
}

MatchConfig match_config_from_json(const json& j) {
    MatchConfig cfg;
    JsonReader r(j, "match");
    r.get("coarse_voxel", cfg.coarse_voxel);
    r.get("patch_size", cfg.patch_size);
    r.get("lambda_coarse", cfg.lambda_coarse);
    r.get("lambda_fine", cfg.lambda_fine);
    r.get("mnn_enabled", cfg.mnn_enabled);
    if (r.has("coarse_solver")) cfg.coarse_solver = solver_config_from_json(r.raw("coarse_solver"));
    if (r.has("fine_solver")) cfg.fine_solver = solver_config_from_json(r.raw("fine_solver"));
    r.get("feature_provider", cfg.feature_provider);
    r.get("overlap_provider", cfg.overlap_provider);
    r.get("descriptor_radius", cfg.descriptor_radius);
    r.get("overlap_radius", cfg.overlap_radius);
    r.get("max_superpoints", cfg.max_superpoints);
    r.get("min_confidence", cfg.min_confidence);
    r.get("max_correspondences", cfg.max_correspondences);
    r.get("descriptor_scales", cfg.descriptor_scales);
    r.finish();
    cfg.validate();
    return cfg;
}

SynthConfig synth_config_from_json(const json& j) {
    SynthConfig cfg;
    JsonReader r(j, "synth");
    r.get("n_points", cfg.n_points);
    r.get("overlap_fraction", cfg.overlap_fraction);
    r.get("noise_sigma", cfg.noise_sigma);
    r.get("outlier_fraction", cfg.outlier_fraction);
    r.get("density_skew", cfg.density_skew);
    r.get("rotation_magnitude_deg", cfg.rotation_magnitude_deg);
    r.get("translation_magnitude", cfg.translation_magnitude);
    r.get("seed", cfg.seed);
    r.get("base", cfg.base);
    r.get("pair_radius", cfg.pair_radius);
    r.finish();
    cfg.validate();
    return cfg;
}

RansacConfig ransac_config_from_json(const json& j) {
    RansacConfig cfg;
    JsonReader r(j, "ransac");
    r.get("max_iters", cfg.max_iters);
    r.get("inlier_threshold", cfg.inlier_threshold);
    r.get("sample_size", cfg.sample_size);
    r.get("confidence", cfg.confidence);
    r.get("seed", cfg.seed);
    r.finish();
    cfg.validate();
    return cfg;
}

EvalThresholds thresholds_from_json(const json& j) {
    EvalThresholds t;
    JsonReader r(j, "thresholds");
    r.get("inlier_radius", t.inlier_radius);
    r.get("fmr_min_inlier_ratio", t.fmr_min_inlier_ratio);
    r.get("rr_rmse", t.rr_rmse);
    r.get("rr_rre_deg", t.rr_rre_deg);
    r.get("rr_rte", t.rr_rte);
    r.finish();
    t.validate();
    return t;
}

void EvalReport::recompute_aggregates(const EvalThresholds& thresholds) {
    std::vector<double> irs;
    double sum = 0.0;
    for (const auto& rec : records) {
        irs.push_back(rec.inlier_ratio);
        sum += rec.inlier_ratio;
    }
    mean_inlier_ratio = records.empty() ? 0.0 : sum / static_cast<double>(records.size());
    fmr = feature_matching_recall(irs, thresholds.fmr_min_inlier_ratio);
    rr = registration_recall(records, thresholds, rr_mode);
}

nlohmann::json EvalReport::to_json(bool with_timings) const {
    auto finite_or_null = [](double v) -> json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    json pairs = json::array();
    for (const auto& rec : records) {
        json p;
        p["id"] = rec.id;
        p["processed"] = rec.processed;
        p["error"] = rec.error;
        p["n_correspondences"] = rec.n_correspondences;
        p["empty_correspondences"] = rec.empty_correspondences;
        p["inlier_ratio"] = rec.inlier_ratio;
        p["rmse"] = finite_or_null(rec.rmse);
        p["rre_deg"] = finite_or_null(rec.rre_deg);
        p["rte"] = finite_or_null(rec.rte);
        p["measured_overlap"] = rec.measured_overlap;
        if (with_timings) {
            p["model_ms"] = rec.model_ms;
            p["pose_ms"] = rec.pose_ms;
        }
        pairs.push_back(std::move(p));
    }
    json out;
    out["aggregates"] = {{"mean_inlier_ratio", mean_inlier_ratio},
                         {"fmr", fmr},
                         {"rr", rr},
                         {"rr_mode", rr_mode == RecallMode::Rmse ? "rmse" : "rre_rte"}};
    out["pairs"] = std::move(pairs);
    return out;
}

namespace {

struct PairInput {
    std::string id;
    SynthPair data;
    bool generated = false;  // synthetic pairs are generated lazily in the worker
    SynthConfig synth;
};

struct ScenarioSpec {
    std::uint64_t seed = 0;
    int workers = 1;
    bool record_timings = false;
    std::string estimator = "ransac";
    RecallMode rr_mode = RecallMode::Rmse;
    MatchConfig match;
    RansacConfig ransac;
    EvalThresholds thresholds;
    std::vector<PairInput> pairs;
};

CorrespondenceSet mutual_gt_pairs(const PointCloud& src, const PointCloud& tgt,
                                  const RigidTransform& gt, double radius) {
    PointCloud aligned = apply_transform(src, gt);
    SpatialGrid grid_q(tgt, radius);
    SpatialGrid grid_p(aligned, radius);
    CorrespondenceSet pairs;
    for (int i = 0; i < aligned.size(); ++i) {
        auto [j, dist] = grid_q.nearest(aligned[i]);
        if (dist >= radius) continue;
        if (grid_p.nearest(tgt[j]).first == i) pairs.push_back({i, j, 1.0});
    }
    return pairs;
}

ScenarioSpec parse_scenario(const json& scenario) {
    ScenarioSpec spec;
    JsonReader r(scenario, "scenario");
    r.get("seed", spec.seed);
    r.get("workers", spec.workers);
    r.get("record_timings", spec.record_timings);
    r.get("estimator", spec.estimator);
    std::string mode = "rmse";
    r.get("rr_mode", mode);
    if (mode == "rmse") {
        spec.rr_mode = RecallMode::Rmse;
    } else if (mode == "rre_rte") {
        spec.rr_mode = RecallMode::RreRte;
    } else {
        throw ConfigError("scenario.rr_mode must be 'rmse' or 'rre_rte'");
    }
    if (spec.estimator != "ransac" && spec.estimator != "svd")
        throw ConfigError("scenario.estimator must be 'ransac' or 'svd'");
    if (spec.workers < 1) throw ConfigError("scenario.workers must be >= 1");

    if (r.has("match")) spec.match = match_config_from_json(r.raw("match"));
    if (r.has("ransac")) spec.ransac = ransac_config_from_json(r.raw("ransac"));
    if (r.has("thresholds")) spec.thresholds = thresholds_from_json(r.raw("thresholds"));

    if (!r.has("pairs")) throw ConfigError("scenario: missing 'pairs'");
    JsonReader pr(r.raw("pairs"), "scenario.pairs");
    if (pr.has("count")) {
        int count = 0;
        pr.get("count", count);
        if (count < 1) throw ConfigError("scenario.pairs.count must be >= 1");
        SynthConfig synth;
        if (pr.has("synth")) synth = synth_config_from_json(pr.raw("synth"));
        std::vector<double> overlap_range;
        pr.get("overlap_range", overlap_range);
        if (!overlap_range.empty() &&
            (overlap_range.size() != 2 || overlap_range[0] > overlap_range[1]))
            throw ConfigError("scenario.pairs.overlap_range must be [lo, hi] with lo <= hi");
        for (int i = 0; i < count; ++i) {
            PairInput input;
            input.id = "pair_" + std::to_string(i);
            input.synth = synth;
            input.synth.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(i));
            if (!overlap_range.empty()) {
                double t = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
                input.synth.overlap_fraction =
                    overlap_range[0] + t * (overlap_range[1] - overlap_range[0]);
            }
            spec.pairs.push_back(std::move(input));
        }
    } else if (pr.has("files")) {
        double pair_radius = 0.0375;
        pr.get("pair_radius", pair_radius);
        for (const auto& entry : pr.raw("files")) {
            JsonReader er(entry, "scenario.pairs.files[]");
            std::string source, target, gt, id;
            er.get("source", source);
            er.get("target", target);
            er.get("gt", gt);
            er.get("id", id);
            er.finish();
            if (source.empty() || target.empty() || gt.empty())
                throw ConfigError("scenario.pairs.files entries need source, target and gt paths");
            PairInput input;
            input.id = id.empty() ? source : id;
            input.generated = true;
            input.data.source = read_point_cloud(source);
            input.data.target = read_point_cloud(target);
            input.data.gt = read_transform(gt);
            input.data.gt_pairs = mutual_gt_pairs(input.data.source, input.data.target,
                                                  input.data.gt, pair_radius);
            spec.pairs.push_back(std::move(input));
        }
    } else {
        throw ConfigError("scenario.pairs needs either 'count' (+'synth') or 'files'");
    }
    pr.finish();
    r.finish();
    return spec;
}

std::unique_ptr<FeatureProvider> make_feature_provider(const MatchConfig& match,
                                                       const RigidTransform& gt) {
    if (match.feature_provider == "oracle") return std::make_unique<OracleFeatureProvider>(gt);
    if (match.feature_provider == "spectral")
        return std::make_unique<SpectralFeatureProvider>(match.descriptor_radius, 8, 2.5,
                                                         match.descriptor_scales);
    throw ConfigError("unknown feature provider: " + match.feature_provider);
}

std::unique_ptr<OverlapProvider> make_overlap_provider(const MatchConfig& match,
                                                       const RigidTransform& gt) {
    if (match.overlap_provider == "uniform") return std::make_unique<UniformOverlapProvider>();
    if (match.overlap_provider == "ground_truth")
        return std::make_unique<GroundTruthOverlapProvider>(gt, match.overlap_radius);
    throw ConfigError("unknown overlap provider: " + match.overlap_provider);
}

}  // namespace

EvalReport run_experiment(const json& scenario, std::ostream* trace) {
    ScenarioSpec spec = parse_scenario(scenario);
    const std::size_t n = spec.pairs.size();
    std::vector<PairRecord> records(n);
    std::vector<std::string> trace_buffers(n);

    auto run_pair = [&](std::size_t i) {
        PairInput& input = spec.pairs[i];
        PairRecord& rec = records[i];
        rec.id = input.id;
        try {
            if (!input.generated) {
                input.data = generate_pair(input.synth);
                input.generated = true;
            }
            rec.measured_overlap = input.data.measured_overlap;
            auto features = make_feature_provider(spec.match, input.data.gt);
            auto overlap = make_overlap_provider(spec.match, input.data.gt);

            TraceSink sink = nullptr;
            if (trace != nullptr) {
                sink = [&](const OuterTraceRow& row) {
                    trace_buffers[i] += input.id + "\t" + std::to_string(row.iteration) + "\t" +
                                        fmt_double(row.xi2) + "\t" + fmt_double(row.objective) +
                                        "\t" + fmt_double(row.kl_row) + "\t" +
                                        fmt_double(row.kl_col) + "\n";
                };
            }

            auto t_model = std::chrono::steady_clock::now();
            int inner_workers = n > 1 ? 1 : spec.workers;
            PredictionResult prediction =
                predict_correspondences(input.data.source, input.data.target, spec.match,
                                        *features, *overlap, inner_workers, sink);
            rec.model_ms = now_ms_since(t_model);
            rec.n_correspondences = static_cast<int>(prediction.correspondences.size());

            bool empty = false;
            rec.inlier_ratio = inlier_ratio(prediction.correspondences, input.data.source,
                                            input.data.target, input.data.gt,
                                            spec.thresholds.inlier_radius, &empty);
            rec.empty_correspondences = empty;

            auto t_pose = std::chrono::steady_clock::now();
            if (prediction.correspondences.size() >= 3) {
                RigidTransform est;
                if (spec.estimator == "ransac") {
                    RansacConfig rcfg = spec.ransac;
                    rcfg.seed = mix_seed(spec.ransac.seed ^ spec.seed,
                                         0xabcd0000ull + static_cast<std::uint64_t>(i));
                    est = ransac_register(prediction.correspondences, input.data.source,
                                          input.data.target, rcfg)
                              .transform;
                } else {
                    Eigen::VectorXd weights(
                        static_cast<Eigen::Index>(prediction.correspondences.size()));
                    for (std::size_t k = 0; k < prediction.correspondences.size(); ++k)
                        weights[static_cast<Eigen::Index>(k)] =
                            prediction.correspondences[k].confidence;
                    est = weighted_procrustes(prediction.correspondences, input.data.source,
                                              input.data.target, weights);
                }
                auto [rre, rte] = pose_error(est, input.data.gt);
                rec.rre_deg = rre;
                rec.rte = rte;
                if (!input.data.gt_pairs.empty()) {
                    rec.rmse = rmse_under_transform(input.data.source, input.data.gt_pairs,
                                                    input.data.target, est);
                }
            } else {
                rec.error = "fewer than 3 correspondences; pose not estimated";
            }
            rec.pose_ms = now_ms_since(t_pose);
            rec.processed = true;
        } catch (const std::exception& e) {
            rec.processed = false;
            rec.error = e.what();
        }
    };

    if (spec.workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) run_pair(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_pair(i);
        };
        std::vector<std::thread> pool;
        int n_threads = std::min<int>(spec.workers, static_cast<int>(n));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (trace != nullptr) {
        for (const auto& buf : trace_buffers) *trace << buf;
    }

    EvalReport report;
    report.records = std::move(records);
    report.rr_mode = spec.rr_mode;
    report.recompute_aggregates(spec.thresholds);
    return report;
}

EvalReport run_experiment_file(const std::string& path, std::ostream* trace) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    json scenario;
    try {
        in >> scenario;
    } catch (const json::exception& e) {
        throw ConfigError("malformed scenario JSON in " + path + ": " + e.what());
    }
    return run_experiment(scenario, trace);
}

}  // namespace otreg
