#pragma once

#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "otreg/metrics.hpp"
#include "otreg/pipeline.hpp"
#include "otreg/pose.hpp"
#include "otreg/synth.hpp"

namespace otreg {

/// JSON config readers. Unknown keys are rejected so typos fail loudly; all
/// fields are optional and default to the struct defaults.
SolverConfig solver_config_from_json(const nlohmann::json& j);
MatchConfig match_config_from_json(const nlohmann::json& j);
SynthConfig synth_config_from_json(const nlohmann::json& j);
RansacConfig ransac_config_from_json(const nlohmann::json& j);
EvalThresholds thresholds_from_json(const nlohmann::json& j);

struct EvalReport {
    std::vector<PairRecord> records;
    double mean_inlier_ratio = 0.0;
    double fmr = 0.0;
    double rr = 0.0;
    RecallMode rr_mode = RecallMode::Rmse;

    /// Deterministic serialization; timings are included only on request so
    /// that identical runs produce identical bytes.
    nlohmann::json to_json(bool with_timings) const;

    /// Recomputes the aggregate fields from the records.
    void recompute_aggregates(const EvalThresholds& thresholds);
};

/// Runs a scenario: per pair, correspondence prediction plus pose estimation
/// ("ransac" or "svd"), then IR/RMSE/RRE/RTE against ground truth. Per-pair
/// failures are recorded and do not abort the batch.
/// Scenario keys: seed, workers, record_timings, estimator, rr_mode,
/// pairs ({count, synth} or {files}), match, ransac, thresholds.
EvalReport run_experiment(const nlohmann::json& scenario, std::ostream* trace = nullptr);

EvalReport run_experiment_file(const std::string& path, std::ostream* trace = nullptr);

}  // namespace otreg
