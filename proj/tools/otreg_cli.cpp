// Command-line front end: synthetic pair generation, pairwise registration,
// raw solver runs, and batch evaluation.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <string>

#include "otreg/costs.hpp"
#include "otreg/error.hpp"
#include "otreg/experiment.hpp"
#include "otreg/io.hpp"
#include "otreg/otsolve.hpp"
#include "otreg/pipeline.hpp"
#include "otreg/pose.hpp"
#include "otreg/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

using nlohmann::json;

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw otreg::ConfigError("cannot open config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw otreg::ConfigError("malformed JSON in " + path + ": " + e.what());
    }
}

struct SynthArgs {
    std::string config;
    std::string out_prefix = "pair";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

int run_synth(const SynthArgs& args) {
    otreg::SynthConfig cfg;
    if (!args.config.empty()) cfg = otreg::synth_config_from_json(load_json(args.config));
    if (args.seed_set) cfg.seed = args.seed;
    cfg.validate();
    otreg::SynthPair pair = otreg::generate_pair(cfg);
    otreg::write_point_cloud(args.out_prefix + "_source.xyz", pair.source);
    otreg::write_point_cloud(args.out_prefix + "_target.xyz", pair.target);
    otreg::write_transform(args.out_prefix + "_gt.txt", pair.gt);
    otreg::write_correspondences(args.out_prefix + "_gt_pairs.txt", pair.gt_pairs);
    std::cout << "source=" << pair.source.size() << " target=" << pair.target.size()
              << " gt_pairs=" << pair.gt_pairs.size()
              << " measured_overlap=" << pair.measured_overlap << "\n";
    return kExitOk;
}

struct RegisterArgs {
    std::string source;
    std::string target;
    std::string config;
    std::string features_source;
    std::string features_target;
    std::string out_correspondences = "correspondences.txt";
    std::string out_transform = "transform.txt";
    std::string estimator = "ransac";
    std::string trace;
    int workers = 1;
};

int run_register(const RegisterArgs& args) {
    otreg::MatchConfig match;
    otreg::RansacConfig ransac;
    if (!args.config.empty()) {
        json j = load_json(args.config);
        if (!j.is_object()) throw otreg::ConfigError("register config must be a JSON object");
        for (const auto& item : j.items()) {
            if (item.key() == "match") {
                match = otreg::match_config_from_json(item.value());
            } else if (item.key() == "ransac") {
                ransac = otreg::ransac_config_from_json(item.value());
            } else {
                throw otreg::ConfigError("register config: unknown key '" + item.key() + "'");
            }
        }
    }
    if (args.estimator != "ransac" && args.estimator != "svd")
        throw otreg::ConfigError("--estimator must be 'ransac' or 'svd'");

    otreg::PointCloud source = otreg::read_point_cloud(args.source);
    otreg::PointCloud target = otreg::read_point_cloud(args.target);

    std::unique_ptr<otreg::FeatureProvider> features;
    if (!args.features_source.empty() || !args.features_target.empty()) {
        if (args.features_source.empty() || args.features_target.empty())
            throw otreg::ConfigError("--features-source and --features-target go together");
        features = std::make_unique<otreg::ExternalFeatureProvider>(
            otreg::read_matrix(args.features_source), otreg::read_matrix(args.features_target));
    } else if (match.feature_provider == "spectral") {
        features = std::make_unique<otreg::SpectralFeatureProvider>(match.descriptor_radius, 8, 2.5,
                                                                    match.descriptor_scales);
    } else {
        throw otreg::ConfigError("feature provider '" + match.feature_provider +
                                 "' needs feature files or ground truth; use 'spectral' or pass "
                                 "--features-source/--features-target");
    }
    if (match.overlap_provider != "uniform")
        throw otreg::ConfigError("register supports only the 'uniform' overlap provider");
    otreg::UniformOverlapProvider overlap;

    std::ofstream trace_file;
    otreg::TraceSink sink = nullptr;
    if (!args.trace.empty()) {
        trace_file.open(args.trace);
        if (!trace_file) throw otreg::ConfigError("cannot open trace file: " + args.trace);
        sink = [&](const otreg::OuterTraceRow& row) {
            trace_file << row.iteration << "\t" << row.xi2 << "\t" << row.objective << "\t"
                       << row.kl_row << "\t" << row.kl_col << "\n";
        };
    }

    otreg::PredictionResult prediction = otreg::predict_correspondences(
        source, target, match, *features, overlap, args.workers, sink);
    for (const auto& note : prediction.notes) std::cerr << "note: " << note << "\n";
    otreg::write_correspondences(args.out_correspondences, prediction.correspondences);

    if (prediction.correspondences.size() < 3)
        throw otreg::DegenerateGeometryError("fewer than 3 correspondences; cannot estimate pose");
    otreg::RigidTransform est;
    if (args.estimator == "ransac") {
        est = otreg::ransac_register(prediction.correspondences, source, target, ransac).transform;
    } else {
        Eigen::VectorXd weights(static_cast<Eigen::Index>(prediction.correspondences.size()));
        for (std::size_t k = 0; k < prediction.correspondences.size(); ++k)
            weights[static_cast<Eigen::Index>(k)] = prediction.correspondences[k].confidence;
        est = otreg::weighted_procrustes(prediction.correspondences, source, target, weights);
    }
    otreg::write_transform(args.out_transform, est);
    std::cout << "correspondences=" << prediction.correspondences.size() << "\n";
    return kExitOk;
}

struct SolveArgs {
    std::string cross;
    std::string struct_source;
    std::string struct_target;
    std::string mu_source;
    std::string mu_target;
    std::string config;
    std::string trace;
    std::string out = "coupling.txt";
};

int run_solve(const SolveArgs& args) {
    otreg::SolverConfig cfg;
    if (!args.config.empty()) cfg = otreg::solver_config_from_json(load_json(args.config));

    otreg::CostBundle bundle;
    bundle.cross = otreg::read_matrix(args.cross);
    const auto n = bundle.cross.rows();
    const auto m = bundle.cross.cols();
    bundle.struct_p = args.struct_source.empty() ? Eigen::MatrixXd::Zero(n, n).eval()
                                                 : otreg::read_matrix(args.struct_source);
    bundle.struct_q = args.struct_target.empty() ? Eigen::MatrixXd::Zero(m, m).eval()
                                                 : otreg::read_matrix(args.struct_target);

    otreg::OverlapScores mu_p, mu_q;
    mu_p.weights = args.mu_source.empty()
                       ? Eigen::VectorXd::Ones(n).eval()
                       : Eigen::VectorXd(otreg::read_matrix(args.mu_source).reshaped());
    mu_q.weights = args.mu_target.empty()
                       ? Eigen::VectorXd::Ones(m).eval()
                       : Eigen::VectorXd(otreg::read_matrix(args.mu_target).reshaped());

    std::ofstream trace_file;
    otreg::TraceSink sink = nullptr;
    if (!args.trace.empty()) {
        trace_file.open(args.trace);
        if (!trace_file) throw otreg::ConfigError("cannot open trace file: " + args.trace);
        sink = [&](const otreg::OuterTraceRow& row) {
            trace_file << row.iteration << "\t" << row.xi2 << "\t" << row.objective << "\t"
                       << row.kl_row << "\t" << row.kl_col << "\n";
        };
    }

    Eigen::MatrixXd coupling = otreg::solve_coupled_ot(bundle, mu_p, mu_q, cfg, sink);
    otreg::write_matrix(args.out, coupling);
    return kExitOk;
}

struct EvalArgs {
    std::string config;
    std::string out;
    std::string trace;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    bool timings = false;
};

int run_eval(const EvalArgs& args) {
    json scenario = load_json(args.config);
    if (!scenario.is_object()) throw otreg::ConfigError("scenario must be a JSON object");
    if (args.seed_set) scenario["seed"] = args.seed;
    if (args.workers > 0) scenario["workers"] = args.workers;
    bool with_timings = args.timings || scenario.value("record_timings", false);

    std::ofstream trace_file;
    std::ostream* trace = nullptr;
    if (!args.trace.empty()) {
        trace_file.open(args.trace);
        if (!trace_file) throw otreg::ConfigError("cannot open trace file: " + args.trace);
        trace = &trace_file;
    }

    otreg::EvalReport report = otreg::run_experiment(scenario, trace);
    std::string text = report.to_json(with_timings).dump(2);
    text += "\n";
    if (args.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(args.out);
        if (!out) throw otreg::ConfigError("cannot open output file: " + args.out);
        out << text;
    }

    for (const auto& rec : report.records) {
        if (!rec.processed) {
            std::cerr << "pair " << rec.id << " failed: " << rec.error << "\n";
            return kExitRuntime;
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Point cloud registration via coupled optimal transport"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic registration pair");
    synth->add_option("--config", synth_args.config, "Generator config JSON");
    synth->add_option("--out-prefix", synth_args.out_prefix, "Output file prefix");
    synth->add_option("--seed", synth_args.seed, "Seed override")
        ->each([&](const std::string&) { synth_args.seed_set = true; });

    RegisterArgs reg_args;
    auto* reg = app.add_subcommand("register", "Register a source cloud onto a target cloud");
    reg->add_option("source", reg_args.source, "Source point cloud file")->required();
    reg->add_option("target", reg_args.target, "Target point cloud file")->required();
    reg->add_option("--config", reg_args.config, "JSON with optional 'match'/'ransac' sections");
    reg->add_option("--features-source", reg_args.features_source, "Per-point source descriptors");
    reg->add_option("--features-target", reg_args.features_target, "Per-point target descriptors");
    reg->add_option("--out-correspondences", reg_args.out_correspondences);
    reg->add_option("--out-transform", reg_args.out_transform);
    reg->add_option("--estimator", reg_args.estimator, "'ransac' or 'svd'");
    reg->add_option("--workers", reg_args.workers, "Fine-match worker threads");
    reg->add_option("--trace", reg_args.trace, "Coarse solver trace file");

    SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "Run the coupled solver on cost matrices");
    solve->add_option("--cross", solve_args.cross, "Cross cost matrix file")->required();
    solve->add_option("--struct-source", solve_args.struct_source, "Source structure cost file");
    solve->add_option("--struct-target", solve_args.struct_target, "Target structure cost file");
    solve->add_option("--mu-source", solve_args.mu_source, "Source marginal file");
    solve->add_option("--mu-target", solve_args.mu_target, "Target marginal file");
    solve->add_option("--config", solve_args.config, "Solver config JSON");
    solve->add_option("--trace", solve_args.trace, "Outer iteration trace file");
    solve->add_option("--out", solve_args.out, "Coupling matrix output file");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Evaluate a scenario and emit a JSON report");
    eval->add_option("--config", eval_args.config, "Scenario JSON")->required();
    eval->add_option("--out", eval_args.out, "Report path (stdout when omitted)");
    eval->add_option("--trace", eval_args.trace, "Coarse solver trace file");
    eval->add_option("--seed", eval_args.seed, "Seed override")
        ->each([&](const std::string&) { eval_args.seed_set = true; });
    eval->add_option("--workers", eval_args.workers, "Worker threads override");
    eval->add_flag("--timings", eval_args.timings, "Include per-pair timings in the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args);
        if (reg->parsed()) return run_register(reg_args);
        if (solve->parsed()) return run_solve(solve_args);
        if (eval->parsed()) return run_eval(eval_args);
        return kExitConfig;
    } catch (const otreg::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
