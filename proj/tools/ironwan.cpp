#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "ironwan/cli/experiment.hpp"
#include "ironwan/cli/scenario.hpp"
#include "ironwan/eval/interpred_eval.hpp"
#include "ironwan/eval/rmip_eval.hpp"
#include "json.hpp"

namespace {

using namespace ironwan;

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int report(const char* kind, const std::string& message, int code) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

/// `path` or stdout when empty.
class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty()) return;
        if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) {
            std::filesystem::create_directories(dir);
        }
        file_.open(path, std::ios::binary);
        if (!file_) throw std::runtime_error("cannot write " + path);
    }
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
    std::ofstream file_;
};

struct RunArgs {
    std::string scenario;
    std::string out = "results";
    std::optional<std::uint64_t> seed;
    std::size_t threads = 0;
};

int cmd_run(const RunArgs& a) {
    auto file = cli::load_scenario(a.scenario);
    if (a.seed) {
        file.sweep.seeds.clear();
        file.base.seed = *a.seed;
    }
    const std::size_t threads = a.threads ? a.threads : std::max(1u, std::thread::hardware_concurrency());
    const auto results = cli::run_scenario(file, a.out, threads);
    std::size_t violations = 0;
    for (const auto& r : results) violations += r.metrics.duty_violations;
    std::cout << nlohmann::json{{"cells", results.size()},
                                {"out", a.out},
                                {"duty_violations", violations}}
                     .dump()
              << '\n';
    return 0;
}

struct RmipArgs {
    std::string trace;
    std::string truth;
    std::string out;
    std::size_t inject = 50;
    std::uint64_t seed = 1;
    std::optional<std::size_t> n;
    std::optional<double> e;
};

int cmd_rmip_eval(const RmipArgs& a) {
    std::ifstream in(a.trace);
    if (!in) throw cli::ConfigError("cannot read trace '" + a.trace + "'");
    const auto trace = eval::read_trace_csv(in);
    std::vector<eval::TraceChange> truth;
    std::size_t skipped_truth = 0;
    if (!a.truth.empty()) {
        std::ifstream t(a.truth);
        if (!t) throw cli::ConfigError("cannot read truth file '" + a.truth + "'");
        auto parsed = eval::read_truth_csv(t);
        truth = std::move(parsed.changes);
        skipped_truth = parsed.skipped;
    }
    eval::ChangeBenchmark bench;
    try {
        bench = eval::build_benchmark(trace.records, truth, a.inject, a.seed);
    } catch (const std::invalid_argument& e) {
        throw cli::ConfigError(e.what());
    }

    std::vector<eval::ChangeScore> scores;
    if (a.n || a.e) {
        rmip::RmipConfig cfg;
        if (a.n) {
            cfg.n = *a.n;
            if (cfg.n >= 2) cfg.t_crit = rmip::t_quantile_75(cfg.n - 1);
        }
        if (a.e) cfg.e = cfg.grace = *a.e;
        try {
            cfg.validate();
        } catch (const std::invalid_argument& e) {
            throw cli::ConfigError(e.what());
        }
        scores.push_back(eval::score_changes(bench, cfg));
    } else {
        scores = eval::score_grid(bench);
    }

    Output out(a.out);
    out.stream() << eval::score_csv_header() << '\n';
    for (const auto& s : scores) out.stream() << eval::score_csv_row(s) << '\n';
    std::cerr << nlohmann::json{{"streams", bench.streams.size()},
                                {"changes", bench.changes.size()},
                                {"skipped_lines", trace.skipped},
                                {"skipped_truth_lines", skipped_truth}}
                     .dump()
              << '\n';
    return 0;
}

struct InterPredArgs {
    std::string load = "all";
    std::string out;
    std::uint64_t seed = 1;
    double hours = 24.0;
};

int cmd_interpred_eval(const InterPredArgs& a) {
    std::vector<eval::LoadLevel> levels;
    if (a.load == "all") {
        levels = {eval::LoadLevel::Low, eval::LoadLevel::Medium, eval::LoadLevel::High};
    } else {
        try {
            levels = {eval::parse_load_level(a.load)};
        } catch (const std::invalid_argument& e) {
            throw cli::ConfigError(e.what());
        }
    }
    if (!(a.hours > 0.0)) throw cli::ConfigError("--hours must be positive");

    Output out(a.out);
    out.stream() << eval::policy_csv_header() << '\n';
    for (auto level : levels) {
        eval::TrafficSpec spec;
        spec.multiplier = eval::load_multiplier(level);
        spec.duration = static_cast<core::Micros>(a.hours * 3600.0 * core::kMicrosPerSecond);
        const auto stream = eval::synth_stream(spec, a.seed);
        eval::PolicyEvalOptions options;
        options.seed = a.seed;
        options.load_label = eval::to_string(level);
        const auto report = eval::evaluate_policies(stream, spec.duration, options);
        for (const auto& r : report.results) out.stream() << eval::policy_csv_row(r) << '\n';
    }
    return 0;
}

struct TraceArgs {
    eval::TraceSpec spec;
    double hours = 24.0;
    std::string out;
    std::string truth;
};

int cmd_gen_trace(TraceArgs a) {
    if (!(a.hours > 0.0)) throw cli::ConfigError("--hours must be positive");
    a.spec.duration = static_cast<core::Micros>(a.hours * 3600.0 * core::kMicrosPerSecond);
    eval::Trace trace;
    try {
        trace = eval::generate_trace(a.spec);
    } catch (const std::invalid_argument& e) {
        throw cli::ConfigError(e.what());
    }
    Output out(a.out);
    eval::write_trace_csv(out.stream(), trace.records);
    if (!a.truth.empty()) {
        Output truth(a.truth);
        eval::write_truth_csv(truth.stream(), trace.changes);
    }
    std::cerr << nlohmann::json{{"records", trace.records.size()},
                                {"periodic_nodes", trace.periodic_nodes.size()},
                                {"changes", trace.changes.size()}}
                     .dump()
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IRONWAN gateway overlay simulator and evaluation harnesses"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run every cell of a scenario sweep");
    run_cmd->add_option("--scenario", run.scenario, "Scenario YAML file")->required()->envname("IRONWAN_SCENARIO");
    run_cmd->add_option("--out", run.out, "Output directory")->envname("IRONWAN_OUT");
    run_cmd->add_option("--seed", run.seed, "Run this single seed instead of the sweep's list")->envname("IRONWAN_SEED");
    run_cmd->add_option("--threads", run.threads, "Worker threads (0 = hardware)")->envname("IRONWAN_THREADS");

    RmipArgs rmip;
    auto* rmip_cmd = app.add_subcommand("rmip-eval", "Score RMIP change detection on a trace");
    rmip_cmd->add_option("--trace", rmip.trace, "Trace CSV (node_addr,counter,arrival_time_us)")
        ->required()
        ->envname("IRONWAN_TRACE");
    rmip_cmd->add_option("--truth", rmip.truth, "Known changes already in the trace")->envname("IRONWAN_TRUTH");
    rmip_cmd->add_option("--inject", rmip.inject, "Changes to splice in")->envname("IRONWAN_INJECT");
    rmip_cmd->add_option("--out", rmip.out, "Result CSV (default stdout)")->envname("IRONWAN_OUT");
    rmip_cmd->add_option("--seed", rmip.seed, "Splice selection seed")->envname("IRONWAN_SEED");
    rmip_cmd->add_option("--n", rmip.n, "Window size (default: full grid)");
    rmip_cmd->add_option("--e", rmip.e, "Error threshold in seconds (default: full grid)");

    InterPredArgs ip;
    auto* ip_cmd = app.add_subcommand("interpred-eval", "Compare InterPred, random and next-used policies");
    ip_cmd->add_option("--load", ip.load, "low, medium, high or all")->envname("IRONWAN_LOAD");
    ip_cmd->add_option("--out", ip.out, "Result CSV (default stdout)")->envname("IRONWAN_OUT");
    ip_cmd->add_option("--seed", ip.seed, "Traffic and policy seed")->envname("IRONWAN_SEED");
    ip_cmd->add_option("--hours", ip.hours, "Simulated hours")->envname("IRONWAN_HOURS");

    TraceArgs tr;
    auto* tr_cmd = app.add_subcommand("gen-trace", "Generate a synthetic uplink trace");
    tr_cmd->add_option("--out", tr.out, "Trace CSV (default stdout)")->envname("IRONWAN_OUT");
    tr_cmd->add_option("--truth", tr.truth, "Write the injected changes here")->envname("IRONWAN_TRUTH");
    tr_cmd->add_option("--seed", tr.spec.seed, "Seed")->envname("IRONWAN_SEED");
    tr_cmd->add_option("--nodes", tr.spec.nodes, "Node count")->envname("IRONWAN_NODES");
    tr_cmd->add_option("--hours", tr.hours, "Trace length in hours")->envname("IRONWAN_HOURS");
    tr_cmd->add_option("--periodic", tr.spec.periodic_fraction, "Fraction of periodic nodes");
    tr_cmd->add_option("--jitter", tr.spec.jitter_s, "Per-message delay bound, seconds");
    tr_cmd->add_option("--loss", tr.spec.loss, "Per-message loss probability");
    tr_cmd->add_option("--changes", tr.spec.changes, "Periodic nodes that change period once");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report("config", e.what(), kExitConfig);
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*rmip_cmd) return cmd_rmip_eval(rmip);
        if (*ip_cmd) return cmd_interpred_eval(ip);
        if (*tr_cmd) return cmd_gen_trace(tr);
    } catch (const cli::ConfigError& e) {
        return report("config", e.what(), kExitConfig);
    } catch (const std::invalid_argument& e) {
        return report("config", e.what(), kExitConfig);
    } catch (const std::exception& e) {
        return report("runtime", e.what(), kExitRuntime);
    }
    return kExitConfig;
}
