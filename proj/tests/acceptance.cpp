// Acceptance run: one PASS/FAIL line per criterion, also written to acceptance_report.txt.
// Exit status is 0 once every criterion has been evaluated; with --strict it is 1 if any failed.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ironwan/cli/experiment.hpp"
#include "ironwan/core/random.hpp"
#include "ironwan/eval/interpred_eval.hpp"
#include "ironwan/eval/rmip_eval.hpp"
#include "ironwan/interpred/interpred.hpp"
#include "ironwan/netsim/netsim.hpp"
#include "ironwan/phy/duty_cycle.hpp"
#include "ironwan/rmip/rmip.hpp"

using namespace ironwan;
using netsim::SystemKind;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;
std::ofstream report;

void line(const std::string& text) {
    std::printf("%s\n", text.c_str());
    std::fflush(stdout);
    report << text << '\n' << std::flush;
}

void verdict(int id, bool ok, const std::string& detail) {
    line(std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + detail);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};
const std::vector<int> kRetx{2, 4, 6, 8};

/// 200 nodes, 4 km², 6 gateways, 4 owners, 4 h, medium load.
netsim::ScenarioConfig scaled(SystemKind system, std::size_t networks, int retx, std::uint64_t seed) {
    netsim::ScenarioConfig c;
    c.system = system;
    c.networks = networks;
    c.retx_limit = retx;
    c.seed = seed;
    c.load = cli::parse_load("medium").fraction;
    c.event_log = true;
    return c;
}

std::string key(SystemKind s, std::size_t networks, int retx) {
    return fmt("%s_net%zu_retx%d", netsim::to_string(s), networks, retx);
}

std::vector<cli::Cell> network_cells() {
    std::vector<cli::Cell> cells;
    auto add = [&](SystemKind s, std::size_t networks, int retx) {
        for (auto seed : kSeeds) cells.push_back({key(s, networks, retx), "medium", scaled(s, networks, retx, seed)});
    };
    add(SystemKind::LoRaWAN, 1, 8);
    for (int r : kRetx) add(SystemKind::LoRaWAN, 4, r);
    for (int r : kRetx) add(SystemKind::IRONWAN, 4, r);
    add(SystemKind::WCS, 4, 8);
    return cells;
}

/// Per-seed metrics of one cell id, in seed order.
using ByCell = std::map<std::string, std::vector<netsim::RunMetrics>>;

ByCell group(const std::vector<cli::CellResult>& results) {
    ByCell out;
    for (const auto& r : results) out[r.cell.id].push_back(r.metrics);
    return out;
}

double mean_of(const std::vector<netsim::RunMetrics>& runs, auto get) {
    double sum = 0.0;
    for (const auto& m : runs) sum += get(m);
    return sum / static_cast<double>(runs.size());
}

double pdr(const netsim::RunMetrics& m) { return m.pdr.value_or(0.0); }
double min_pdr(const netsim::RunMetrics& m) { return m.min_node_pdr.value_or(0.0); }
double unique(const netsim::RunMetrics& m) { return m.unique_per_node; }

std::string csv_of(const std::vector<cli::CellResult>& results) {
    std::ostringstream out;
    cli::write_metrics_csv(out, results);
    return out.str();
}

// ---- criterion 8 oracles, written independently of the library ----------

bool check_sarsa() {
    // Q += alpha * (r + gamma * Q' - Q)
    struct Case {
        float q, q_next;
        double r, alpha, gamma;
    };
    const Case cases[] = {{0.0f, 0.0f, 0.875, 0.8, 0.1}, {0.5f, -1.0f, -4.5, 0.8, 0.1},
                          {-2.0f, 3.0f, 0.4375, 0.5, 0.9}, {1.0f, 1.0f, 0.0, 0.0, 0.1}};
    for (const auto& c : cases) {
        interpred::QTable q(27);
        q.row(1)[4] = c.q;
        q.row(2)[7] = c.q_next;
        interpred::sarsa_update(q, 1, 4, c.r, 2, 7, c.alpha, c.gamma);
        const double expected = c.q + c.alpha * (c.r + c.gamma * c.q_next - c.q);
        if (std::abs(q.value(1, 4) - expected) > 1e-6) return false;
    }
    return true;
}

bool check_rewards() {
    for (int F = 1; F <= 12; ++F) {
        for (int i = 1; i <= F; ++i) {
            for (int m = 0; m <= 6; ++m) {
                const double good = 1.0 - static_cast<double>(i) / F;
                const double expected = m == 0 ? good : -2.0 * m * good;
                if (interpred::reward_transmit(i, m, F) != expected) return false;
            }
        }
    }
    core::Rng rng(8);
    for (int trial = 0; trial < 2000; ++trial) {
        const int F = 1 + static_cast<int>(rng.below(10));
        interpred::Counterfactual cf;
        cf.F = F;
        cf.C = 3;
        cf.m.resize(static_cast<std::size_t>(F * 3));
        for (auto& v : cf.m) v = static_cast<int>(rng.below(4));
        const int channel = static_cast<int>(rng.below(3));
        double sum = 0.0;  // all would-be rewards on the channel, good and bad alike
        for (int i = 1; i <= F; ++i) {
            const int m = cf.at(channel, i);
            const double g = 1.0 - static_cast<double>(i) / F;
            sum += m == 0 ? g : -2.0 * m * g;
        }
        if (interpred::reward_of({0, channel}, cf) != sum / F) return false;
        const int slot = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(F)));
        if (interpred::reward_of({slot, channel}, cf) != interpred::reward_transmit(slot, cf.at(channel, slot), F))
            return false;
    }
    return true;
}

bool check_fill_missing() {
    core::Rng rng(9);
    rmip::RmipConfig cfg;
    for (int trial = 0; trial < 20000; ++trial) {
        rmip::RmipNodeState s(core::NodeAddr{1});
        s.has_last = true;
        s.last_counter = static_cast<std::uint16_t>(rng.next());
        s.last_arrival = core::SimTime{static_cast<std::int64_t>(rng.below(1ULL << 40))};
        const auto gap = static_cast<std::uint16_t>(1 + rng.below(64));
        const auto counter = static_cast<std::uint16_t>(s.last_counter + gap);
        const auto elapsed = static_cast<core::Micros>(1 + rng.below(1ULL << 32));
        const auto parts = rmip::fill_missing(s, counter, s.last_arrival + elapsed, cfg);
        if (!parts || parts->size() != gap) return false;
        if (std::accumulate(parts->begin(), parts->end(), core::Micros{0}) != elapsed) return false;
    }
    return true;
}

int run_all() {
    const auto started = Clock::now();
    const std::size_t threads = std::max(1u, std::thread::hardware_concurrency());

    // ---- network simulation: criteria 1-5 and the duty audit of 8 ----
    const auto cells = network_cells();
    std::atomic<std::uint64_t> violations{0};
    std::atomic<std::size_t> audited{0};
    std::mutex audit_mutex;
    std::vector<std::string> violation_notes;
    const auto t_sim = Clock::now();
    const auto results = cli::run_cells(cells, threads, [&](const cli::Cell& cell, const core::EventLog& log) {
        const auto v = phy::audit_duty_cycle(netsim::tx_records(log));
        ++audited;
        if (v.empty()) return;
        violations += v.size();
        std::lock_guard lock(audit_mutex);
        violation_notes.push_back(fmt("%s seed %llu: %zu", cell.id.c_str(),
                                      static_cast<unsigned long long>(cell.config.seed), v.size()));
    });
    const double sim_s = seconds_since(t_sim);
    auto by = group(results);
    line(fmt("# %zu simulation runs in %.1f s", results.size(), sim_s));

    const auto& lw1 = by[key(SystemKind::LoRaWAN, 1, 8)];
    const auto& lw4 = by[key(SystemKind::LoRaWAN, 4, 8)];
    const auto& iw4 = by[key(SystemKind::IRONWAN, 4, 8)];
    const auto& wcs = by[key(SystemKind::WCS, 4, 8)];

    {
        const double pdr_ratio = mean_of(lw1, pdr) / mean_of(lw4, pdr);
        const double uniq_ratio = mean_of(lw1, unique) / mean_of(lw4, unique);
        // Ten runs of the partitioning study at this scale, timed from the batch average.
        const double est_runtime = sim_s / static_cast<double>(results.size()) * 10.0;
        verdict(1, pdr_ratio >= 1.3 && uniq_ratio >= 1.3 && est_runtime < 300.0,
                fmt("1-owner/4-owner PDR %.3f (>= 1.3), unique/node %.3f (>= 1.3), ~%.0f s", pdr_ratio, uniq_ratio,
                    est_runtime));
    }
    {
        bool every_seed = true;
        std::string seeds;
        for (std::size_t i = 0; i < kSeeds.size(); ++i) {
            every_seed &= pdr(iw4[i]) >= pdr(lw4[i]);
            seeds += fmt(" s%zu %.3f/%.3f", i + 1, pdr(iw4[i]), pdr(lw4[i]));
        }
        const double gain_pp = 100.0 * (mean_of(iw4, min_pdr) - mean_of(lw4, min_pdr));
        verdict(2, every_seed && gain_pp >= 10.0,
                fmt("PDR IRONWAN/LoRaWAN%s (every seed %s); min node PDR %.3f vs %.3f, +%.1f pp (>= 10)",
                    seeds.c_str(), every_seed ? "ok" : "violated", mean_of(iw4, min_pdr), mean_of(lw4, min_pdr),
                    gain_pp));
    }
    {
        const auto retx = [](const netsim::RunMetrics& m) { return m.no_retx; };
        const double ratio = mean_of(iw4, retx) / mean_of(lw4, retx);
        verdict(3, ratio <= 0.85,
                fmt("NoReTx IRONWAN %.3f vs LoRaWAN %.3f, ratio %.3f (<= 0.85)", mean_of(iw4, retx),
                    mean_of(lw4, retx), ratio));
    }
    {
        std::map<SystemKind, std::vector<double>> curve;
        std::string text;
        for (auto s : {SystemKind::LoRaWAN, SystemKind::IRONWAN}) {
            text += fmt(" %s", netsim::to_string(s));
            for (int r : kRetx) {
                curve[s].push_back(mean_of(by[key(s, 4, r)], pdr));
                text += fmt(" %.3f", curve[s].back());
            }
        }
        bool monotone = true;
        for (auto& [s, v] : curve)
            for (std::size_t i = 1; i < v.size(); ++i) monotone &= v[i] >= v[i - 1] - 0.02;
        const bool order = curve[SystemKind::LoRaWAN][0] < curve[SystemKind::IRONWAN][0];
        verdict(4, order && monotone,
                fmt("PDR at retx 2/4/6/8:%s; LoRaWAN(2) < IRONWAN(2) %s; monotone within 2 pp %s", text.c_str(),
                    order ? "yes" : "no", monotone ? "yes" : "no"));
    }
    {
        bool ordering = true;
        std::string seeds;
        for (std::size_t i = 0; i < kSeeds.size(); ++i) {
            ordering &= wcs[i].unique_received >= iw4[i].unique_received &&
                        iw4[i].unique_received >= lw4[i].unique_received;
            seeds += fmt(" s%zu %llu/%llu/%llu", i + 1, static_cast<unsigned long long>(wcs[i].unique_received),
                         static_cast<unsigned long long>(iw4[i].unique_received),
                         static_cast<unsigned long long>(lw4[i].unique_received));
        }
        const auto wcs_cost = [](const netsim::RunMetrics& m) { return static_cast<double>(m.wcs_overhead); };
        const auto g2g = [](const netsim::RunMetrics& m) { return static_cast<double>(m.g2g_messages); };
        const double cost_ratio = mean_of(wcs, wcs_cost) / mean_of(iw4, g2g);
        verdict(5, ordering && cost_ratio >= 2.0,
                fmt("unique WCS/IRONWAN/LoRaWAN%s (ordering %s); WCS overhead %.0f vs IRONWAN G2G %.0f, ratio %.2f "
                    "(>= 2)",
                    seeds.c_str(), ordering ? "ok" : "violated", mean_of(wcs, wcs_cost), mean_of(iw4, g2g),
                    cost_ratio));
    }

    // ---- criterion 6: change detection ----
    {
        eval::TraceSpec spec;
        spec.nodes = 200;
        spec.seed = 1;
        const auto trace = eval::generate_trace(spec);
        const auto bench = eval::build_benchmark(trace.records, trace.changes, 50, 1);
        const auto score = eval::score_changes(bench, rmip::RmipConfig{});
        const auto t0 = Clock::now();
        const auto grid = eval::score_grid(bench);
        const double grid_s = seconds_since(t0);
        const double p = score.precision().value_or(0.0);
        const double r = score.recall().value_or(0.0);
        verdict(6, bench.changes.size() == 50 && p > 0.96 && r > 0.96 && grid.size() == 44 && grid_s < 60.0,
                fmt("n=10 e=1: precision %.3f, recall %.3f (> 0.96) over %zu changes; grid of %zu cells in %.1f s "
                    "(< 60)",
                    p, r, bench.changes.size(), grid.size(), grid_s));
    }

    // ---- criteria 7 and 10: InterPred at high load over 24 h ----
    eval::PolicyEvalReport high;
    {
        eval::TrafficSpec spec;
        spec.multiplier = eval::load_multiplier(eval::LoadLevel::High);
        const auto stream = eval::synth_stream(spec, 1);
        eval::PolicyEvalOptions options;
        options.seed = 1;
        options.load_label = "high";
        high = eval::evaluate_policies(stream, spec.duration, options);
        const auto& ip = high.results[0];
        const auto& rnd = high.results[1];
        const auto& next = high.results[2];
        const bool ok = ip.bad_ratio() <= 0.13 && rnd.bad_ratio() >= 0.16 && next.bad_ratio() >= 0.19 &&
                        ip.total_reward > 0.0 && rnd.total_reward <= 0.0 && next.total_reward <= 0.0 &&
                        ip.fulfilment() >= 0.90 && ip.fulfilment() <= 0.99;
        verdict(7, ok,
                fmt("bad ratio InterPred %.3f (<= 0.13), random %.3f (>= 0.16), next-used %.3f (>= 0.19); reward "
                    "%.1f / %.1f / %.1f; fulfilment %.3f in [0.90, 0.99]",
                    ip.bad_ratio(), rnd.bad_ratio(), next.bad_ratio(), ip.total_reward, rnd.total_reward,
                    next.total_reward, ip.fulfilment()));
    }

    // ---- criterion 8 ----
    {
        const bool sarsa = check_sarsa();
        const bool rewards = check_rewards();
        const bool fill = check_fill_missing();
        std::string notes;
        for (const auto& n : violation_notes) notes += " [" + n + "]";
        verdict(8, sarsa && rewards && fill && violations == 0 && audited == cells.size(),
                fmt("sarsa %s, rewards %s, fill_missing conservation %s, duty audit %llu violations in %zu logs%s",
                    sarsa ? "ok" : "mismatch", rewards ? "ok" : "mismatch", fill ? "ok" : "mismatch",
                    static_cast<unsigned long long>(violations.load()), audited.load(), notes.c_str()));
    }

    // ---- criterion 9: identical rerun ----
    {
        const auto first = csv_of(results);
        const auto again = csv_of(cli::run_cells(cells, 1));
        const auto a = fnv1a(first);
        const auto b = fnv1a(again);
        verdict(9, a == b && first == again,
                fmt("metrics.csv of %zu runs, hash %016llx vs rerun %016llx", results.size(),
                    static_cast<unsigned long long>(a), static_cast<unsigned long long>(b)));
    }

    // ---- criterion 10 ----
    {
        const std::size_t bytes = high.snapshot.size();
        verdict(10, bytes > 0 && bytes <= 315'000,
                fmt("serialised agent after 24 h: %zu bytes, %zu states (<= 315 KB)", bytes, high.q_states));
    }

    line(fmt("# total %.1f s, %d criteria failed", seconds_since(started), failures));
    return failures;
}

}  // namespace

int main(int argc, char** argv) {
    const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
    report.open("acceptance_report.txt");
    try {
        const int failed = run_all();
        return strict && failed > 0 ? 1 : 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
        return 2;
    }
}
