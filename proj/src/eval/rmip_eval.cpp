#include "ironwan/eval/rmip_eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

#include "ironwan/core/random.hpp"

namespace ironwan::eval {

using core::Micros;
using core::NodeAddr;
using core::SimTime;

void TraceSpec::validate() const {
    if (nodes == 0) throw std::invalid_argument("trace needs at least one node");
    if (duration <= 0) throw std::invalid_argument("trace duration must be positive");
    if (!(periodic_fraction >= 0.0 && periodic_fraction <= 1.0)) {
        throw std::invalid_argument("periodic_fraction must be in [0, 1]");
    }
    if (periods_s.empty()) throw std::invalid_argument("at least one period is required");
    for (double p : periods_s) {
        if (!(p >= 1.0)) throw std::invalid_argument("periods must be at least 1 s");
    }
    if (!(jitter_s >= 0.0)) throw std::invalid_argument("jitter_s must be non-negative");
    if (!(loss >= 0.0 && loss < 1.0)) throw std::invalid_argument("loss must be in [0, 1)");
    if (!(aperiodic_mean_s > 0.0)) throw std::invalid_argument("aperiodic_mean_s must be positive");
    const auto periodic = static_cast<std::size_t>(std::llround(periodic_fraction * static_cast<double>(nodes)));
    if (changes > periodic) throw std::invalid_argument("more changes than periodic nodes");
    if (changes > 0 && periods_s.size() < 2) throw std::invalid_argument("changes need two distinct periods");
}

namespace {

Micros seconds(double s) { return static_cast<Micros>(std::llround(s * core::kMicrosPerSecond)); }

double pick_other_period(core::Rng& rng, const std::vector<double>& periods, double current) {
    std::vector<double> options;
    for (double p : periods) {
        if (std::abs(p - current) > 2.0) options.push_back(p);
    }
    if (options.empty()) throw std::invalid_argument("no period differs from " + std::to_string(current) + " s");
    return options[rng.below(options.size())];
}

}  // namespace

Trace generate_trace(const TraceSpec& spec) {
    spec.validate();
    Trace trace;
    core::Rng pick(core::mix_seed(spec.seed, 1));

    std::vector<std::size_t> order(spec.nodes);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[pick.below(i)]);
    const auto periodic_count =
        static_cast<std::size_t>(std::llround(spec.periodic_fraction * static_cast<double>(spec.nodes)));
    std::vector<bool> periodic(spec.nodes, false);
    std::vector<bool> changes(spec.nodes, false);
    for (std::size_t k = 0; k < periodic_count; ++k) periodic[order[k]] = true;
    for (std::size_t k = 0; k < spec.changes; ++k) changes[order[k]] = true;

    for (std::size_t i = 0; i < spec.nodes; ++i) {
        const NodeAddr node = core::make_node_addr(core::NetworkId{1}, static_cast<std::uint32_t>(i + 1));
        core::Rng rng(core::mix_seed(spec.seed, 100 + i));
        auto counter = static_cast<std::uint16_t>(rng.below(65536));
        auto emit = [&](Micros nominal) {
            const Micros arrival = nominal + seconds(rng.uniform(0.0, spec.jitter_s));
            if (!rng.bernoulli(spec.loss) && arrival < spec.duration) {
                trace.records.push_back({node, counter, SimTime{arrival}});
            }
            ++counter;
        };

        if (!periodic[i]) {
            Micros t = seconds(rng.uniform(0.0, spec.aperiodic_mean_s));
            while (t < spec.duration) {
                emit(t);
                t += std::max<Micros>(core::kMicrosPerSecond, seconds(rng.exponential(spec.aperiodic_mean_s)));
            }
            continue;
        }

        trace.periodic_nodes.push_back(node);
        double period = spec.periods_s[rng.below(spec.periods_s.size())];
        Micros t = seconds(rng.uniform(0.0, period));
        Micros switch_at = spec.duration;
        if (changes[i]) {
            switch_at = static_cast<Micros>(rng.uniform(spec.duration / 3.0, 2.0 * spec.duration / 3.0));
        }
        bool switched = false;
        while (t < spec.duration) {
            if (!switched && t >= switch_at) {
                const double next = pick_other_period(rng, spec.periods_s, period);
                // Rebase on the last message of the old schedule.
                t = t - seconds(period) + seconds(next);
                trace.changes.push_back({node, SimTime{t}, period, next});
                period = next;
                switched = true;
                if (t >= spec.duration) {
                    trace.changes.pop_back();
                    break;
                }
            }
            emit(t);
            t += seconds(period);
        }
    }

    std::sort(trace.records.begin(), trace.records.end(), [](const TraceRecord& a, const TraceRecord& b) {
        return a.arrival != b.arrival ? a.arrival < b.arrival : a.node < b.node;
    });
    // The change instant is the arrival of the first delivered message on the new schedule.
    for (auto& c : trace.changes) {
        for (const auto& r : trace.records) {
            if (r.node == c.node && r.arrival.us >= c.at.us) {
                c.at = r.arrival;
                break;
            }
        }
    }
    return trace;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& records) {
    out << kTraceHeader << '\n';
    for (const auto& r : records) out << r.node.value << ',' << r.counter << ',' << r.arrival.us << '\n';
}

void write_truth_csv(std::ostream& out, const std::vector<TraceChange>& changes) {
    out << kTruthHeader << '\n';
    char buf[64];
    for (const auto& c : changes) {
        out << c.node.value << ',' << c.at.us << ',';
        std::snprintf(buf, sizeof buf, "%.6g,%.6g", c.old_period_s, c.new_period_s);
        out << buf << '\n';
    }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
    if (text.empty()) return false;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

bool is_header(std::string_view line, std::string_view header) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    return line == header;
}

}  // namespace

TraceParse read_trace_csv(std::istream& in) {
    TraceParse out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const bool was_first = std::exchange(first, false);
        if (line.empty() || line == "\r") continue;
        if (was_first && is_header(line, kTraceHeader)) continue;
        const auto f = split_fields(line);
        std::uint32_t node = 0;
        std::uint32_t counter = 0;
        std::int64_t t = 0;
        if (f.size() != 3 || !parse_number(f[0], node) || !parse_number(f[1], counter) || counter > 0xffff ||
            !parse_number(f[2], t) || t < 0) {
            ++out.skipped;
            continue;
        }
        out.records.push_back({NodeAddr{node}, static_cast<std::uint16_t>(counter), SimTime{t}});
    }
    return out;
}

TruthParse read_truth_csv(std::istream& in) {
    TruthParse out;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const bool was_first = std::exchange(first, false);
        if (line.empty() || line == "\r") continue;
        if (was_first && is_header(line, kTruthHeader)) continue;
        const auto f = split_fields(line);
        std::uint32_t node = 0;
        std::int64_t t = 0;
        double old_p = 0.0;
        double new_p = 0.0;
        if (f.size() != 4 || !parse_number(f[0], node) || !parse_number(f[1], t) || !parse_number(f[2], old_p) ||
            !parse_number(f[3], new_p)) {
            ++out.skipped;
            continue;
        }
        out.changes.push_back({NodeAddr{node}, SimTime{t}, old_p, new_p});
    }
    return out;
}

std::vector<NodeStream> split_by_node(const std::vector<TraceRecord>& records) {
    std::map<std::uint32_t, NodeStream> by_node;
    for (const auto& r : records) {
        auto& s = by_node[r.node.value];
        s.node = r.node;
        s.records.push_back(r);
    }
    std::vector<NodeStream> out;
    out.reserve(by_node.size());
    for (auto& [_, s] : by_node) {
        std::stable_sort(s.records.begin(), s.records.end(),
                         [](const TraceRecord& a, const TraceRecord& b) { return a.arrival < b.arrival; });
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

std::vector<double> gaps_of(const NodeStream& stream) {
    std::vector<double> gaps;
    for (std::size_t i = 1; i < stream.records.size(); ++i) {
        const auto steps = core::counter_gap(stream.records[i - 1].counter, stream.records[i].counter);
        if (steps == 0) continue;
        gaps.push_back((stream.records[i].arrival.us - stream.records[i - 1].arrival.us) / 1e6 / steps);
    }
    return gaps;
}

double median_of(std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2), v.end());
    return v[(v.size() - 1) / 2];
}

}  // namespace

bool looks_periodic(const NodeStream& stream) {
    // Raw gaps, not counter-normalised ones, so the check also holds for traces without counters that mean much.
    std::vector<double> gaps;
    for (std::size_t i = 1; i < stream.records.size(); ++i) {
        gaps.push_back((stream.records[i].arrival.us - stream.records[i - 1].arrival.us) / 1e6);
    }
    if (gaps.size() < 10) return false;
    const double med = median_of(gaps);
    if (med <= 0.0) return false;
    std::size_t regular = 0;
    for (double g : gaps) {
        const double multiple = std::max(1.0, std::round(g / med));
        if (std::abs(g - multiple * med) <= 2.0) ++regular;
    }
    return regular * 5 >= gaps.size() * 4;
}

ChangeBenchmark build_benchmark(const std::vector<TraceRecord>& records, const std::vector<TraceChange>& truth,
                                std::size_t inject, std::uint64_t seed) {
    ChangeBenchmark bench;
    auto streams = split_by_node(records);

    std::vector<NodeStream> candidates;
    for (auto& s : streams) {
        const bool known = std::any_of(truth.begin(), truth.end(), [&](const TraceChange& c) { return c.node == s.node; });
        if (known) {
            bench.streams.push_back(std::move(s));
        } else if (looks_periodic(s)) {
            candidates.push_back(std::move(s));
        }
    }
    for (const auto& c : truth) {
        const bool present = std::any_of(bench.streams.begin(), bench.streams.end(),
                                         [&](const NodeStream& s) { return s.node == c.node; });
        if (present) bench.changes.push_back(c);
    }
    if (inject > candidates.size()) {
        throw std::invalid_argument("cannot inject " + std::to_string(inject) + " changes into " +
                                    std::to_string(candidates.size()) + " periodic streams");
    }

    std::vector<double> period(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) period[i] = median_of(gaps_of(candidates[i]));

    core::Rng rng(core::mix_seed(seed, 7));
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::vector<bool> replaced(candidates.size(), false);
    for (std::size_t k = 0; k < inject; ++k) {
        const std::size_t a = order[k];
        std::vector<std::size_t> partners;
        for (std::size_t j = 0; j < candidates.size(); ++j) {
            if (j != a && std::abs(period[j] - period[a]) > 2.0) partners.push_back(j);
        }
        if (partners.empty()) throw std::invalid_argument("no stream with a different period to splice in");
        const std::size_t b = partners[rng.below(partners.size())];
        const auto& ra = candidates[a].records;
        const auto& rb = candidates[b].records;

        NodeStream spliced{candidates[a].node, {}};
        const std::size_t cut_a = ra.size() / 2;
        const std::size_t cut_b = std::max<std::size_t>(1, rb.size() / 2);
        spliced.records.assign(ra.begin(), ra.begin() + static_cast<std::ptrdiff_t>(cut_a));
        TraceRecord last = spliced.records.back();
        for (std::size_t j = cut_b; j < rb.size(); ++j) {
            const Micros gap = rb[j].arrival.us - rb[j - 1].arrival.us;
            const auto steps = core::counter_gap(rb[j - 1].counter, rb[j].counter);
            last = {spliced.node, static_cast<std::uint16_t>(last.counter + steps), SimTime{last.arrival.us + gap}};
            spliced.records.push_back(last);
        }
        bench.changes.push_back({spliced.node, spliced.records[cut_a].arrival, period[a], period[b]});
        bench.streams.push_back(std::move(spliced));
        replaced[a] = true;
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!replaced[i]) bench.streams.push_back(std::move(candidates[i]));
    }
    std::sort(bench.streams.begin(), bench.streams.end(),
              [](const NodeStream& x, const NodeStream& y) { return x.node < y.node; });
    std::sort(bench.changes.begin(), bench.changes.end(), [](const TraceChange& x, const TraceChange& y) {
        return x.node != y.node ? x.node < y.node : x.at < y.at;
    });
    return bench;
}

std::optional<double> ChangeScore::precision() const {
    if (detections == 0) return std::nullopt;
    return static_cast<double>(true_detections) / static_cast<double>(detections);
}

std::optional<double> ChangeScore::recall() const {
    if (injected == 0) return std::nullopt;
    return static_cast<double>(detected) / static_cast<double>(injected);
}

ChangeScore score_changes(const ChangeBenchmark& bench, const rmip::RmipConfig& cfg) {
    cfg.validate();
    ChangeScore score;
    score.n = cfg.n;
    score.e = cfg.e;
    score.injected = bench.changes.size();
    std::vector<bool> matched(bench.changes.size(), false);

    for (const auto& stream : bench.streams) {
        rmip::RmipNodeState state(stream.node, cfg.n);
        for (const auto& r : stream.records) {
            for (const auto& ev : rmip::observe(state, r.counter, r.arrival, cfg)) {
                if (ev.kind != rmip::RmipEventKind::ChangeDetected) continue;
                ++score.detections;
                bool hit = false;
                for (std::size_t c = 0; c < bench.changes.size(); ++c) {
                    const auto& change = bench.changes[c];
                    if (matched[c] || change.node != stream.node) continue;
                    const double span = (cfg.n + 5) * std::max(change.old_period_s, change.new_period_s);
                    if (r.arrival >= change.at && r.arrival.us <= change.at.us + seconds(span)) {
                        matched[c] = true;
                        hit = true;
                        break;
                    }
                }
                if (hit) {
                    ++score.true_detections;
                } else {
                    ++score.false_positives;
                }
            }
        }
    }
    score.detected = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), true));
    return score;
}

std::string score_csv_header() { return "n,e,injected,detected,detections,false_positives,precision,recall"; }

std::string score_csv_row(const ChangeScore& s) {
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string{};
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", *v);
        return std::string{buf};
    };
    char head[128];
    std::snprintf(head, sizeof head, "%zu,%.2f,%zu,%zu,%zu,%zu,", s.n, s.e, s.injected, s.detected, s.detections,
                  s.false_positives);
    return std::string{head} + opt(s.precision()) + ',' + opt(s.recall());
}

std::vector<ChangeScore> score_grid(const ChangeBenchmark& bench) {
    std::vector<ChangeScore> out;
    for (std::size_t n = 5; n <= 15; ++n) {
        for (double e : {0.5, 1.0, 1.5, 2.0}) {
            rmip::RmipConfig cfg;
            cfg.n = n;
            cfg.e = e;
            cfg.grace = e;
            cfg.t_crit = rmip::t_quantile_75(n - 1);
            out.push_back(score_changes(bench, cfg));
        }
    }
    return out;
}

}  // namespace ironwan::eval
