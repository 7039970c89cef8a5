#include "ironwan/eval/interpred_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "ironwan/core/random.hpp"
#include "ironwan/phy/phy.hpp"

namespace ironwan::eval {

using interpred::Action;
using interpred::HeardFrame;
using interpred::PolicyKind;

const char* to_string(LoadLevel level) {
    switch (level) {
        case LoadLevel::Low: return "low";
        case LoadLevel::Medium: return "medium";
        case LoadLevel::High: return "high";
    }
    return "?";
}

LoadLevel parse_load_level(const std::string& text) {
    if (text == "low") return LoadLevel::Low;
    if (text == "med" || text == "medium") return LoadLevel::Medium;
    if (text == "high") return LoadLevel::High;
    throw std::invalid_argument("unknown load level '" + text + "' (low, medium, high)");
}

double load_multiplier(LoadLevel level) {
    switch (level) {
        case LoadLevel::Low: return 1.0;
        case LoadLevel::Medium: return 1.5;
        case LoadLevel::High: return 2.5;
    }
    return 1.0;
}

namespace {

std::size_t pick_weighted(std::span<const double> weights, double total, core::Rng& rng) {
    double u = rng.uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    return weights.size() - 1;
}

}  // namespace

std::vector<HeardFrame> synth_stream(const TrafficSpec& spec, std::uint64_t seed) {
    if (spec.channel_weights.empty()) throw std::invalid_argument("need at least one channel weight");
    if (!(spec.period_s > 2 * spec.period_jitter_s)) throw std::invalid_argument("period must exceed twice the jitter");
    const double channel_total = std::accumulate(spec.channel_weights.begin(), spec.channel_weights.end(), 0.0);
    const double sf_total = std::accumulate(spec.sf_mix.begin(), spec.sf_mix.end(), 0.0);
    if (!(channel_total > 0.0) || !(sf_total > 0.0)) throw std::invalid_argument("weights must sum to a positive value");

    std::array<core::Micros, 6> airtime{};
    for (int sf = 7; sf <= 12; ++sf) {
        core::RadioParams radio;
        radio.spreading_factor = static_cast<std::uint8_t>(sf);
        airtime[static_cast<std::size_t>(sf - 7)] = phy::compute_airtime(static_cast<std::size_t>(spec.payload_len), radio);
    }

    const int nodes = static_cast<int>(std::lround(spec.base_nodes * spec.multiplier));
    std::vector<HeardFrame> frames;
    for (int n = 0; n < nodes; ++n) {
        core::Rng rng(core::mix_seed(seed, static_cast<std::uint64_t>(n)));
        const auto sf_index = pick_weighted(spec.sf_mix, sf_total, rng);
        const core::Micros length = airtime[sf_index];
        double t = rng.uniform(0.0, spec.period_s);
        while (true) {
            const core::SimTime start = core::SimTime::from_seconds(t);
            if (start.us + length > spec.duration) break;
            const auto channel = static_cast<int>(pick_weighted(spec.channel_weights, channel_total, rng));
            frames.push_back({start, start + length, channel});
            t += spec.period_s + rng.uniform(-spec.period_jitter_s, spec.period_jitter_s);
        }
    }
    std::sort(frames.begin(), frames.end(), [](const HeardFrame& a, const HeardFrame& b) {
        return std::tie(a.start.us, a.end.us, a.channel) < std::tie(b.start.us, b.end.us, b.channel);
    });
    return frames;
}

interpred::Counterfactual stream_counterfactual(const std::vector<HeardFrame>& stream, core::Micros longest_frame,
                                                std::int64_t decision_slot, int F, int C,
                                                core::Micros action_airtime) {
    const core::SimTime begin = core::slot_start(decision_slot + 1);
    const core::SimTime end = core::slot_start(decision_slot + F) + action_airtime;
    auto first = std::lower_bound(stream.begin(), stream.end(), begin - longest_frame,
                                  [](const HeardFrame& f, core::SimTime t) { return f.start < t; });
    auto last = std::lower_bound(first, stream.end(), end, [](const HeardFrame& f, core::SimTime t) { return f.start < t; });
    return interpred::counterfactual_for(std::span<const HeardFrame>(&*first, static_cast<std::size_t>(last - first)),
                                         decision_slot, F, C, action_airtime);
}

PolicyEvalReport evaluate_policies(const std::vector<HeardFrame>& stream, core::Micros duration,
                                   const PolicyEvalOptions& options) {
    const auto& cfg = options.agent;
    cfg.validate();
    if (!std::is_sorted(stream.begin(), stream.end(),
                        [](const HeardFrame& a, const HeardFrame& b) { return a.start < b.start; })) {
        throw std::invalid_argument("stream must be sorted by start time");
    }

    std::vector<std::size_t> by_end(stream.size());
    std::iota(by_end.begin(), by_end.end(), 0);
    std::stable_sort(by_end.begin(), by_end.end(),
                     [&](std::size_t a, std::size_t b) { return stream[a].end < stream[b].end; });
    core::Micros longest = 0;
    for (const auto& f : stream) longest = std::max(longest, f.end - f.start);

    interpred::InterPredAgent agent(cfg, core::mix_seed(options.seed, 0xa6e7));
    core::Rng request_rng(core::mix_seed(options.seed, 0x7e9));
    core::Rng random_rng(core::mix_seed(options.seed, 0x4a4d));

    struct Decision {
        std::int64_t slot;
        std::array<Action, 3> actions;
    };
    std::vector<Decision> decisions;

    std::size_t next_frame = 0;
    std::uint64_t unseen = 0;
    auto feed_until = [&](core::SimTime limit) {
        while (next_frame < by_end.size() && stream[by_end[next_frame]].end <= limit) {
            const auto& f = stream[by_end[next_frame++]];
            agent.ingest(f.start, f.end, f.channel);
        }
        agent.advance_to(limit);
    };

    // Leave room at the end so every decision's future window is fully observed.
    const core::SimTime last_request{duration - core::slot_start(cfg.F + 1).us - cfg.action_airtime};
    core::SimTime t{cfg.training_duration};
    while (true) {
        t += std::max<core::Micros>(1, core::seconds(request_rng.exponential(options.mean_request_gap_s)));
        if (t > last_request) break;
        const std::int64_t slot = core::slot_of(t);
        const core::SimTime decide_at = core::slot_start(slot + 1) - 1;  // the decision slot is fully observed
        feed_until(decide_at);

        Decision d{slot, {}};
        if (!agent.q().find(agent.state().encode())) ++unseen;
        if (auto grant = agent.request_slot(decide_at)) {
            d.actions[0] = grant->action;
        } else {
            d.actions[0] = Action{0, agent.greedy_action().channel};
        }
        d.actions[1] = interpred::random_policy(cfg.F, cfg.C, random_rng);
        d.actions[2] = interpred::next_used_policy(agent.state());
        decisions.push_back(d);
    }
    feed_until(core::SimTime{duration});

    PolicyEvalReport report;
    const std::array<PolicyKind, 3> kinds{PolicyKind::InterPred, PolicyKind::Random, PolicyKind::NextUsed};
    for (auto kind : kinds) report.results.push_back({kind, options.load_label});
    for (const auto& d : decisions) {
        const auto outcome = stream_counterfactual(stream, longest, d.slot, cfg.F, cfg.C, cfg.action_airtime);
        for (std::size_t p = 0; p < kinds.size(); ++p) {
            auto& r = report.results[p];
            r.total_reward += interpred::reward_of(d.actions[p], outcome);
            switch (interpred::outcome_of(d.actions[p], outcome)) {
                case interpred::Outcome::Good: ++r.good; break;
                case interpred::Outcome::Bad: ++r.bad; break;
                case interpred::Outcome::None: ++r.none; break;
            }
        }
    }
    report.q_states = agent.q().size();
    report.q_evictions = agent.q().evictions();
    report.unseen_declines = unseen;
    report.snapshot = interpred::serialize_agent(cfg, agent.q());
    return report;
}

std::string policy_csv_header() { return "policy,load,good,bad,none,total_reward"; }

std::string policy_csv_row(const PolicyResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%llu,%llu,%.6f", interpred::to_string(r.policy), r.load.c_str(),
                  static_cast<unsigned long long>(r.good), static_cast<unsigned long long>(r.bad),
                  static_cast<unsigned long long>(r.none), r.total_reward);
    return buf;
}

}  // namespace ironwan::eval
