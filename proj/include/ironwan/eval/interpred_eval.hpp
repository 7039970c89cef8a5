#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ironwan/core/types.hpp"
#include "ironwan/interpred/interpred.hpp"

namespace ironwan::eval {

enum class LoadLevel { Low, Medium, High };
const char* to_string(LoadLevel level);
LoadLevel parse_load_level(const std::string& text);
/// Traffic relative to the low level.
double load_multiplier(LoadLevel level);

/// Overheard N2G traffic at one gateway: periodic nodes with random phase,
/// a spreading-factor mix and a fixed channel preference.
struct TrafficSpec {
    int base_nodes = 130;  // at low load
    double multiplier = 1.0;
    double period_s = 180.0;
    double period_jitter_s = 2.0;
    int payload_len = 20;
    std::vector<double> channel_weights{0.70, 0.25, 0.05};
    std::array<double, 6> sf_mix{0.10, 0.10, 0.10, 0.20, 0.20, 0.30};  // SF7..SF12
    core::Micros duration = 24 * 3600 * core::kMicrosPerSecond;
};

/// Frames sorted by start time.
std::vector<interpred::HeardFrame> synth_stream(const TrafficSpec& spec, std::uint64_t seed);

struct PolicyResult {
    interpred::PolicyKind policy;
    std::string load;
    std::uint64_t good = 0;
    std::uint64_t bad = 0;
    std::uint64_t none = 0;
    double total_reward = 0.0;

    std::uint64_t requests() const { return good + bad + none; }
    double bad_ratio() const { return requests() ? static_cast<double>(bad) / requests() : 0.0; }
    double fulfilment() const { return requests() ? static_cast<double>(good + bad) / requests() : 0.0; }
};

struct PolicyEvalOptions {
    interpred::InterPredConfig agent;
    double mean_request_gap_s = 10.0;  // Poisson G2G requests after training
    std::uint64_t seed = 1;
    std::string load_label;
};

struct PolicyEvalReport {
    std::vector<PolicyResult> results;  // interpred, random, next-used
    std::size_t q_states = 0;
    std::size_t q_evictions = 0;
    std::uint64_t unseen_declines = 0;  // InterPred declined because the state had no learned row
    std::vector<std::uint8_t> snapshot;
};

/// Runs the three policies over one stream. InterPred pseudo-trains from the
/// start; requests arrive only after the training phase, and every policy
/// answers the same requests at the same decision slots.
PolicyEvalReport evaluate_policies(const std::vector<interpred::HeardFrame>& stream, core::Micros duration,
                                   const PolicyEvalOptions& options);

/// Counterfactual for a decision at the end of `decision_slot`, using a stream sorted by start.
interpred::Counterfactual stream_counterfactual(const std::vector<interpred::HeardFrame>& stream,
                                                core::Micros longest_frame, std::int64_t decision_slot, int F, int C,
                                                core::Micros action_airtime);

std::string policy_csv_header();
std::string policy_csv_row(const PolicyResult& r);

}  // namespace ironwan::eval
