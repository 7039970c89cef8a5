#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ironwan/core/types.hpp"

namespace ironwan::rmip {

struct RmipConfig {
    std::size_t n = 10;         // window size
    double e = 1.0;             // deviation threshold, seconds
    double t_crit = 0.703;      // two-sided 50% t quantile at df = 9
    double grace = 1.0;         // lateness allowance before a message is declared missing, seconds
    std::uint16_t max_counter_gap = 64;

    void validate() const;
};

/// Upper quartile of Student's t with `df` degrees of freedom (the two-sided
/// 50% critical value), tabulated for df 1..30; larger df use the normal value.
double t_quantile_75(std::size_t df);

/// Fixed-capacity ring of observed inter-arrival times (seconds, 32-bit).
class IntervalRing {
public:
    explicit IntervalRing(std::size_t capacity = 10);

    void push(float interval);
    void clear();

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return data_.size(); }
    bool full() const { return size_ == data_.size(); }

    /// Oldest to newest.
    std::vector<float> values() const;

private:
    std::vector<float> data_;
    std::size_t head_ = 0;  // next write position
    std::size_t size_ = 0;
};

/// Predictor state for one node: the interval window plus Δt and the anchor,
/// i.e. (n + 1) 32-bit reals and a few counters.
struct RmipNodeState {
    explicit RmipNodeState(core::NodeAddr addr = {}, std::size_t n = 10) : node(addr), intervals(n) {}

    core::NodeAddr node;
    IntervalRing intervals;
    bool has_last = false;
    core::SimTime last_arrival{};
    std::uint16_t last_counter = 0;
    std::optional<float> delta_t;  // seconds
    bool has_anchor = false;
    core::SimTime anchor{};
    std::uint32_t anchor_count = 0;  // messages (by counter) since the anchor
    std::uint32_t deviation_run = 0;
    std::optional<core::SimTime> reported_through;  // latest expected arrival already reported
};

enum class RmipEventKind { IntervalLearned, ChangeDetected, AnchorReset, StateReset };

struct RmipEvent {
    RmipEventKind kind;
    double value = 0.0;  // Δt for IntervalLearned / ChangeDetected (old Δt), anchor seconds for AnchorReset
};

struct MissingReport {
    core::NodeAddr node;
    std::uint16_t last_counter = 0;
    core::SimTime expected{};
};

/// Equal split of the elapsed time over the counter gap. Returns nullopt when
/// the gap exceeds `cfg.max_counter_gap` (the caller treats the node as reset).
/// Parts are whole microseconds and always sum to `new_time - last_arrival`.
/// Throws std::invalid_argument when the state has no previous message, the
/// counter did not advance, or time did not advance.
std::optional<std::vector<core::Micros>> fill_missing(const RmipNodeState& state, std::uint16_t new_counter,
                                                      core::SimTime new_time, const RmipConfig& cfg);

/// Median (lower middle for even sizes) accepted as Δt when the one-sample
/// t statistic of the window against it stays within t_crit; nullopt means
/// undecided. Requires exactly cfg.n samples.
std::optional<double> estimate_interval(std::span<const float> samples, const RmipConfig& cfg);

/// Lower-middle median.
double lower_median(std::span<const float> samples);

/// Move the anchor to `arrival` when it came earlier than anchor + anchor_count * Δt.
/// `anchor_count` must already include this message. Returns true on reset.
bool update_anchor(RmipNodeState& state, core::SimTime arrival);

/// Feed one received uplink (by counter and arrival time).
std::vector<RmipEvent> observe(RmipNodeState& state, std::uint16_t counter, core::SimTime now, const RmipConfig& cfg);
std::vector<RmipEvent> observe(RmipNodeState& state, const core::Frame& frame, core::SimTime now,
                               const RmipConfig& cfg);

/// Next arrival the predictor waits for; nullopt until Δt is known.
std::optional<core::SimTime> expected_next(const RmipNodeState& state);

/// Reports each expected arrival at most once, after it is `grace` overdue.
std::optional<MissingReport> poll_missing(RmipNodeState& state, core::SimTime now, const RmipConfig& cfg);

/// First time at which poll_missing would produce a report, if any.
std::optional<core::SimTime> next_poll_due(const RmipNodeState& state, const RmipConfig& cfg);

/// All per-node states a gateway tracks.
class RmipTable {
public:
    explicit RmipTable(RmipConfig cfg = {});

    std::vector<RmipEvent> observe(const core::Frame& uplink, core::SimTime now);
    std::optional<MissingReport> poll(core::NodeAddr node, core::SimTime now);
    std::optional<core::SimTime> next_due(core::NodeAddr node) const;

    const RmipNodeState* find(core::NodeAddr node) const;
    std::size_t size() const { return states_.size(); }
    const RmipConfig& config() const { return cfg_; }

private:
    RmipConfig cfg_;
    std::unordered_map<core::NodeAddr, RmipNodeState> states_;
};

}  // namespace ironwan::rmip
