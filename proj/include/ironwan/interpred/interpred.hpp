#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <list>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ironwan/core/random.hpp"
#include "ironwan/core/types.hpp"

namespace ironwan::interpred {

struct InterPredConfig {
    int P = 4;  // past slots in the state
    int F = 8;  // future slots an action may target
    int C = 3;  // channels
    double alpha = 0.8;
    double gamma = 0.1;
    double epsilon = 0.2;
    int count_cap = 5;
    core::Micros training_duration = 3 * 3600 * core::kMicrosPerSecond;
    // Airtime assumed for a G2G frame when scoring counterfactual interference.
    core::Micros action_airtime = core::kSlotLength;
    // Rewards are settled once every frame that could overlap the target slot has been heard.
    core::Micros observation_lag = 3 * core::kMicrosPerSecond;
    // LRU bound on materialised states; 0 = unbounded.
    std::size_t max_states = 1875;

    int action_count() const { return (F + 1) * C; }
    void validate() const;
};

/// P x C matrix of recent per-slot message counts. Column P-1 is the current slot.
class SpectrumState {
public:
    SpectrumState(int P = 4, int C = 3, int cap = 5);

    /// Frame of `airtime` that finished on `channel` during the current slot.
    void ingest(core::Micros airtime, int channel);
    void advance();

    int at(int slot, int channel) const { return cells_[static_cast<std::size_t>(slot * C_ + channel)]; }
    void set(int slot, int channel, int value);
    int P() const { return P_; }
    int C() const { return C_; }
    bool empty() const;

    /// 3 bits per cell, slot-major.
    std::uint64_t encode() const;
    static SpectrumState decode(std::uint64_t code, int P, int C, int cap = 5);

    bool operator==(const SpectrumState&) const = default;

private:
    int P_;
    int C_;
    int cap_;
    std::vector<std::uint8_t> cells_;
};

struct Action {
    int slot = 0;  // 0 = no transmission, otherwise 1..F slots ahead
    int channel = 0;

    bool transmits() const { return slot > 0; }
    int index(int F) const { return channel * (F + 1) + slot; }
    static Action from_index(int index, int F) { return {index % (F + 1), index / (F + 1)}; }
    bool operator==(const Action&) const = default;
};

enum class Outcome { Good, Bad, None };

double reward_transmit(int slot, int m, int F);
/// No-transmission reward on one channel: mean over that channel's F transmit rewards.
/// `m_by_slot[i - 1]` is the interference slot i would have caused.
double reward_no_tx(std::span<const int> m_by_slot, int F);

/// Interference counts for every (channel, future slot) of one decision.
struct Counterfactual {
    int F = 8;
    int C = 3;
    std::vector<int> m;  // [channel * F + (slot - 1)]

    int at(int channel, int slot) const { return m[static_cast<std::size_t>(channel * F + slot - 1)]; }
    std::span<const int> channel_row(int channel) const {
        return std::span<const int>(m).subspan(static_cast<std::size_t>(channel * F), static_cast<std::size_t>(F));
    }
};

double reward_of(Action action, const Counterfactual& outcome);
Outcome outcome_of(Action action, const Counterfactual& outcome);

class QTable {
public:
    QTable(int action_count, std::size_t max_states = 0);

    /// Row for `state`, or nullptr if never materialised.
    const float* find(std::uint64_t state) const;
    float value(std::uint64_t state, int action) const;
    /// Materialises (zeros) on first use and marks the row most recently used.
    float* row(std::uint64_t state);

    std::size_t size() const { return rows_.size(); }
    int action_count() const { return actions_; }
    std::size_t max_states() const { return max_states_; }
    std::size_t evictions() const { return evictions_; }

    /// States in ascending order.
    std::vector<std::uint64_t> states() const;

private:
    struct Row {
        std::vector<float> values;
        std::list<std::uint64_t>::iterator lru;
    };
    int actions_;
    std::size_t max_states_;
    std::size_t evictions_ = 0;
    std::unordered_map<std::uint64_t, Row> rows_;
    std::list<std::uint64_t> lru_;  // front = most recent
};

/// Greedy pick with lowest-index tie-break over a full row (nullptr = all zero).
int argmax_action(const float* row, int action_count);
Action choose_action(const SpectrumState& state, const QTable& q, double epsilon, int F, core::Rng& rng);

/// Q[S][a] += alpha * (reward + gamma * Q[S'][a'] - Q[S][a]).
void sarsa_update(QTable& q, std::uint64_t s, int a, double reward, std::uint64_t s_next, int a_next, double alpha,
                  double gamma);

struct SlotGrant {
    core::SimTime start{};
    int channel = 0;
    Action action;
};

/// N2G frame heard by the gateway.
struct HeardFrame {
    core::SimTime start{};
    core::SimTime end{};
    int channel = 0;
};

/// Counts heard frames on `channel` overlapping [start, start + airtime).
int count_overlaps(std::span<const HeardFrame> heard, int channel, core::SimTime start, core::Micros airtime);

class InterPredAgent {
public:
    InterPredAgent(InterPredConfig cfg, std::uint64_t seed, core::SimTime started = {});

    /// Crosses slot boundaries up to `now`, running pseudo-training in each.
    void advance_to(core::SimTime now);
    /// Completed N2G frame heard on `channel`; advances to `frame_end` first.
    void ingest(core::SimTime frame_start, core::SimTime frame_end, int channel);

    /// Greedy, no exploration, no learning. None on no-tx or when the best value is <= 0.
    std::optional<SlotGrant> request_slot(core::SimTime now);
    /// Greedy action for the current state without the positivity filter.
    Action greedy_action() const;

    bool trained(core::SimTime now) const { return now - started_ >= cfg_.training_duration; }
    /// Pseudo actions pause while a real G2G request waits for a slot.
    void set_real_pending(bool pending) { real_pending_ = pending; }

    const SpectrumState& state() const { return state_; }
    const QTable& q() const { return q_; }
    QTable& q() { return q_; }
    const InterPredConfig& config() const { return cfg_; }
    std::int64_t current_slot() const { return slot_; }
    std::uint64_t pseudo_steps() const { return pseudo_steps_; }
    std::uint64_t updates() const { return updates_; }

private:
    struct Pending {
        std::uint64_t state;
        int action;
        std::int64_t slot;
        bool has_next = false;
        std::uint64_t next_state = 0;
        int next_action = 0;
    };

    void pseudo_step();
    void settle(core::SimTime now);
    Counterfactual counterfactual(std::int64_t decision_slot) const;

    InterPredConfig cfg_;
    core::Rng rng_;
    core::SimTime started_;
    std::int64_t slot_;
    SpectrumState state_;
    QTable q_;
    bool real_pending_ = false;
    std::deque<Pending> pending_;
    std::vector<HeardFrame> heard_;  // ordered by end time
    std::uint64_t pseudo_steps_ = 0;
    std::uint64_t updates_ = 0;
};

/// Counterfactual interference for a decision taken at the end of `decision_slot`.
Counterfactual counterfactual_for(std::span<const HeardFrame> heard, std::int64_t decision_slot, int F, int C,
                                  core::Micros action_airtime);

/// Little-endian snapshot: header (P, F, C, alpha, gamma, epsilon), then each
/// (64-bit state, (F+1)*C 32-bit values) in ascending state order.
std::vector<std::uint8_t> serialize_agent(const InterPredConfig& cfg, const QTable& q);
struct AgentSnapshot {
    InterPredConfig config;
    QTable q;
};
AgentSnapshot deserialize_agent(std::span<const std::uint8_t> bytes);

// Comparison policies.
enum class PolicyKind { InterPred, Random, NextUsed };
const char* to_string(PolicyKind kind);

/// Uniform over every action, including the per-channel no-transmission ones.
Action random_policy(int F, int C, core::Rng& rng);
/// Slot 1 on the lowest channel idle in the last slot; no-tx on channel 0 when all are busy.
Action next_used_policy(const SpectrumState& state);

}  // namespace ironwan::interpred
