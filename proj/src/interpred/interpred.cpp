#include "ironwan/interpred/interpred.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ironwan/core/bytes.hpp"

namespace ironwan::interpred {

void InterPredConfig::validate() const {
    if (P < 1 || F < 1 || C < 1) throw std::invalid_argument("interpred P, F and C must be positive");
    if (3 * P * C > 64) throw std::invalid_argument("interpred state does not fit 64 bits (P * C > 21)");
    if (count_cap < 1 || count_cap > 7) throw std::invalid_argument("interpred count_cap must be in 1..7");
    for (double v : {alpha, gamma, epsilon}) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("interpred alpha, gamma, epsilon must be in [0, 1]");
    }
    if (training_duration < 0) throw std::invalid_argument("interpred training_duration must be non-negative");
    if (action_airtime <= 0) throw std::invalid_argument("interpred action_airtime must be positive");
    if (observation_lag < 0) throw std::invalid_argument("interpred observation_lag must be non-negative");
}

// ---- state ---------------------------------------------------------------

SpectrumState::SpectrumState(int P, int C, int cap)
    : P_(P), C_(C), cap_(cap), cells_(static_cast<std::size_t>(P * C), 0) {
    if (P < 1 || C < 1) throw std::invalid_argument("state dimensions must be positive");
}

void SpectrumState::ingest(core::Micros airtime, int channel) {
    if (channel < 0 || channel >= C_) throw std::invalid_argument("channel out of range");
    const auto k = std::max<core::Micros>(1, (airtime + core::kSlotLength - 1) / core::kSlotLength);
    const int span = static_cast<int>(std::min<core::Micros>(k, P_));
    for (int p = P_ - span; p < P_; ++p) {
        auto& cell = cells_[static_cast<std::size_t>(p * C_ + channel)];
        if (cell < cap_) ++cell;
    }
}

void SpectrumState::advance() {
    std::copy(cells_.begin() + C_, cells_.end(), cells_.begin());
    std::fill(cells_.end() - C_, cells_.end(), 0);
}

void SpectrumState::set(int slot, int channel, int value) {
    if (slot < 0 || slot >= P_ || channel < 0 || channel >= C_) throw std::invalid_argument("cell out of range");
    cells_[static_cast<std::size_t>(slot * C_ + channel)] = static_cast<std::uint8_t>(std::clamp(value, 0, cap_));
}

bool SpectrumState::empty() const {
    return std::all_of(cells_.begin(), cells_.end(), [](auto v) { return v == 0; });
}

std::uint64_t SpectrumState::encode() const {
    std::uint64_t code = 0;
    for (std::size_t i = 0; i < cells_.size(); ++i) code |= static_cast<std::uint64_t>(cells_[i]) << (3 * i);
    return code;
}

SpectrumState SpectrumState::decode(std::uint64_t code, int P, int C, int cap) {
    SpectrumState s(P, C, cap);
    for (std::size_t i = 0; i < s.cells_.size(); ++i) {
        const auto v = static_cast<std::uint8_t>((code >> (3 * i)) & 0x7);
        if (v > cap) throw std::invalid_argument("state code exceeds count cap");
        s.cells_[i] = v;
    }
    return s;
}

// ---- rewards -------------------------------------------------------------

double reward_transmit(int slot, int m, int F) {
    if (F < 1 || slot < 1 || slot > F) throw std::invalid_argument("transmit slot out of range");
    if (m < 0) throw std::invalid_argument("negative interference count");
    const double urgency = 1.0 - static_cast<double>(slot) / F;
    return m == 0 ? urgency : -2.0 * m * urgency;
}

double reward_no_tx(std::span<const int> m_by_slot, int F) {
    if (static_cast<int>(m_by_slot.size()) != F) throw std::invalid_argument("need one count per future slot");
    double sum = 0.0;
    for (int i = 1; i <= F; ++i) sum += reward_transmit(i, m_by_slot[static_cast<std::size_t>(i - 1)], F);
    return sum / F;
}

double reward_of(Action action, const Counterfactual& outcome) {
    if (action.channel < 0 || action.channel >= outcome.C) throw std::invalid_argument("channel out of range");
    if (!action.transmits()) return reward_no_tx(outcome.channel_row(action.channel), outcome.F);
    return reward_transmit(action.slot, outcome.at(action.channel, action.slot), outcome.F);
}

Outcome outcome_of(Action action, const Counterfactual& outcome) {
    if (!action.transmits()) return Outcome::None;
    return outcome.at(action.channel, action.slot) == 0 ? Outcome::Good : Outcome::Bad;
}

// ---- Q table -------------------------------------------------------------

QTable::QTable(int action_count, std::size_t max_states) : actions_(action_count), max_states_(max_states) {
    if (action_count < 1) throw std::invalid_argument("action count must be positive");
}

const float* QTable::find(std::uint64_t state) const {
    auto it = rows_.find(state);
    return it == rows_.end() ? nullptr : it->second.values.data();
}

float QTable::value(std::uint64_t state, int action) const {
    if (action < 0 || action >= actions_) throw std::invalid_argument("action out of range");
    const float* r = find(state);
    return r ? r[action] : 0.0f;
}

float* QTable::row(std::uint64_t state) {
    auto it = rows_.find(state);
    if (it != rows_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second.lru);
        return it->second.values.data();
    }
    if (max_states_ > 0 && rows_.size() >= max_states_) {
        rows_.erase(lru_.back());
        lru_.pop_back();
        ++evictions_;
    }
    lru_.push_front(state);
    auto [ins, ok] = rows_.emplace(state, Row{std::vector<float>(static_cast<std::size_t>(actions_), 0.0f), lru_.begin()});
    return ins->second.values.data();
}

std::vector<std::uint64_t> QTable::states() const {
    std::vector<std::uint64_t> out;
    out.reserve(rows_.size());
    for (const auto& [s, r] : rows_) out.push_back(s);
    std::sort(out.begin(), out.end());
    return out;
}

int argmax_action(const float* row, int action_count) {
    if (!row) return 0;
    int best = 0;
    for (int a = 1; a < action_count; ++a) {
        if (row[a] > row[best]) best = a;
    }
    return best;
}

Action choose_action(const SpectrumState& state, const QTable& q, double epsilon, int F, core::Rng& rng) {
    const int actions = q.action_count();
    if (epsilon > 0.0 && rng.bernoulli(epsilon)) {
        return Action::from_index(static_cast<int>(rng.below(static_cast<std::uint64_t>(actions))), F);
    }
    return Action::from_index(argmax_action(q.find(state.encode()), actions), F);
}

void sarsa_update(QTable& q, std::uint64_t s, int a, double reward, std::uint64_t s_next, int a_next, double alpha,
                  double gamma) {
    const double next = q.value(s_next, a_next);
    float* r = q.row(s);
    const double current = r[a];
    r[a] = static_cast<float>(current + alpha * (reward + gamma * next - current));
}

// ---- counterfactual interference ---------------------------------------

int count_overlaps(std::span<const HeardFrame> heard, int channel, core::SimTime start, core::Micros airtime) {
    const core::SimTime end = start + airtime;
    int m = 0;
    for (const auto& f : heard) {
        if (f.channel == channel && f.start < end && f.end > start) ++m;
    }
    return m;
}

Counterfactual counterfactual_for(std::span<const HeardFrame> heard, std::int64_t decision_slot, int F, int C,
                                  core::Micros action_airtime) {
    Counterfactual out{F, C, std::vector<int>(static_cast<std::size_t>(F * C), 0)};
    const core::SimTime window_begin = core::slot_start(decision_slot + 1);
    const core::SimTime window_end = core::slot_start(decision_slot + F) + action_airtime;
    for (const auto& f : heard) {
        if (f.channel < 0 || f.channel >= C || f.end <= window_begin || f.start >= window_end) continue;
        for (int i = 1; i <= F; ++i) {
            const core::SimTime s = core::slot_start(decision_slot + i);
            if (f.start < s + action_airtime && f.end > s) ++out.m[static_cast<std::size_t>(f.channel * F + i - 1)];
        }
    }
    return out;
}

// ---- agent ---------------------------------------------------------------

InterPredAgent::InterPredAgent(InterPredConfig cfg, std::uint64_t seed, core::SimTime started)
    : cfg_(cfg),
      rng_(seed),
      started_(started),
      slot_(core::slot_of(started)),
      state_(cfg.P, cfg.C, cfg.count_cap),
      q_(cfg.action_count(), cfg.max_states) {
    cfg_.validate();
}

void InterPredAgent::advance_to(core::SimTime now) {
    const auto target = core::slot_of(now);
    while (slot_ < target) {
        if (!real_pending_) pseudo_step();
        state_.advance();
        ++slot_;
        settle(core::slot_start(slot_));
    }
}

void InterPredAgent::ingest(core::SimTime frame_start, core::SimTime frame_end, int channel) {
    if (channel < 0 || channel >= cfg_.C) throw std::invalid_argument("channel out of range");
    advance_to(frame_end);
    state_.ingest(frame_end - frame_start, channel);
    heard_.push_back({frame_start, frame_end, channel});
}

void InterPredAgent::pseudo_step() {
    const std::uint64_t s = state_.encode();
    const int a = choose_action(state_, q_, cfg_.epsilon, cfg_.F, rng_).index(cfg_.F);
    if (!pending_.empty() && !pending_.back().has_next) {
        pending_.back().has_next = true;
        pending_.back().next_state = s;
        pending_.back().next_action = a;
    }
    pending_.push_back({s, a, slot_});
    ++pseudo_steps_;
}

Counterfactual InterPredAgent::counterfactual(std::int64_t decision_slot) const {
    return counterfactual_for(heard_, decision_slot, cfg_.F, cfg_.C, cfg_.action_airtime);
}

void InterPredAgent::settle(core::SimTime now) {
    while (!pending_.empty() && pending_.front().has_next) {
        const auto& p = pending_.front();
        const core::SimTime ready = core::slot_start(p.slot + cfg_.F) + cfg_.action_airtime + cfg_.observation_lag;
        if (now < ready) break;
        const Action action = Action::from_index(p.action, cfg_.F);
        const double reward = reward_of(action, counterfactual(p.slot));
        sarsa_update(q_, p.state, p.action, reward, p.next_state, p.next_action, cfg_.alpha, cfg_.gamma);
        ++updates_;
        pending_.pop_front();
    }
    // Frames ending before the earliest window still to be scored are no longer needed.
    const std::int64_t oldest = pending_.empty() ? slot_ : std::min(pending_.front().slot, slot_);
    const core::SimTime horizon = core::slot_start(oldest + 1);
    auto keep = std::find_if(heard_.begin(), heard_.end(), [&](const HeardFrame& f) { return f.end > horizon; });
    heard_.erase(heard_.begin(), keep);
}

Action InterPredAgent::greedy_action() const {
    return Action::from_index(argmax_action(q_.find(state_.encode()), cfg_.action_count()), cfg_.F);
}

std::optional<SlotGrant> InterPredAgent::request_slot(core::SimTime now) {
    advance_to(now);
    if (!trained(now)) return std::nullopt;
    const float* row = q_.find(state_.encode());
    const int best = argmax_action(row, cfg_.action_count());
    const Action action = Action::from_index(best, cfg_.F);
    if (!action.transmits() || !row || row[best] <= 0.0f) return std::nullopt;
    return SlotGrant{core::slot_start(slot_ + action.slot), action.channel, action};
}

// ---- snapshot ------------------------------------------------------------

std::vector<std::uint8_t> serialize_agent(const InterPredConfig& cfg, const QTable& q) {
    if (q.action_count() != cfg.action_count()) throw std::invalid_argument("table does not match config");
    core::ByteWriter w(core::Endian::Little);
    w.u32(static_cast<std::uint32_t>(cfg.P));
    w.u32(static_cast<std::uint32_t>(cfg.F));
    w.u32(static_cast<std::uint32_t>(cfg.C));
    w.f64(cfg.alpha);
    w.f64(cfg.gamma);
    w.f64(cfg.epsilon);
    const auto states = q.states();
    w.u64(states.size());
    for (auto s : states) {
        w.u64(s);
        const float* r = q.find(s);
        for (int a = 0; a < q.action_count(); ++a) w.f32(r[a]);
    }
    return w.take();
}

AgentSnapshot deserialize_agent(std::span<const std::uint8_t> bytes) {
    core::ByteReader r(bytes, core::Endian::Little);
    InterPredConfig cfg;
    cfg.P = static_cast<int>(r.u32());
    cfg.F = static_cast<int>(r.u32());
    cfg.C = static_cast<int>(r.u32());
    cfg.alpha = r.f64();
    cfg.gamma = r.f64();
    cfg.epsilon = r.f64();
    cfg.max_states = 0;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw core::DecodeError(std::string("bad snapshot header: ") + e.what());
    }
    const auto count = r.u64();
    const auto per_state = 8 + 4 * static_cast<std::uint64_t>(cfg.action_count());
    if (count > r.remaining() / per_state) throw core::DecodeError("snapshot truncated");
    AgentSnapshot snap{cfg, QTable(cfg.action_count())};
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto s = r.u64();
        float* row = snap.q.row(s);
        for (int a = 0; a < cfg.action_count(); ++a) row[a] = r.f32();
    }
    if (!r.done()) throw core::DecodeError("trailing bytes after snapshot");
    return snap;
}

// ---- comparison policies ------------------------------------------------

const char* to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::InterPred: return "interpred";
        case PolicyKind::Random: return "random";
        case PolicyKind::NextUsed: return "next-used";
    }
    return "?";
}

Action random_policy(int F, int C, core::Rng& rng) {
    return Action::from_index(static_cast<int>(rng.below(static_cast<std::uint64_t>((F + 1) * C))), F);
}

Action next_used_policy(const SpectrumState& state) {
    for (int c = 0; c < state.C(); ++c) {
        if (state.at(state.P() - 1, c) == 0) return {1, c};
    }
    return {0, 0};
}

}  // namespace ironwan::interpred
