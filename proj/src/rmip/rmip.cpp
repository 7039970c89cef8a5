#include "ironwan/rmip/rmip.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ironwan::rmip {

double t_quantile_75(std::size_t df) {
    static constexpr double table[] = {1.000, 0.816, 0.765, 0.741, 0.727, 0.718, 0.711, 0.706, 0.703, 0.700,
                                       0.697, 0.695, 0.694, 0.692, 0.691, 0.690, 0.689, 0.688, 0.688, 0.687,
                                       0.686, 0.686, 0.685, 0.685, 0.684, 0.684, 0.684, 0.683, 0.683, 0.683};
    if (df == 0) throw std::invalid_argument("t quantile needs df >= 1");
    return df <= std::size(table) ? table[df - 1] : 0.674;
}


void RmipConfig::validate() const {
    if (n < 2) throw std::invalid_argument("rmip.n must be at least 2");
    if (!(e > 0.0)) throw std::invalid_argument("rmip.e must be positive");
    if (!(t_crit > 0.0)) throw std::invalid_argument("rmip.t_crit must be positive");
    if (!(grace >= 0.0)) throw std::invalid_argument("rmip.grace must be non-negative");
    if (max_counter_gap < 1) throw std::invalid_argument("rmip.max_counter_gap must be at least 1");
}

IntervalRing::IntervalRing(std::size_t capacity) : data_(capacity) {
    if (capacity == 0) throw std::invalid_argument("interval ring needs capacity");
}

void IntervalRing::push(float interval) {
    data_[head_] = interval;
    head_ = (head_ + 1) % data_.size();
    size_ = std::min(size_ + 1, data_.size());
}

void IntervalRing::clear() {
    head_ = 0;
    size_ = 0;
}

std::vector<float> IntervalRing::values() const {
    std::vector<float> out;
    out.reserve(size_);
    const std::size_t start = (head_ + data_.size() - size_) % data_.size();
    for (std::size_t i = 0; i < size_; ++i) out.push_back(data_[(start + i) % data_.size()]);
    return out;
}

std::optional<std::vector<core::Micros>> fill_missing(const RmipNodeState& state, std::uint16_t new_counter,
                                                      core::SimTime new_time, const RmipConfig& cfg) {
    if (!state.has_last) throw std::invalid_argument("fill_missing needs a previous message");
    const auto gap = core::counter_gap(state.last_counter, new_counter);
    if (gap == 0) throw std::invalid_argument("counter did not advance");
    if (new_time <= state.last_arrival) throw std::invalid_argument("arrival time did not advance");
    if (gap > cfg.max_counter_gap) return std::nullopt;

    const core::Micros elapsed = new_time - state.last_arrival;
    const core::Micros base = elapsed / gap;
    const core::Micros extra = elapsed % gap;
    std::vector<core::Micros> parts(gap, base);
    for (core::Micros i = 0; i < extra; ++i) parts[static_cast<std::size_t>(i)] += 1;
    return parts;
}

double lower_median(std::span<const float> samples) {
    if (samples.empty()) throw std::invalid_argument("median of empty sample");
    std::vector<float> sorted(samples.begin(), samples.end());
    const std::size_t mid = (sorted.size() - 1) / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
    return sorted[mid];
}

std::optional<double> estimate_interval(std::span<const float> samples, const RmipConfig& cfg) {
    if (samples.size() != cfg.n) throw std::invalid_argument("estimate_interval needs exactly n samples");
    const double median = lower_median(samples);
    const double count = static_cast<double>(samples.size());
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / count;
    double ss = 0.0;
    for (float x : samples) ss += (x - mean) * (x - mean);
    const double stddev = std::sqrt(ss / (count - 1.0));
    if (stddev == 0.0) return median;
    const double t = (mean - median) * std::sqrt(count) / stddev;
    if (std::abs(t) <= cfg.t_crit) return median;
    return std::nullopt;
}

bool update_anchor(RmipNodeState& state, core::SimTime arrival) {
    if (!state.delta_t) throw std::invalid_argument("update_anchor needs a known interval");
    if (!state.has_anchor) {
        state.has_anchor = true;
        state.anchor = arrival;
        state.anchor_count = 0;
        return true;
    }
    const core::Micros horizon = core::seconds(static_cast<double>(state.anchor_count) * *state.delta_t);
    if (arrival - state.anchor < horizon) {
        state.anchor = arrival;
        state.anchor_count = 0;
        return true;
    }
    return false;
}

namespace {

void bootstrap(RmipNodeState& state, std::uint16_t counter, core::SimTime now) {
    state.intervals.clear();
    state.has_last = true;
    state.last_arrival = now;
    state.last_counter = counter;
    state.delta_t.reset();
    state.has_anchor = true;
    state.anchor = now;
    state.anchor_count = 0;
    state.deviation_run = 0;
    state.reported_through.reset();
}

}  // namespace

std::vector<RmipEvent> observe(RmipNodeState& state, std::uint16_t counter, core::SimTime now,
                               const RmipConfig& cfg) {
    std::vector<RmipEvent> events;
    if (!state.has_last) {
        bootstrap(state, counter, now);
        return events;
    }
    if (counter == state.last_counter) return events;  // retransmission or duplicate copy
    if (now <= state.last_arrival) return events;      // out-of-order copy; nothing to learn

    const auto filled = fill_missing(state, counter, now, cfg);
    if (!filled) {
        bootstrap(state, counter, now);
        events.push_back({RmipEventKind::StateReset, 0.0});
        return events;
    }

    const auto gap = core::counter_gap(state.last_counter, counter);
    bool anchor_rebuilt = false;
    for (core::Micros part : *filled) {
        const float interval = static_cast<float>(core::to_seconds(part));
        state.intervals.push(interval);
        if (state.delta_t) {
            if (std::abs(static_cast<double>(*state.delta_t) - interval) > cfg.e) {
                ++state.deviation_run;
            } else {
                state.deviation_run = 0;
            }
            if (state.deviation_run >= cfg.n) {
                events.push_back({RmipEventKind::ChangeDetected, *state.delta_t});
                state.delta_t.reset();
                state.deviation_run = 0;
                state.has_anchor = true;
                state.anchor = now;
                state.anchor_count = 0;
                state.reported_through.reset();
                anchor_rebuilt = true;
            }
        }
        if (!state.delta_t && state.intervals.full()) {
            const auto window = state.intervals.values();
            if (auto estimate = estimate_interval(window, cfg)) {
                state.delta_t = static_cast<float>(*estimate);
                state.deviation_run = 0;
                events.push_back({RmipEventKind::IntervalLearned, *estimate});
            }
        }
    }

    state.last_arrival = now;
    state.last_counter = counter;
    if (!anchor_rebuilt) {
        state.anchor_count += gap;
        if (state.delta_t && update_anchor(state, now)) {
            events.push_back({RmipEventKind::AnchorReset, now.seconds()});
        }
    }
    return events;
}

std::vector<RmipEvent> observe(RmipNodeState& state, const core::Frame& frame, core::SimTime now,
                               const RmipConfig& cfg) {
    if (frame.kind != core::FrameKind::Uplink) throw std::invalid_argument("rmip observes uplinks only");
    if (state.has_last && frame.subject_node != state.node) throw std::invalid_argument("frame for another node");
    state.node = frame.subject_node;
    return observe(state, frame.counter, now, cfg);
}

std::optional<core::SimTime> expected_next(const RmipNodeState& state) {
    if (!state.delta_t || !state.has_anchor) return std::nullopt;
    const double dt = *state.delta_t;
    core::SimTime expected = state.anchor + core::seconds((state.anchor_count + 1) * dt);
    if (state.reported_through) {
        const core::Micros step = std::max<core::Micros>(1, core::seconds(dt));
        while (expected <= *state.reported_through) expected += step;
    }
    return expected;
}

std::optional<core::SimTime> next_poll_due(const RmipNodeState& state, const RmipConfig& cfg) {
    const auto expected = expected_next(state);
    if (!expected) return std::nullopt;
    return *expected + core::seconds(cfg.grace) + 1;
}

std::optional<MissingReport> poll_missing(RmipNodeState& state, core::SimTime now, const RmipConfig& cfg) {
    const auto expected = expected_next(state);
    if (!expected) return std::nullopt;
    if (now <= *expected + core::seconds(cfg.grace)) return std::nullopt;
    state.reported_through = *expected;
    return MissingReport{state.node, state.last_counter, *expected};
}

RmipTable::RmipTable(RmipConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<RmipEvent> RmipTable::observe(const core::Frame& uplink, core::SimTime now) {
    auto [it, inserted] = states_.try_emplace(uplink.subject_node, uplink.subject_node, cfg_.n);
    return rmip::observe(it->second, uplink, now, cfg_);
}

std::optional<MissingReport> RmipTable::poll(core::NodeAddr node, core::SimTime now) {
    auto it = states_.find(node);
    if (it == states_.end()) return std::nullopt;
    return poll_missing(it->second, now, cfg_);
}

std::optional<core::SimTime> RmipTable::next_due(core::NodeAddr node) const {
    auto it = states_.find(node);
    if (it == states_.end()) return std::nullopt;
    return next_poll_due(it->second, cfg_);
}

const RmipNodeState* RmipTable::find(core::NodeAddr node) const {
    auto it = states_.find(node);
    return it == states_.end() ? nullptr : &it->second;
}

}  // namespace ironwan::rmip
