#include "ironwan/phy/duty_cycle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace ironwan::phy {

namespace {

core::Micros capacity_of(double limit, core::Micros window) {
    return static_cast<core::Micros>(std::llround(limit * static_cast<double>(window)));
}

// Reservations arrive at most a few seconds out of order; keep a generous margin.
constexpr core::Micros kPruneSlack = 120 * core::kMicrosPerSecond;

}  // namespace

DutyCycleTracker::DutyCycleTracker(core::Band band, double limit, core::Micros window)
    : band_(band), limit_(limit < 0.0 ? duty_cycle_limit(band) : limit), window_(window) {
    if (!(limit_ >= 0.0 && limit_ <= 1.0)) throw std::invalid_argument("duty-cycle limit must be in [0, 1]");
    if (window_ <= 0) throw std::invalid_argument("duty-cycle window must be positive");
    capacity_ = capacity_of(limit_, window_);
}

core::Micros DutyCycleTracker::used(core::SimTime at) const {
    core::Micros sum = 0;
    for (auto it = records_.upper_bound(at.us - window_); it != records_.end(); ++it) sum += it->second;
    return sum;
}

bool DutyCycleTracker::can_reserve(core::Micros airtime, core::SimTime at) const {
    if (airtime <= 0) throw std::invalid_argument("airtime must be positive");
    return used(at) + airtime <= capacity_;
}

bool DutyCycleTracker::try_reserve(core::Micros airtime, core::SimTime at) {
    if (!can_reserve(airtime, at)) return false;
    records_.emplace(at.us, airtime);
    prune(at);
    return true;
}

bool DutyCycleTracker::can_reserve_within(core::Micros airtime, core::SimTime at, core::Micros budget) const {
    if (airtime <= 0) throw std::invalid_argument("airtime must be positive");
    return used(at) + airtime <= std::min(budget, capacity_);
}

bool DutyCycleTracker::try_reserve_within(core::Micros airtime, core::SimTime at, core::Micros budget) {
    if (!can_reserve_within(airtime, at, budget)) return false;
    records_.emplace(at.us, airtime);
    prune(at);
    return true;
}

core::SimTime DutyCycleTracker::next_allowed(core::Micros airtime, core::SimTime at) const {
    if (airtime <= 0) throw std::invalid_argument("airtime must be positive");
    if (airtime > capacity_) throw std::invalid_argument("airtime exceeds the whole duty-cycle budget");
    core::Micros total = used(at);
    if (total + airtime <= capacity_) return at;
    // Drop the oldest counted records until the remainder fits; a record that
    // started at s stops counting once the query time reaches s + window.
    for (auto it = records_.upper_bound(at.us - window_); it != records_.end(); ++it) {
        total -= it->second;
        if (total + airtime <= capacity_) return core::SimTime{std::max(at.us, it->first + window_)};
    }
    return at;  // unreachable: an empty tracker always fits
}

void DutyCycleTracker::prune(core::SimTime at) {
    latest_query_ = std::max(latest_query_, at.us);
    const auto horizon = latest_query_ - window_ - kPruneSlack;
    records_.erase(records_.begin(), records_.upper_bound(horizon));
}

std::vector<DutyCycleViolation> audit_duty_cycle(std::vector<TxRecord> records, core::Micros window) {
    std::sort(records.begin(), records.end(), [](const TxRecord& a, const TxRecord& b) {
        return std::tie(a.transmitter, a.band, a.start) < std::tie(b.transmitter, b.band, b.start);
    });

    std::vector<DutyCycleViolation> violations;
    std::size_t group_begin = 0;
    while (group_begin < records.size()) {
        std::size_t group_end = group_begin;
        while (group_end < records.size() && records[group_end].transmitter == records[group_begin].transmitter &&
               records[group_end].band == records[group_begin].band) {
            ++group_end;
        }
        const auto capacity = capacity_of(duty_cycle_limit(records[group_begin].band), window);
        core::Micros sum = 0;
        std::size_t tail = group_begin;
        for (std::size_t i = group_begin; i < group_end; ++i) {
            sum += records[i].airtime;
            while (records[tail].start.us <= records[i].start.us - window) sum -= records[tail++].airtime;
            // Several records can share one start time; judge the window once all are in.
            const bool last_at_time = i + 1 == group_end || records[i + 1].start != records[i].start;
            if (last_at_time && sum > capacity) {
                violations.push_back({records[i].transmitter, records[i].band, records[i].start, sum, capacity});
            }
        }
        group_begin = group_end;
    }
    return violations;
}

}  // namespace ironwan::phy
