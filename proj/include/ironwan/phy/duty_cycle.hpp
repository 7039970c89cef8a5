#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ironwan/core/types.hpp"

namespace ironwan::phy {

inline constexpr core::Micros kDutyCycleWindow = 3600 * core::kMicrosPerSecond;

/// EU868 regulatory share for each band.
constexpr double duty_cycle_limit(core::Band band) { return band == core::Band::Band0 ? 0.01 : 0.10; }

/// Sliding one-hour airtime accounting for one transmitter on one band.
///
/// Airtime is attributed to the transmission start. A reservation at `at` is
/// accepted iff every recorded transmission starting after `at - window`, plus
/// the new one, fits in `limit * window`. Since every trailing window that
/// contains `at` is a subset of that range, accepted reservations can never
/// push any window over the limit, even when reservations arrive slightly out
/// of time order (an RX2 slot booked before a later RX1 slot).
class DutyCycleTracker {
public:
    explicit DutyCycleTracker(core::Band band = core::Band::Band0, double limit = -1.0,
                              core::Micros window = kDutyCycleWindow);

    /// Accept and record, or reject without side effects. Throws for airtime <= 0.
    bool try_reserve(core::Micros airtime, core::SimTime at);

    /// Would try_reserve accept right now? No recording.
    bool can_reserve(core::Micros airtime, core::SimTime at) const;

    /// Same checks against a smaller budget (clamped to the band capacity).
    bool can_reserve_within(core::Micros airtime, core::SimTime at, core::Micros budget) const;
    bool try_reserve_within(core::Micros airtime, core::SimTime at, core::Micros budget);

    /// Earliest time >= `at` at which a reservation of `airtime` would be accepted.
    core::SimTime next_allowed(core::Micros airtime, core::SimTime at) const;

    /// Airtime counted against a reservation at `at`.
    core::Micros used(core::SimTime at) const;

    core::Band band() const { return band_; }
    double limit() const { return limit_; }
    core::Micros window() const { return window_; }
    core::Micros capacity() const { return capacity_; }

private:
    void prune(core::SimTime at);

    core::Band band_;
    double limit_;
    core::Micros window_;
    core::Micros capacity_;
    std::multimap<std::int64_t, core::Micros> records_;  // start -> airtime
    std::int64_t latest_query_ = 0;
};

/// One transmission, as recovered from an event log.
struct TxRecord {
    std::string transmitter;  // "n:<addr>" or "g:<id>"
    core::Band band = core::Band::Band0;
    core::SimTime start{};
    core::Micros airtime = 0;
};

struct DutyCycleViolation {
    std::string transmitter;
    core::Band band = core::Band::Band0;
    core::SimTime window_end{};
    core::Micros used = 0;
    core::Micros capacity = 0;
};

/// Checks every trailing one-hour window (ending at each transmission start)
/// of every transmitter and band against the band limit.
std::vector<DutyCycleViolation> audit_duty_cycle(std::vector<TxRecord> records,
                                                 core::Micros window = kDutyCycleWindow);

}  // namespace ironwan::phy
