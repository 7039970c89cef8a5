#pragma once

#include <unordered_map>

#include "ironwan/core/types.hpp"

namespace ironwan::gateway {

struct CacheEntry {
    core::NodeAddr node;
    std::uint16_t counter = 0;
    core::Frame frame;
    core::SimTime received_at{};
    core::SimTime rx1{};  // receive windows the node opens after this uplink
    core::SimTime rx2{};
};

/// Latest uplink per node, dropped once older than the TTL.
class UplinkCache {
public:
    explicit UplinkCache(core::Micros ttl = 300 * core::kMicrosPerSecond,
                         core::Micros rx1_delay = core::kMicrosPerSecond,
                         core::Micros rx2_delay = 2 * core::kMicrosPerSecond);

    /// Replaces any entry for the node unless the stored counter is newer.
    void store(const core::Frame& uplink, core::SimTime now);
    /// Entry for `node` that has not expired at `now`.
    const CacheEntry* find(core::NodeAddr node, core::SimTime now);
    void evict_expired(core::SimTime now);

    std::size_t size() const { return entries_.size(); }
    core::Micros ttl() const { return ttl_; }

private:
    core::Micros ttl_;
    core::Micros rx1_delay_;
    core::Micros rx2_delay_;
    core::SimTime last_sweep_{};
    std::unordered_map<core::NodeAddr, CacheEntry> entries_;
};

}  // namespace ironwan::gateway
