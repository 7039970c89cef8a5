#include "ironwan/gateway/cache.hpp"

#include <stdexcept>

namespace ironwan::gateway {

UplinkCache::UplinkCache(core::Micros ttl, core::Micros rx1_delay, core::Micros rx2_delay)
    : ttl_(ttl), rx1_delay_(rx1_delay), rx2_delay_(rx2_delay) {
    if (ttl <= 0) throw std::invalid_argument("cache ttl must be positive");
}

void UplinkCache::store(const core::Frame& uplink, core::SimTime now) {
    if (uplink.kind != core::FrameKind::Uplink) throw std::invalid_argument("cache stores uplinks only");
    auto it = entries_.find(uplink.subject_node);
    if (it != entries_.end() && now - it->second.received_at <= ttl_ &&
        core::counter_newer(it->second.counter, uplink.counter)) {
        return;
    }
    CacheEntry e{uplink.subject_node, uplink.counter, uplink, now, uplink.tx_end() + rx1_delay_,
                 uplink.tx_end() + rx2_delay_};
    entries_.insert_or_assign(uplink.subject_node, std::move(e));
    if (now - last_sweep_ > ttl_) evict_expired(now);
}

const CacheEntry* UplinkCache::find(core::NodeAddr node, core::SimTime now) {
    auto it = entries_.find(node);
    if (it == entries_.end()) return nullptr;
    if (now - it->second.received_at > ttl_) {
        entries_.erase(it);
        return nullptr;
    }
    return &it->second;
}

void UplinkCache::evict_expired(core::SimTime now) {
    last_sweep_ = now;
    std::erase_if(entries_, [&](const auto& kv) { return now - kv.second.received_at > ttl_; });
}

}  // namespace ironwan::gateway
