#include "ironwan/gateway/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ironwan/phy/phy.hpp"

namespace ironwan::gateway {

using core::FrameKind;
using core::SimTime;

void GatewayConfig::validate() const {
    if (cache_ttl <= 0) throw std::invalid_argument("gateway cache_ttl must be positive");
    if (freshness < 0) throw std::invalid_argument("gateway freshness must be non-negative");
    if (g2g_retry_limit < 1) throw std::invalid_argument("gateway g2g_retry_limit must be at least 1");
    if (g2g_sf < 7 || g2g_sf > 12 || rx2_sf < 7 || rx2_sf > 12) throw std::invalid_argument("gateway SF out of range");
    if (rx1_delay <= 0 || rx2_delay <= rx1_delay) throw std::invalid_argument("gateway rx delays must be 0 < rx1 < rx2");
    if (!(g2g_duty_cycle > 0.0 && g2g_duty_cycle <= phy::duty_cycle_limit(core::Band::Band0))) {
        throw std::invalid_argument("gateway g2g_duty_cycle must be in (0, Band0 limit]");
    }
    rmip.validate();
    interpred.validate();
}

namespace {

std::uint64_t message_key(core::NodeAddr node, std::uint16_t counter) {
    return (static_cast<std::uint64_t>(node.value) << 16) | counter;
}

constexpr core::Micros kRebroadcastMemory = 30 * core::kMicrosPerSecond;
constexpr core::Micros kBusyMemory = 10 * core::kMicrosPerSecond;
constexpr core::Micros kJobLifetime = 30 * core::kMicrosPerSecond;  // queued G2G work older than this is stale

}  // namespace

GatewayRuntime::GatewayRuntime(GatewayConfig cfg, core::EventLog* log)
    : cfg_(cfg),
      log_(log),
      actor_(core::actor_name(cfg.id)),
      cache_(cfg.cache_ttl, cfg.rx1_delay, cfg.rx2_delay),
      rmip_(cfg.rmip),
      agent_(cfg.interpred, core::mix_seed(cfg.seed, cfg.id.value)),
      band0_(core::Band::Band0),
      band1_(core::Band::Band1),
      g2g_(core::Band::Band0, cfg.g2g_duty_cycle) {
    cfg_.validate();
}

void GatewayRuntime::log(SimTime t, std::string_view event, nlohmann::json fields) {
    if (log_) log_->record(t, actor_, event, std::move(fields));
}

std::vector<Effect> GatewayRuntime::on_receive(const core::Frame& frame, double rx_power_dbm, SimTime now) {
    std::vector<Effect> effects;
    if (frame.kind == FrameKind::Uplink) {
        ++counters_.uplinks_received;
        log(now, "rx", {{"kind", "Uplink"}, {"node", frame.subject_node.value}, {"counter", frame.counter},
                        {"rssi", std::round(rx_power_dbm * 100.0) / 100.0}});
        deliveries_.push_back({frame, cfg_.id, rx_power_dbm, now, false});
        effects.push_back(Effect::ForwardToServer);
        cache_.store(frame, now);
        effects.push_back(Effect::CacheStore);
        if (cfg_.overlay) {
            rmip_.observe(frame, now);
            effects.push_back(Effect::RmipObserve);
            if (core::network_of(frame.subject_node) == cfg_.network) schedule_poll(frame.subject_node);
            if (frame.radio.band == core::Band::Band0 && frame.radio.channel < cfg_.interpred.C) {
                agent_.ingest(frame.tx_start, frame.tx_end(), frame.radio.channel);
                effects.push_back(Effect::InterPredIngest);
            }
            // The message arrived after all; a pending request for it is moot.
            std::erase_if(jobs_, [&](const Job& j) {
                return std::holds_alternative<ReqUplink>(j.message) && j.node == frame.subject_node &&
                       core::counter_newer(frame.counter, j.counter);
            });
        }
        return effects;
    }
    if (core::is_g2g(frame.kind) && frame.kind != FrameKind::NeighbourDownlink) {
        effects.push_back(Effect::G2GHandle);
        if (!cfg_.overlay) return effects;
        try {
            handle_g2g(frame, now);
        } catch (const core::DecodeError& e) {
            ++counters_.malformed;
            log(now, "malformed", {{"kind", core::to_string(frame.kind)}, {"error", e.what()}});
            effects.push_back(Effect::Malformed);
        }
        process_jobs(now);
    }
    return effects;
}

void GatewayRuntime::handle_g2g(const core::Frame& frame, SimTime now) {
    const auto message = decode_g2g(frame.payload);
    if (kind_of(message) != frame.kind) throw core::DecodeError("frame kind does not match g2g tag");
    log(now, "rx", {{"kind", core::to_string(frame.kind)}, {"node", frame.subject_node.value}, {"counter", frame.counter}});
    if (const auto* req = std::get_if<ReqUplink>(&message)) {
        answer_uplink_request(*req, now);
    } else if (const auto* rb = std::get_if<RebroadcastUplink>(&message)) {
        take_rebroadcast(*rb, now);
    } else {
        answer_downlink_request(std::get<ReqForwardDownlink>(message), now);
    }
}

void GatewayRuntime::answer_uplink_request(const ReqUplink& req, SimTime now) {
    // Requests only ever concern the requester's own nodes; if those are ours too,
    // our server already has whatever this gateway heard, and a sibling has asked already.
    if (core::network_of(req.node) == cfg_.network) {
        std::erase_if(jobs_, [&](const Job& j) {
            return std::holds_alternative<ReqUplink>(j.message) && j.node == req.node && j.counter == req.last_counter;
        });
        return;
    }
    const CacheEntry* entry = cache_.find(req.node, now);
    if (!entry || !core::counter_newer(entry->counter, req.last_counter)) {
        ++counters_.cache_misses;
        log(now, "cache_miss", {{"node", req.node.value}, {"last_counter", req.last_counter}});
        return;
    }
    ++counters_.cache_hits;
    log(now, "cache_hit", {{"node", req.node.value}, {"counter", entry->counter}});
    const auto key = message_key(req.node, entry->counter);
    std::erase_if(recent_rebroadcasts_, [&](const auto& kv) { return now - kv.second > kRebroadcastMemory; });
    if (recent_rebroadcasts_.contains(key)) return;
    if (!agent_.trained(now)) {
        ++counters_.untrained_skips;
        return;
    }
    recent_rebroadcasts_.emplace(key, now);
    add_job(RebroadcastUplink{UplinkRecord::from_frame(entry->frame)}, req.node, entry->counter, now, std::nullopt);
}

void GatewayRuntime::take_rebroadcast(const RebroadcastUplink& rb, SimTime now) {
    const auto& u = rb.uplink;
    // Someone else already answered; drop our own copy of the same answer.
    std::erase_if(jobs_, [&](const Job& j) {
        return std::holds_alternative<RebroadcastUplink>(j.message) && j.node == u.node && j.counter == u.counter;
    });
    recent_rebroadcasts_.emplace(message_key(u.node, u.counter), now);
    if (core::network_of(u.node) != cfg_.network) return;

    const core::Frame original = u.to_frame();
    deliveries_.push_back({original, cfg_.id, 0.0, now, true});
    rmip_.observe(original, original.tx_end());
    schedule_poll(u.node);
    std::erase_if(jobs_, [&](const Job& j) {
        return std::holds_alternative<ReqUplink>(j.message) && j.node == u.node && core::counter_newer(u.counter, j.counter);
    });
}

void GatewayRuntime::answer_downlink_request(const ReqForwardDownlink& req, SimTime now) {
    ++counters_.handover_requests_heard;
    const CacheEntry* entry = cache_.find(req.target, now);
    if (!entry || entry->counter != req.counter || now - entry->received_at > cfg_.freshness) {
        ++counters_.handover_unanswerable;
        ++counters_.cache_misses;
        log(now, "cache_miss", {{"node", req.target.value}, {"counter", req.counter}});
        return;
    }
    ++counters_.cache_hits;
    log(now, "cache_hit", {{"node", req.target.value}, {"counter", req.counter}});
    const core::Frame& up = entry->frame;

    if (entry->rx1 >= now) {
        core::RadioParams rx1{up.radio.channel, up.radio.spreading_factor, up.radio.bandwidth_hz, cfg_.tx_power_dbm,
                              core::Band::Band0};
        if (try_transmit(make_downlink(FrameKind::NeighbourDownlink, req.target, req.counter, rx1, entry->rx1, req.downlink))) {
            return;
        }
    }
    if (entry->rx2 >= now) {
        core::RadioParams rx2{cfg_.rx2_channel, cfg_.rx2_sf, 125'000, cfg_.tx_power_dbm, core::Band::Band1};
        try_transmit(make_downlink(FrameKind::NeighbourDownlink, req.target, req.counter, rx2, entry->rx2, req.downlink));
    }
}

DownlinkOutcome GatewayRuntime::send_downlink(const DownlinkRequest& request, SimTime now) {
    const auto payload = core::opaque_payload(core::NodeAddr{~request.node.value}, request.counter, cfg_.ack_payload_len);
    const SimTime rx1_at = request.uplink_end + cfg_.rx1_delay;
    const SimTime rx2_at = request.uplink_end + cfg_.rx2_delay;

    if (rx1_at >= now) {
        core::RadioParams rx1{request.channel, request.spreading_factor, 125'000, cfg_.tx_power_dbm, core::Band::Band0};
        if (try_transmit(make_downlink(FrameKind::DownlinkAck, request.node, request.counter, rx1, rx1_at, payload))) {
            ++counters_.rx1_sent;
            return DownlinkOutcome::Rx1;
        }
    }
    if (rx2_at >= now) {
        core::RadioParams rx2{cfg_.rx2_channel, cfg_.rx2_sf, 125'000, cfg_.tx_power_dbm, core::Band::Band1};
        if (try_transmit(make_downlink(FrameKind::DownlinkAck, request.node, request.counter, rx2, rx2_at, payload))) {
            ++counters_.rx2_sent;
            return DownlinkOutcome::Rx2;
        }
    }
    if (cfg_.overlay) {
        if (!agent_.trained(now)) {
            ++counters_.untrained_skips;
            ++counters_.downlinks_dropped;
            return DownlinkOutcome::Dropped;
        }
        log(now, "handover", {{"node", request.node.value}, {"counter", request.counter}});
        add_job(ReqForwardDownlink{request.node, request.counter, rx1_at, rx2_at, payload}, request.node,
                request.counter, now, rx2_at);
        return DownlinkOutcome::HandedOver;
    }
    ++counters_.downlinks_dropped;
    return DownlinkOutcome::Dropped;
}

void GatewayRuntime::raise_uplink_request(const rmip::MissingReport& report, SimTime now) {
    ++counters_.missing_reports;
    log(now, "rmip_missing", {{"node", report.node.value}, {"last_counter", report.last_counter},
                              {"expected_us", report.expected.us}});
    if (!agent_.trained(now)) {
        ++counters_.untrained_skips;
        return;
    }
    const bool pending = std::any_of(jobs_.begin(), jobs_.end(), [&](const Job& j) {
        return std::holds_alternative<ReqUplink>(j.message) && j.node == report.node;
    });
    if (pending) return;
    add_job(ReqUplink{report.node, report.last_counter}, report.node, report.last_counter, now, std::nullopt);
}

void GatewayRuntime::add_job(G2GMessage message, core::NodeAddr node, std::uint16_t counter, SimTime now,
                             std::optional<SimTime> deadline) {
    jobs_.push_back({next_job_id_++, std::move(message), node, counter, now, now, 0, deadline});
    process_jobs(now);
}

namespace {

// Handovers first, earliest deadline first, then arrival order.
bool more_urgent(const std::optional<SimTime>& da, std::uint64_t ia, const std::optional<SimTime>& db, std::uint64_t ib) {
    if (da.has_value() != db.has_value()) return da.has_value();
    if (da && *da != *db) return *da < *db;
    return ia < ib;
}

}  // namespace

void GatewayRuntime::process_jobs(SimTime now) {
    // One radio: per slot only the most urgent due job asks for a grant, the rest wait their turn.
    const auto slot = core::slot_of(now);
    std::vector<std::uint64_t> finished;
    Job* head = nullptr;
    if (slot != last_attempt_slot_) {
        for (auto& job : jobs_) {
            if (job.next_try > now) continue;
            if (!head || more_urgent(job.deadline, job.id, head->deadline, head->id)) head = &job;
        }
    }
    if (head) {
        last_attempt_slot_ = slot;
        if (attempt(*head, now)) finished.push_back(head->id);
    }
    for (auto& job : jobs_) {
        if (&job == head || job.next_try > now) continue;
        const auto kind = kind_of(job.message);
        if (job.deadline && now + core::kSlotLength > *job.deadline) {
            ++counters_.ack_abandoned;
            log(now, "g2g_decision", {{"kind", core::to_string(kind)}, {"node", job.node.value}, {"counter", job.counter},
                                      {"attempt", job.attempts}, {"result", "abandoned"}});
            finished.push_back(job.id);
        } else if (now - job.created > kJobLifetime) {
            ++counters_.g2g_starved;
            log(now, "g2g_decision", {{"kind", core::to_string(kind)}, {"node", job.node.value}, {"counter", job.counter},
                                      {"attempt", job.attempts}, {"result", "expired"}});
            finished.push_back(job.id);
        } else {
            job.next_try = core::slot_start(slot + 1);
        }
    }
    std::erase_if(jobs_, [&](const Job& j) { return std::find(finished.begin(), finished.end(), j.id) != finished.end(); });
    agent_.set_real_pending(!jobs_.empty());
}

bool GatewayRuntime::attempt(Job& job, SimTime now) {
    const auto kind = kind_of(job.message);
    const bool handover = kind == FrameKind::ReqForwardDownlink;
    auto decision = [&](const char* result) {
        log(now, "g2g_decision", {{"kind", core::to_string(kind)}, {"node", job.node.value}, {"counter", job.counter},
                                  {"attempt", job.attempts}, {"result", result}});
    };
    if (job.deadline && now + core::kSlotLength > *job.deadline) {
        ++counters_.ack_abandoned;
        decision("abandoned");
        return true;
    }
    if (auto grant = agent_.request_slot(now)) {
        auto bytes = encode_g2g(job.message);
        core::RadioParams radio{static_cast<std::uint8_t>(grant->channel), cfg_.g2g_sf, 125'000, cfg_.tx_power_dbm,
                                core::Band::Band0};
        core::Frame frame;
        frame.kind = kind;
        frame.source = cfg_.id;
        frame.subject_node = job.node;
        frame.counter = job.counter;
        frame.payload_len = static_cast<std::uint8_t>(bytes.size());
        frame.radio = radio;
        frame.tx_start = grant->start;
        frame.airtime = phy::compute_airtime(bytes.size(), radio);
        frame.payload = std::move(bytes);
        if (job.deadline && frame.tx_end() + core::kSlotLength > *job.deadline) {
            ++counters_.ack_abandoned;
            decision("abandoned");
            return true;
        }
        if (try_transmit(std::move(frame))) {
            decision("granted");
            return true;
        }
        ++counters_.slot_blocked;
    } else {
        ++counters_.slot_declined;
    }
    if (++job.attempts >= cfg_.g2g_retry_limit) {
        ++counters_.g2g_starved;
        if (handover) ++counters_.ack_abandoned;
        decision("starved");
        return true;
    }
    job.next_try = core::slot_start(core::slot_of(now) + 1);
    return false;
}

void GatewayRuntime::schedule_poll(core::NodeAddr node) {
    const auto due = rmip_.next_due(node);
    if (!due) return;
    // Polling happens on slot boundaries.
    const std::int64_t slot_due = core::slot_start(core::slot_of(*due - 1) + 1).us;
    auto it = poll_due_.find(node);
    if (it != poll_due_.end() && it->second == slot_due) return;
    poll_due_[node] = slot_due;
    polls_.push({slot_due, node.value});
}

void GatewayRuntime::poll_rmip(SimTime now) {
    while (!polls_.empty() && polls_.top().first <= now.us) {
        const auto [due, raw] = polls_.top();
        polls_.pop();
        const core::NodeAddr node{raw};
        auto it = poll_due_.find(node);
        if (it == poll_due_.end() || it->second != due) continue;  // superseded
        poll_due_.erase(it);
        if (auto report = rmip_.poll(node, now)) raise_uplink_request(*report, now);
        schedule_poll(node);
    }
}

void GatewayRuntime::on_wakeup(SimTime now) {
    if (!cfg_.overlay) return;
    poll_rmip(now);
    process_jobs(now);
}

std::optional<SimTime> GatewayRuntime::next_wakeup() const {
    std::optional<SimTime> next;
    auto consider = [&](SimTime t) {
        if (!next || t < *next) next = t;
    };
    for (const auto& j : jobs_) consider(j.next_try);
    if (!polls_.empty()) consider(SimTime{polls_.top().first});
    return next;
}

core::Frame GatewayRuntime::make_downlink(FrameKind kind, core::NodeAddr node, std::uint16_t counter,
                                          const core::RadioParams& radio, SimTime start,
                                          std::vector<std::uint8_t> payload) const {
    core::Frame f;
    f.kind = kind;
    f.source = cfg_.id;
    f.subject_node = node;
    f.counter = counter;
    f.payload_len = static_cast<std::uint8_t>(payload.size());
    f.radio = radio;
    f.tx_start = start;
    f.airtime = phy::compute_airtime(payload.size(), radio);
    f.payload = std::move(payload);
    return f;
}

bool GatewayRuntime::transmitting_during(SimTime start, SimTime end) const {
    auto it = busy_.lower_bound(end.us);
    if (it == busy_.begin()) return false;
    --it;
    return it->second > start.us;
}

bool GatewayRuntime::try_transmit(core::Frame frame) {
    if (transmitting_during(frame.tx_start, frame.tx_end())) return false;
    if (frame.radio.band == core::Band::Band1) {
        if (!band1_.try_reserve(frame.airtime, frame.tx_start)) return false;
    } else {
        auto& budget = core::is_downlink(frame.kind) ? band0_ : g2g_;
        if (!budget.try_reserve(frame.airtime, frame.tx_start)) return false;
    }

    busy_.erase(busy_.begin(), busy_.lower_bound(frame.tx_start.us - kBusyMemory));
    busy_.emplace(frame.tx_start.us, frame.tx_end().us);
    switch (frame.kind) {
        case FrameKind::ReqUplink: ++counters_.req_uplink_sent; break;
        case FrameKind::RebroadcastUplink: ++counters_.rebroadcast_sent; break;
        case FrameKind::ReqForwardDownlink: ++counters_.handover_sent; break;
        case FrameKind::NeighbourDownlink: ++counters_.neighbour_downlinks; break;
        default: break;
    }
    log(frame.tx_start, "tx", {{"kind", core::to_string(frame.kind)}, {"node", frame.subject_node.value},
                               {"allocation", core::is_downlink(frame.kind) ? "downlink" : "g2g"},
                               {"counter", frame.counter}, {"band", static_cast<int>(frame.radio.band)},
                               {"channel", frame.radio.channel}, {"sf", frame.radio.spreading_factor},
                               {"airtime_us", frame.airtime}});
    transmissions_.push_back(std::move(frame));
    return true;
}

std::vector<core::Frame> GatewayRuntime::take_transmissions() { return std::exchange(transmissions_, {}); }
std::vector<ServerDelivery> GatewayRuntime::take_deliveries() { return std::exchange(deliveries_, {}); }

}  // namespace ironwan::gateway
