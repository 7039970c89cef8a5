#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "ironwan/core/event_log.hpp"
#include "ironwan/core/types.hpp"
#include "ironwan/gateway/cache.hpp"
#include "ironwan/gateway/g2g.hpp"
#include "ironwan/interpred/interpred.hpp"
#include "ironwan/phy/duty_cycle.hpp"
#include "ironwan/rmip/rmip.hpp"

namespace ironwan::gateway {

struct GatewayConfig {
    core::GatewayId id;
    core::NetworkId network;
    double x = 0.0;
    double y = 0.0;
    bool overlay = false;  // run the G2G overlay (RMIP, InterPred, handover)
    double tx_power_dbm = 14.0;
    core::Micros cache_ttl = 300 * core::kMicrosPerSecond;
    core::Micros freshness = 2 * core::kMicrosPerSecond;  // max cache age for answering a downlink handover
    int g2g_retry_limit = 10;
    std::uint8_t g2g_sf = 9;
    std::uint8_t rx2_channel = 3;
    std::uint8_t rx2_sf = 12;
    core::Micros rx1_delay = core::kMicrosPerSecond;
    core::Micros rx2_delay = 2 * core::kMicrosPerSecond;
    std::size_t ack_payload_len = 12;
    // G2G frames draw on their own Band0 allocation, separate from the downlink one.
    double g2g_duty_cycle = 0.01;
    rmip::RmipConfig rmip;
    interpred::InterPredConfig interpred;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ServerDelivery {
    core::Frame uplink;
    core::GatewayId gateway;
    double rx_power_dbm = 0.0;
    core::SimTime received_at{};
    bool recovered = false;  // learned from a neighbour's rebroadcast
};

enum class Effect : std::uint8_t { ForwardToServer, CacheStore, RmipObserve, InterPredIngest, G2GHandle, Malformed };

struct DownlinkRequest {
    core::NodeAddr node;
    std::uint16_t counter = 0;
    core::SimTime uplink_end{};
    std::uint8_t channel = 0;
    std::uint8_t spreading_factor = 7;
};

enum class DownlinkOutcome { Rx1, Rx2, HandedOver, Dropped };

struct GatewayCounters {
    std::uint64_t uplinks_received = 0;
    std::uint64_t rx1_sent = 0;
    std::uint64_t rx2_sent = 0;
    std::uint64_t downlinks_dropped = 0;
    std::uint64_t req_uplink_sent = 0;
    std::uint64_t rebroadcast_sent = 0;
    std::uint64_t handover_sent = 0;
    std::uint64_t neighbour_downlinks = 0;
    std::uint64_t handover_requests_heard = 0;
    std::uint64_t handover_unanswerable = 0;  // heard, but no fresh cached uplink or no duty cycle left
    std::uint64_t g2g_starved = 0;
    std::uint64_t ack_abandoned = 0;
    std::uint64_t malformed = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
    std::uint64_t missing_reports = 0;
    std::uint64_t slot_declined = 0;  // attempts where InterPred offered no slot
    std::uint64_t slot_blocked = 0;   // granted slot lost to duty cycle or half-duplex
    std::uint64_t untrained_skips = 0;  // reports or handovers that arrived before InterPred finished training

    std::uint64_t g2g_messages() const { return req_uplink_sent + rebroadcast_sent + handover_sent; }
};

/// One IRONWAN (or plain LoRaWAN, with `overlay` off) gateway.
///
/// Calls return immediately; frames to put on air and uplinks for the
/// network server accumulate in outboxes the simulator drains.
class GatewayRuntime {
public:
    explicit GatewayRuntime(GatewayConfig cfg, core::EventLog* log = nullptr);

    /// A frame this gateway decoded, delivered at its end time.
    std::vector<Effect> on_receive(const core::Frame& frame, double rx_power_dbm, core::SimTime now);

    /// Server asks for an ack: RX1, then RX2, then (overlay only) handover.
    DownlinkOutcome send_downlink(const DownlinkRequest& request, core::SimTime now);

    /// RMIP polling and pending G2G jobs.
    void on_wakeup(core::SimTime now);
    std::optional<core::SimTime> next_wakeup() const;

    std::vector<core::Frame> take_transmissions();
    std::vector<ServerDelivery> take_deliveries();

    /// Whether any own transmission overlaps [start, end).
    bool transmitting_during(core::SimTime start, core::SimTime end) const;

    const GatewayConfig& config() const { return cfg_; }
    const GatewayCounters& counters() const { return counters_; }
    const UplinkCache& cache() const { return cache_; }
    const rmip::RmipTable& rmip() const { return rmip_; }
    const interpred::InterPredAgent& agent() const { return agent_; }
    interpred::InterPredAgent& agent() { return agent_; }
    const phy::DutyCycleTracker& duty(core::Band band) const { return band == core::Band::Band0 ? band0_ : band1_; }
    const phy::DutyCycleTracker& g2g_duty() const { return g2g_; }
    std::size_t pending_jobs() const { return jobs_.size(); }

private:
    struct Job {
        std::uint64_t id;
        G2GMessage message;
        core::NodeAddr node;
        std::uint16_t counter;
        core::SimTime created;
        core::SimTime next_try;
        int attempts = 0;
        std::optional<core::SimTime> deadline;  // latest useful start (handover)
    };

    void handle_g2g(const core::Frame& frame, core::SimTime now);
    void answer_uplink_request(const ReqUplink& req, core::SimTime now);
    void take_rebroadcast(const RebroadcastUplink& rb, core::SimTime now);
    void answer_downlink_request(const ReqForwardDownlink& req, core::SimTime now);
    void raise_uplink_request(const rmip::MissingReport& report, core::SimTime now);

    void add_job(G2GMessage message, core::NodeAddr node, std::uint16_t counter, core::SimTime now,
                 std::optional<core::SimTime> deadline);
    void process_jobs(core::SimTime now);
    bool attempt(Job& job, core::SimTime now);
    void schedule_poll(core::NodeAddr node);
    void poll_rmip(core::SimTime now);

    core::Frame make_downlink(core::FrameKind kind, core::NodeAddr node, std::uint16_t counter,
                              const core::RadioParams& radio, core::SimTime start,
                              std::vector<std::uint8_t> payload) const;
    bool try_transmit(core::Frame frame);
    void log(core::SimTime t, std::string_view event, nlohmann::json fields = nlohmann::json::object());

    GatewayConfig cfg_;
    core::EventLog* log_;
    std::string actor_;
    UplinkCache cache_;
    rmip::RmipTable rmip_;
    interpred::InterPredAgent agent_;
    phy::DutyCycleTracker band0_;
    phy::DutyCycleTracker band1_;
    phy::DutyCycleTracker g2g_;
    std::map<std::int64_t, std::int64_t> busy_;  // own tx intervals, start -> end
    std::vector<Job> jobs_;
    std::uint64_t next_job_id_ = 1;
    std::int64_t last_attempt_slot_ = -1;
    std::unordered_map<std::uint64_t, core::SimTime> recent_rebroadcasts_;  // (node, counter) -> when queued
    using PollEntry = std::pair<std::int64_t, std::uint32_t>;           // due, node
    std::priority_queue<PollEntry, std::vector<PollEntry>, std::greater<>> polls_;
    std::unordered_map<core::NodeAddr, std::int64_t> poll_due_;
    std::vector<core::Frame> transmissions_;
    std::vector<ServerDelivery> deliveries_;
    GatewayCounters counters_;
};

}  // namespace ironwan::gateway
