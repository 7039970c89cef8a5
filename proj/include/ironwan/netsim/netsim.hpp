#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ironwan/core/event_log.hpp"
#include "ironwan/core/types.hpp"
#include "ironwan/interpred/interpred.hpp"
#include "ironwan/phy/duty_cycle.hpp"
#include "ironwan/phy/phy.hpp"
#include "ironwan/rmip/rmip.hpp"

namespace ironwan::netsim {

enum class SystemKind { LoRaWAN, IRONWAN, WCS, FLIP };
const char* to_string(SystemKind system);
SystemKind parse_system(const std::string& text);

struct Position {
    double x = 0.0;
    double y = 0.0;
};

double distance(Position a, Position b);

struct GatewaySite {
    Position position;
    std::uint32_t network = 0;
};

/// Band0 uplink channels are 0..2, channel 3 is the Band1 RX2 channel.
inline constexpr std::uint8_t kUplinkChannels = 3;

struct ScenarioConfig {
    std::size_t node_count = 200;
    double area_km2 = 4.0;             // square, nodes placed uniformly
    std::size_t gateway_count = 6;     // grid placement when `gateways` is empty
    std::vector<GatewaySite> gateways;  // explicit sites override the grid
    std::size_t networks = 4;          // owners; grid gateways are dealt round-robin
    double load = 0.5;                 // fraction of nodes that want acks
    core::Micros duration = 4 * 3600 * core::kMicrosPerSecond;
    core::Micros drain = 120 * core::kMicrosPerSecond;  // run on after the last message is generated
    std::uint64_t seed = 1;
    SystemKind system = SystemKind::LoRaWAN;
    phy::LinkModel link;
    rmip::RmipConfig rmip;
    interpred::InterPredConfig interpred = desk_interpred();
    int retx_limit = 8;
    core::Micros period = 180 * core::kMicrosPerSecond;
    std::size_t payload_len = 20;
    double node_tx_power_dbm = 14.0;
    double gateway_tx_power_dbm = 14.0;
    double adr_margin_db = 3.0;
    double gateway_link_gain_db = 0.0;  // fixed extra gain on gateway-to-gateway links (mast height)
    std::size_t ack_payload_len = 12;
    core::Micros cache_ttl = 300 * core::kMicrosPerSecond;
    int g2g_retry_limit = 10;
    std::uint8_t g2g_sf = 7;
    double g2g_duty_cycle = 0.01;  // IRONWAN: Band0 allocation for G2G frames, on top of the downlink one
    core::Micros server_wait = 100 * core::kMicrosPerMilli;  // collect copies before deciding
    bool event_log = true;

    /// InterPred defaults with the pseudo-action phase shortened for hour-scale runs.
    static interpred::InterPredConfig desk_interpred();

    void validate() const;
    double side_m() const;
};

/// Grid of `count` sites over the square, networks dealt round-robin.
std::vector<GatewaySite> grid_gateways(std::size_t count, double side_m, std::size_t networks);

struct NodePlan {
    core::NodeAddr addr;
    Position position;
    bool needs_ack = false;
    std::uint8_t spreading_factor = 12;
    bool reachable = true;  // some own gateway decodes it at SF12 with margin
    std::optional<std::size_t> flip_gateway;
};

/// Static data-rate assignment: lowest SF whose strongest own-network link
/// clears the sensitivity by `margin_db`.
std::uint8_t assign_spreading_factor(double best_rx_dbm, const phy::LinkModel& link, double margin_db, bool* reachable);

/// Balanced node-to-gateway assignment under reachability (minimises the sum
/// of squared loads, i.e. maximises the entropy of the load shares).
/// `reachable[n]` lists the gateways node n may use; nodes with none get nullopt.
std::vector<std::optional<std::size_t>> balance_assignment(const std::vector<std::vector<std::size_t>>& reachable,
                                                           std::size_t gateway_count);

/// Deterministic placement, ack flags and data rates for a scenario.
struct Deployment {
    std::vector<NodePlan> nodes;
    std::vector<GatewaySite> gateways;
};
Deployment plan_deployment(const ScenarioConfig& cfg);

struct NodeMetrics {
    core::NodeAddr addr;
    std::uint32_t network = 0;
    bool needs_ack = false;
    bool reachable = true;
    std::uint8_t spreading_factor = 7;
    std::uint64_t generated = 0;
    std::uint64_t unique_received = 0;
    std::uint64_t acked = 0;
    std::uint64_t retransmissions = 0;     // all retransmissions sent
    std::uint64_t acked_retransmissions = 0;  // retransmissions of messages that were eventually acked
    std::uint64_t transmissions = 0;

    std::uint64_t lost() const { return generated - unique_received; }
    std::optional<double> pdr() const;
};

struct RunMetrics {
    SystemKind system = SystemKind::LoRaWAN;
    std::size_t nodes = 0;
    std::size_t gateways = 0;
    std::size_t networks = 0;
    double load = 0.0;
    std::uint64_t seed = 0;
    int retx_limit = 0;

    std::uint64_t generated = 0;
    std::uint64_t unique_received = 0;
    std::uint64_t recovered = 0;  // unique messages that only arrived via a neighbour's rebroadcast
    std::uint64_t ack_required = 0;
    std::uint64_t acked = 0;
    std::optional<double> pdr;
    std::optional<double> min_node_pdr;  // over reachable ack-requiring nodes
    double no_retx = 0.0;                // retransmissions per ack-requiring message, acked or not
    double no_retx_acked = 0.0;          // retransmissions of acked messages per acked message
    double unique_per_node = 0.0;
    std::size_t unreachable_nodes = 0;

    std::uint64_t uplink_tx = 0;
    std::uint64_t rx1_acks = 0;
    std::uint64_t rx2_acks = 0;
    std::uint64_t dropped_acks = 0;
    std::uint64_t handovers = 0;
    std::uint64_t neighbour_downlinks = 0;
    std::uint64_t handover_requests_heard = 0;
    std::uint64_t handover_unanswerable = 0;
    std::uint64_t neighbour_acks = 0;  // acks nodes decoded from a neighbour downlink
    std::uint64_t g2g_messages = 0;  // all G2G frames on air
    std::uint64_t band0_g2g = 0;
    std::uint64_t band1_downlinks = 0;
    std::uint64_t g2g_starved = 0;
    std::uint64_t slot_declined = 0;
    std::uint64_t slot_blocked = 0;
    std::uint64_t ack_abandoned = 0;
    std::uint64_t missing_reports = 0;
    std::uint64_t malformed = 0;
    std::uint64_t wcs_overhead = 0;
    std::uint64_t duty_violations = 0;

    /// Band0 G2G plus Band1 downlinks for IRONWAN, Band1 downlinks otherwise.
    std::uint64_t overhead() const;

    std::vector<NodeMetrics> per_node;
};

struct RunResult {
    RunMetrics metrics;
    core::EventLog log;
};

/// Executes one scenario to completion. Throws std::invalid_argument on a bad config.
RunResult run(const ScenarioConfig& cfg);

/// Transmission records (event "tx") parsed back out of a JSONL log. A gateway's G2G
/// allocation is audited as its own transmitter, "g:<id>/g2g".
std::vector<phy::TxRecord> tx_records(const core::EventLog& log);

}  // namespace ironwan::netsim
