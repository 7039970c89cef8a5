#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ironwan::core {

/// Durations are plain signed microsecond counts.
using Micros = std::int64_t;

inline constexpr Micros kMicrosPerMilli = 1'000;
inline constexpr Micros kMicrosPerSecond = 1'000'000;
inline constexpr Micros kSlotLength = 100 * kMicrosPerMilli;

constexpr Micros seconds(double s) { return static_cast<Micros>(s * kMicrosPerSecond + (s >= 0 ? 0.5 : -0.5)); }
constexpr Micros millis(std::int64_t ms) { return ms * kMicrosPerMilli; }
constexpr double to_seconds(Micros us) { return static_cast<double>(us) / kMicrosPerSecond; }

/// Instant on the simulation clock, integer microseconds since start.
struct SimTime {
    std::int64_t us = 0;

    constexpr SimTime() = default;
    constexpr explicit SimTime(std::int64_t micros) : us(micros) {}

    static constexpr SimTime from_seconds(double s) { return SimTime{core::seconds(s)}; }
    constexpr double seconds() const { return to_seconds(us); }

    constexpr auto operator<=>(const SimTime&) const = default;

    constexpr SimTime operator+(Micros d) const { return SimTime{us + d}; }
    constexpr SimTime operator-(Micros d) const { return SimTime{us - d}; }
    constexpr Micros operator-(SimTime other) const { return us - other.us; }
    constexpr SimTime& operator+=(Micros d) {
        us += d;
        return *this;
    }
};

/// Index of the 100 ms slot containing `t`.
constexpr std::int64_t slot_of(SimTime t) {
    // floor division; negative times never occur but keep the maths honest
    return t.us >= 0 ? t.us / kSlotLength : -((-t.us + kSlotLength - 1) / kSlotLength);
}

constexpr SimTime slot_start(std::int64_t slot) { return SimTime{slot * kSlotLength}; }

template <typename Tag>
struct StrongId {
    std::uint32_t value = 0;

    constexpr StrongId() = default;
    constexpr explicit StrongId(std::uint32_t v) : value(v) {}
    constexpr auto operator<=>(const StrongId&) const = default;
};

struct NodeTag {};
struct GatewayTag {};
struct NetworkTag {};

using NodeAddr = StrongId<NodeTag>;
using GatewayId = StrongId<GatewayTag>;
using NetworkId = StrongId<NetworkTag>;

/// Node addresses carry their owner network in the top byte, like a DevAddr NwkID prefix.
constexpr NetworkId network_of(NodeAddr node) { return NetworkId{node.value >> 24}; }
constexpr NodeAddr make_node_addr(NetworkId network, std::uint32_t index) {
    return NodeAddr{(network.value << 24) | (index & 0x00ff'ffffu)};
}

enum class Band : std::uint8_t { Band0 = 0, Band1 = 1 };

struct RadioParams {
    std::uint8_t channel = 0;
    std::uint8_t spreading_factor = 7;
    std::uint32_t bandwidth_hz = 125'000;
    double tx_power_dbm = 14.0;
    Band band = Band::Band0;

    bool operator==(const RadioParams&) const = default;
};

enum class FrameKind : std::uint8_t {
    Uplink = 0,
    DownlinkAck = 1,
    ReqUplink = 2,
    RebroadcastUplink = 3,
    ReqForwardDownlink = 4,
    NeighbourDownlink = 5,
};

const char* to_string(FrameKind kind);
const char* to_string(Band band);

/// True for the four gateway-to-gateway kinds.
constexpr bool is_g2g(FrameKind k) {
    return k == FrameKind::ReqUplink || k == FrameKind::RebroadcastUplink ||
           k == FrameKind::ReqForwardDownlink || k == FrameKind::NeighbourDownlink;
}

/// Frames a node decodes as a downlink addressed to it.
constexpr bool is_downlink(FrameKind k) {
    return k == FrameKind::DownlinkAck || k == FrameKind::NeighbourDownlink;
}

using FrameSource = std::variant<NodeAddr, GatewayId>;

/// Any over-the-air transmission.
///
/// `payload` is either empty (opaque, only the length matters) or holds exactly
/// `payload_len` bytes.
struct Frame {
    FrameKind kind = FrameKind::Uplink;
    FrameSource source = NodeAddr{};
    NodeAddr subject_node{};
    std::uint16_t counter = 0;
    std::uint8_t payload_len = 0;
    RadioParams radio{};
    bool needs_ack = false;
    SimTime tx_start{};
    Micros airtime = 0;
    std::vector<std::uint8_t> payload;

    SimTime tx_end() const { return tx_start + airtime; }
    bool operator==(const Frame&) const = default;
};

/// Modular distance `to - from` on the 16-bit counter ring.
constexpr std::uint16_t counter_gap(std::uint16_t from, std::uint16_t to) {
    return static_cast<std::uint16_t>(to - from);
}

/// `candidate` is newer than `reference` on the wrapping counter ring
/// (forward distance in 1..32767).
constexpr bool counter_newer(std::uint16_t candidate, std::uint16_t reference) {
    const auto gap = counter_gap(reference, candidate);
    return gap != 0 && gap < 0x8000;
}

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Big-endian binary form, lossless.
std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(std::span<const std::uint8_t> bytes);

/// One-line comma-separated log form; fields in declaration order, radio flattened.
std::string to_text(const Frame& frame);
Frame parse_text(const std::string& line);

/// Stateless pseudo-ciphertext for a node message; stands in for an encrypted
/// LoRaWAN payload so byte-exact relaying can be checked.
std::vector<std::uint8_t> opaque_payload(NodeAddr node, std::uint16_t counter, std::size_t len);

}  // namespace ironwan::core

template <typename Tag>
struct std::hash<ironwan::core::StrongId<Tag>> {
    std::size_t operator()(const ironwan::core::StrongId<Tag>& id) const noexcept {
        return std::hash<std::uint32_t>{}(id.value);
    }
};
