#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ironwan/core/types.hpp"

namespace ironwan::gateway {

/// Tag byte: LoRaWAN's proprietary MType (0b111) in the top bits, frame kind below.
inline constexpr std::uint8_t kG2GTagBase = 0xE0;

struct ReqUplink {
    core::NodeAddr node;
    std::uint16_t last_counter = 0;
    bool operator==(const ReqUplink&) const = default;
};

/// An uplink as received, payload untouched.
struct UplinkRecord {
    core::NodeAddr node;
    std::uint16_t counter = 0;
    bool needs_ack = false;
    std::uint8_t channel = 0;
    std::uint8_t spreading_factor = 7;
    core::SimTime tx_start{};
    core::Micros airtime = 0;
    std::vector<std::uint8_t> payload;

    static UplinkRecord from_frame(const core::Frame& uplink);
    /// Rebuilds the original uplink frame (source = node, default power and bandwidth).
    core::Frame to_frame() const;
    bool operator==(const UplinkRecord&) const = default;
};

struct RebroadcastUplink {
    UplinkRecord uplink;
    bool operator==(const RebroadcastUplink&) const = default;
};

struct ReqForwardDownlink {
    core::NodeAddr target;
    std::uint16_t counter = 0;
    core::SimTime rx1{};
    core::SimTime rx2{};
    std::vector<std::uint8_t> downlink;  // server-built downlink payload, opaque to neighbours
    bool operator==(const ReqForwardDownlink&) const = default;
};

using G2GMessage = std::variant<ReqUplink, RebroadcastUplink, ReqForwardDownlink>;

core::FrameKind kind_of(const G2GMessage& message);

/// Wire form: tag byte, then big-endian kind-specific fields.
std::vector<std::uint8_t> encode_g2g(const G2GMessage& message);
/// Throws core::DecodeError on unknown tags, truncation or trailing bytes.
G2GMessage decode_g2g(std::span<const std::uint8_t> bytes);

}  // namespace ironwan::gateway
