#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ironwan/core/types.hpp"

namespace ironwan::phy {

/// LoRa time-on-air: 8-symbol preamble, explicit header, CRC on, CR 4/5,
/// low-data-rate optimisation for SF11/SF12 at 125 kHz.
/// Throws std::invalid_argument for SF outside 7..12 or payload over 255 bytes.
core::Micros compute_airtime(std::size_t payload_len, const core::RadioParams& radio);

/// Deterministic log-distance link budget plus the receiver thresholds.
struct LinkModel {
    double path_loss_exponent = 3.3;
    double reference_loss_db = 40.0;  // at 1 m
    double noise_floor_dbm = -117.0;
    /// SX1276 sensitivities at 125 kHz, SF7..SF12.
    std::array<double, 6> sf_sensitivity_dbm{-123.0, -126.0, -129.0, -132.0, -134.5, -137.0};
    double capture_threshold_db = 6.0;

    double sensitivity(int spreading_factor) const;
    void validate() const;
};

/// tx_power - reference_loss - 10 * exponent * log10(distance).
/// Throws std::invalid_argument for distance <= 0.
double received_power(double tx_power_dbm, double distance_m, const LinkModel& model);

/// One frame as seen by one receiver.
struct Arrival {
    const core::Frame* frame = nullptr;
    double rx_power_dbm = 0.0;
};

/// Indices (into `overlapping`) of the frames the receiver can decode.
///
/// Different channels never collide and different SFs on the same channel are
/// orthogonal. Within one (channel, SF) group the strongest frame survives only
/// if it beats every other member by the capture threshold. Frames below the SF
/// sensitivity are never decoded but still count as interferers.
std::vector<std::size_t> resolve_collisions(std::span<const Arrival> overlapping, const LinkModel& model);

/// True when two transmissions overlap in time (half-open intervals).
inline bool overlaps(const core::Frame& a, const core::Frame& b) {
    return a.tx_start < b.tx_end() && b.tx_start < a.tx_end();
}

}  // namespace ironwan::phy
