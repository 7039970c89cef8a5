#include "ironwan/phy/phy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace ironwan::phy {

core::Micros compute_airtime(std::size_t payload_len, const core::RadioParams& radio) {
    const int sf = radio.spreading_factor;
    if (sf < 7 || sf > 12) throw std::invalid_argument("spreading factor must be in 7..12");
    if (payload_len > 255) throw std::invalid_argument("payload longer than 255 bytes");
    if (radio.bandwidth_hz == 0) throw std::invalid_argument("zero bandwidth");

    constexpr int kPreambleSymbols = 8;
    constexpr int kCodingRate = 1;  // 4/5
    constexpr int kCrc = 1;
    constexpr int kImplicitHeader = 0;
    const int low_dr = (sf >= 11 && radio.bandwidth_hz == 125'000) ? 1 : 0;

    const long numerator = 8L * static_cast<long>(payload_len) - 4L * sf + 28 + 16 * kCrc - 20 * kImplicitHeader;
    const long denominator = 4L * (sf - 2 * low_dr);
    long blocks = 0;
    if (numerator > 0) blocks = (numerator + denominator - 1) / denominator;
    const long payload_symbols = 8 + blocks * (kCodingRate + 4);

    // Work in quarter symbols so the 4.25-symbol sync word stays integral.
    const long quarter_symbols = 4L * (kPreambleSymbols + payload_symbols) + 17;
    const long double symbol_us = std::ldexp(1.0L, sf) * 1.0e6L / radio.bandwidth_hz;
    return static_cast<core::Micros>(std::llround(quarter_symbols * symbol_us / 4.0L));
}

double LinkModel::sensitivity(int spreading_factor) const {
    if (spreading_factor < 7 || spreading_factor > 12) throw std::invalid_argument("spreading factor must be in 7..12");
    return sf_sensitivity_dbm[static_cast<std::size_t>(spreading_factor - 7)];
}

void LinkModel::validate() const {
    if (!(path_loss_exponent > 0.0)) throw std::invalid_argument("path_loss_exponent must be positive");
    if (!(capture_threshold_db >= 0.0)) throw std::invalid_argument("capture_threshold_db must be non-negative");
    for (std::size_t i = 1; i < sf_sensitivity_dbm.size(); ++i) {
        if (!(sf_sensitivity_dbm[i] < sf_sensitivity_dbm[i - 1])) {
            throw std::invalid_argument("sensitivity must strictly decrease with SF");
        }
    }
}

double received_power(double tx_power_dbm, double distance_m, const LinkModel& model) {
    if (!(distance_m > 0.0)) throw std::invalid_argument("distance must be positive");
    return tx_power_dbm - model.reference_loss_db - 10.0 * model.path_loss_exponent * std::log10(distance_m);
}

std::vector<std::size_t> resolve_collisions(std::span<const Arrival> overlapping, const LinkModel& model) {
    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < overlapping.size(); ++i) {
        const auto& radio = overlapping[i].frame->radio;
        groups[{radio.channel, radio.spreading_factor}].push_back(i);
    }

    std::vector<std::size_t> decodable;
    for (const auto& [key, members] : groups) {
        std::size_t best = members.front();
        for (auto idx : members) {
            if (overlapping[idx].rx_power_dbm > overlapping[best].rx_power_dbm) best = idx;
        }
        const double best_power = overlapping[best].rx_power_dbm;
        if (best_power < model.sensitivity(key.second)) continue;
        const bool captured = std::all_of(members.begin(), members.end(), [&](std::size_t idx) {
            return idx == best || best_power - overlapping[idx].rx_power_dbm >= model.capture_threshold_db;
        });
        if (captured) decodable.push_back(best);
    }
    std::sort(decodable.begin(), decodable.end());
    return decodable;
}

}  // namespace ironwan::phy
