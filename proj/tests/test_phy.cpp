#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ironwan/core/random.hpp"
#include "ironwan/phy/duty_cycle.hpp"
#include "ironwan/phy/phy.hpp"

using namespace ironwan;
using core::Band;
using core::SimTime;

namespace {

// Semtech time-on-air formula written out independently: 8-symbol preamble,
// explicit header, CRC on, CR 4/5, low data rate optimisation for SF11/12 at 125 kHz.
double oracle_airtime_us(int payload, int sf, double bw = 125'000.0) {
    const double t_sym = std::pow(2.0, sf) / bw * 1e6;
    const int de = (sf >= 11 && bw == 125'000.0) ? 1 : 0;
    const int cr = 1;
    const double num = 8.0 * payload - 4.0 * sf + 28.0 + 16.0;
    const double symbols = 8.0 + std::max(std::ceil(num / (4.0 * (sf - 2.0 * de))) * (cr + 4), 0.0);
    return (8 + 4.25) * t_sym + symbols * t_sym;
}

core::RadioParams radio(int sf, core::Band band = Band::Band0, std::uint8_t channel = 0) {
    core::RadioParams r;
    r.spreading_factor = static_cast<std::uint8_t>(sf);
    r.band = band;
    r.channel = channel;
    return r;
}

core::Frame frame_on(std::uint8_t channel, int sf) {
    core::Frame f;
    f.radio = radio(sf, Band::Band0, channel);
    f.airtime = 1000;
    return f;
}

}  // namespace

TEST_CASE("airtime pinned values") {
    CHECK(phy::compute_airtime(10, radio(7)) == 41'216);
    CHECK(oracle_airtime_us(10, 7) == doctest::Approx(41'216.0));
}

TEST_CASE("airtime matches the independent formula for every SF and length") {
    for (int sf = 7; sf <= 12; ++sf) {
        for (int len = 0; len <= 255; ++len) {
            const double expected = oracle_airtime_us(len, sf);
            CHECK(std::llabs(phy::compute_airtime(static_cast<std::size_t>(len), radio(sf)) -
                             std::llround(expected)) <= 1);
        }
    }
}

TEST_CASE("airtime bounds and scaling") {
    const auto preamble_sf7 = static_cast<core::Micros>(12.25 * 1024);
    CHECK(phy::compute_airtime(0, radio(7)) > preamble_sf7);
    CHECK(phy::compute_airtime(10, radio(12)) > 16 * phy::compute_airtime(10, radio(7)));
    CHECK_THROWS_AS(phy::compute_airtime(10, radio(6)), std::invalid_argument);
    CHECK_THROWS_AS(phy::compute_airtime(10, radio(13)), std::invalid_argument);
    CHECK_THROWS_AS(phy::compute_airtime(256, radio(7)), std::invalid_argument);
}

TEST_CASE("airtime is non-decreasing in payload and strictly grows across symbol steps") {
    for (int sf = 7; sf <= 12; ++sf) {
        for (int len = 0; len < 255; ++len) {
            CHECK(phy::compute_airtime(len + 1, radio(sf)) >= phy::compute_airtime(len, radio(sf)));
        }
        CHECK(phy::compute_airtime(255, radio(sf)) > phy::compute_airtime(0, radio(sf)));
    }
}

TEST_CASE("received power examples") {
    phy::LinkModel m;
    m.path_loss_exponent = 2.7;
    m.reference_loss_db = 40.0;
    CHECK(phy::received_power(14.0, 1.0, m) == doctest::Approx(-26.0));
    CHECK(phy::received_power(14.0, 10.0, m) == doctest::Approx(-53.0));
    CHECK(phy::received_power(14.0, 100.0, m) == doctest::Approx(-80.0));
    CHECK_THROWS_AS(phy::received_power(14.0, 0.0, m), std::invalid_argument);
}

TEST_CASE("sensitivity falls with SF") {
    phy::LinkModel m;
    for (int sf = 8; sf <= 12; ++sf) CHECK(m.sensitivity(sf) < m.sensitivity(sf - 1));
    m.sf_sensitivity_dbm[3] = m.sf_sensitivity_dbm[2] + 1.0;
    CHECK_THROWS(m.validate());
}

TEST_CASE("collision examples") {
    phy::LinkModel m;
    const auto a = frame_on(0, 7);
    const auto b = frame_on(0, 7);
    {
        const phy::Arrival arr[] = {{&a, -60.0}, {&b, -70.0}};
        CHECK(phy::resolve_collisions(arr, m) == std::vector<std::size_t>{0});
    }
    {
        const phy::Arrival arr[] = {{&a, -60.0}, {&b, -58.0}};
        CHECK(phy::resolve_collisions(arr, m).empty());
    }
    {
        const auto c = frame_on(0, 9);
        const phy::Arrival arr[] = {{&a, -80.0}, {&c, -80.0}};
        CHECK(phy::resolve_collisions(arr, m) == std::vector<std::size_t>{0, 1});
    }
    {
        const auto d = frame_on(1, 7);
        const phy::Arrival arr[] = {{&a, -80.0}, {&d, -80.0}};
        CHECK(phy::resolve_collisions(arr, m).size() == 2);
    }
    {
        // Below sensitivity: never decoded, still interferes.
        const phy::Arrival arr[] = {{&a, -140.0}};
        CHECK(phy::resolve_collisions(arr, m).empty());
        const phy::Arrival weak_strong[] = {{&a, -119.0}, {&b, -124.0}};
        CHECK(phy::resolve_collisions(weak_strong, m).empty());
    }
    {
        // Exactly the capture threshold is enough.
        const phy::Arrival arr[] = {{&a, -64.0}, {&b, -70.0}};
        CHECK(phy::resolve_collisions(arr, m) == std::vector<std::size_t>{0});
    }
}

TEST_CASE("collision resolution is deterministic and order independent") {
    phy::LinkModel m;
    core::Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<core::Frame> frames;
        const int n = 1 + static_cast<int>(rng.below(6));
        for (int i = 0; i < n; ++i) frames.push_back(frame_on(static_cast<std::uint8_t>(rng.below(2)), 7 + int(rng.below(2))));
        std::vector<phy::Arrival> arr;
        for (auto& f : frames) arr.push_back({&f, rng.uniform(-130.0, -60.0)});
        auto decoded = [&](const std::vector<phy::Arrival>& in) {
            std::vector<const core::Frame*> out;
            for (auto i : phy::resolve_collisions(in, m)) out.push_back(in[i].frame);
            std::sort(out.begin(), out.end());
            return out;
        };
        const auto first = decoded(arr);
        CHECK(first == decoded(arr));
        auto reversed = arr;
        std::reverse(reversed.begin(), reversed.end());
        CHECK(first == decoded(reversed));
        // At most one survivor per (channel, SF) group.
        for (const auto* f : first) {
            int same = 0;
            for (const auto* g : first) {
                same += g->radio.channel == f->radio.channel && g->radio.spreading_factor == f->radio.spreading_factor;
            }
            CHECK(same == 1);
        }
    }
}

TEST_CASE("overlap is half open") {
    core::Frame a, b;
    a.tx_start = SimTime{0};
    a.airtime = 10;
    b.tx_start = SimTime{10};
    b.airtime = 5;
    CHECK_FALSE(phy::overlaps(a, b));
    b.tx_start = SimTime{9};
    CHECK(phy::overlaps(a, b));
}

TEST_CASE("duty cycle examples") {
    phy::DutyCycleTracker band1(Band::Band1);
    CHECK(band1.try_reserve(core::kMicrosPerSecond, SimTime{0}));

    phy::DutyCycleTracker band0(Band::Band0);
    CHECK(band0.capacity() == 36 * core::kMicrosPerSecond);
    CHECK(band0.try_reserve(36 * core::kMicrosPerSecond, SimTime{0}));
    CHECK_FALSE(band0.try_reserve(1, SimTime{1}));
    CHECK_FALSE(band0.try_reserve(1, SimTime{1800 * core::kMicrosPerSecond}));
    CHECK(band0.try_reserve(core::kMicrosPerSecond, SimTime{7200 * core::kMicrosPerSecond}));
    CHECK_THROWS_AS(band0.try_reserve(0, SimTime{0}), std::invalid_argument);
}

TEST_CASE("duty cycle next_allowed is the earliest acceptable time") {
    phy::DutyCycleTracker t(Band::Band0);
    CHECK(t.try_reserve(20 * core::kMicrosPerSecond, SimTime{0}));
    CHECK(t.try_reserve(16 * core::kMicrosPerSecond, SimTime{600 * core::kMicrosPerSecond}));
    const auto when = t.next_allowed(5 * core::kMicrosPerSecond, SimTime{700 * core::kMicrosPerSecond});
    CHECK(t.can_reserve(5 * core::kMicrosPerSecond, when));
    CHECK_FALSE(t.can_reserve(5 * core::kMicrosPerSecond, when - 1));
}

TEST_CASE("duty cycle property: accepted reservations never violate the audit") {
    core::Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        const Band band = trial % 2 ? Band::Band1 : Band::Band0;
        phy::DutyCycleTracker t(band);
        std::vector<phy::TxRecord> accepted;
        std::int64_t now = 0;
        for (int i = 0; i < 3000; ++i) {
            now += static_cast<std::int64_t>(rng.exponential(4.0) * core::kMicrosPerSecond);
            // Occasionally book slightly out of order, like an RX2 reserved before a later RX1.
            const std::int64_t at = now + (rng.bernoulli(0.2) ? core::kMicrosPerSecond : 0);
            const auto airtime = static_cast<core::Micros>(rng.uniform(30'000, 2'500'000));
            if (t.try_reserve(airtime, SimTime{at})) accepted.push_back({"x", band, SimTime{at}, airtime});
        }
        CHECK(!accepted.empty());
        CHECK(phy::audit_duty_cycle(accepted).empty());
    }
}

TEST_CASE("audit flags an over-budget window") {
    std::vector<phy::TxRecord> recs = {
        {"n:1", Band::Band0, SimTime{0}, 30 * core::kMicrosPerSecond},
        {"n:1", Band::Band0, SimTime{10 * core::kMicrosPerSecond}, 7 * core::kMicrosPerSecond},
        {"n:2", Band::Band0, SimTime{0}, 30 * core::kMicrosPerSecond},
    };
    const auto v = phy::audit_duty_cycle(recs);
    REQUIRE(v.size() == 1);
    CHECK(v[0].transmitter == "n:1");
    CHECK(v[0].used == 37 * core::kMicrosPerSecond);
    // Same airtime spread over two hours is fine.
    recs[1].start = SimTime{3600 * core::kMicrosPerSecond};
    CHECK(phy::audit_duty_cycle(recs).empty());
}
