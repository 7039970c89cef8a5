#include <algorithm>
#include <iterator>
#include <set>

#include "doctest.h"
#include "ironwan/core/random.hpp"
#include "ironwan/gateway/cache.hpp"
#include "ironwan/gateway/g2g.hpp"
#include "ironwan/gateway/runtime.hpp"
#include "ironwan/phy/phy.hpp"

using namespace ironwan;
using namespace ironwan::gateway;
using core::FrameKind;
using core::SimTime;

namespace {

constexpr core::Micros kSec = core::kMicrosPerSecond;

const core::NetworkId kOwn{1};
const core::NetworkId kForeign{2};

core::Frame uplink(core::NodeAddr node, std::uint16_t counter, SimTime start, int sf = 7, std::uint8_t channel = 0) {
    core::Frame f;
    f.kind = FrameKind::Uplink;
    f.source = node;
    f.subject_node = node;
    f.counter = counter;
    f.payload_len = 20;
    f.radio.channel = channel;
    f.radio.spreading_factor = static_cast<std::uint8_t>(sf);
    f.needs_ack = true;
    f.tx_start = start;
    f.airtime = phy::compute_airtime(20, f.radio);
    f.payload = core::opaque_payload(node, counter, 20);
    return f;
}

core::Frame g2g_frame(const G2GMessage& m, core::GatewayId from, core::NodeAddr node, SimTime start) {
    core::Frame f;
    f.kind = kind_of(m);
    f.source = from;
    f.subject_node = node;
    f.payload = encode_g2g(m);
    f.payload_len = static_cast<std::uint8_t>(f.payload.size());
    f.radio.spreading_factor = 7;
    f.tx_start = start;
    f.airtime = phy::compute_airtime(f.payload.size(), f.radio);
    return f;
}

GatewayConfig overlay_config(std::uint32_t id, core::NetworkId network) {
    GatewayConfig c;
    c.id = core::GatewayId{id};
    c.network = network;
    c.overlay = true;
    c.interpred.training_duration = 0;
    c.seed = 1;
    return c;
}

/// Overlay gateway whose agent has already learned a silent spectrum.
GatewayRuntime trained_gateway(std::uint32_t id, core::NetworkId network, core::EventLog* log = nullptr,
                               GatewayConfig cfg = {}) {
    if (cfg.id.value == 0) cfg = overlay_config(id, network);
    GatewayRuntime gw(cfg, log);
    gw.agent().advance_to(core::slot_start(2000));
    return gw;
}

std::vector<core::Frame> of_kind(const std::vector<core::Frame>& frames, FrameKind kind) {
    std::vector<core::Frame> out;
    std::copy_if(frames.begin(), frames.end(), std::back_inserter(out), [&](const auto& f) { return f.kind == kind; });
    return out;
}

/// Steps the gateway's wakeups up to `until`.
void run_until(GatewayRuntime& gw, SimTime until) {
    for (int guard = 0; guard < 100'000; ++guard) {
        const auto next = gw.next_wakeup();
        if (!next || *next > until) return;
        gw.on_wakeup(*next);
    }
}

}  // namespace

TEST_CASE("cache keeps the latest uplink per node") {
    UplinkCache cache(300 * kSec);
    const core::NodeAddr n{5};
    const auto first = uplink(n, 7, SimTime{0});
    cache.store(first, SimTime{100'000});
    cache.store(uplink(n, 6, SimTime{0}), SimTime{200'000});  // older counter: ignored
    const auto* e = cache.find(n, SimTime{300'000});
    REQUIRE(e != nullptr);
    CHECK(e->counter == 7);
    CHECK(e->received_at == SimTime{100'000});
    // Windows open relative to the end of the uplink.
    CHECK(e->rx1 == first.tx_end() + kSec);
    CHECK(e->rx2 == first.tx_end() + 2 * kSec);
    cache.store(uplink(n, 8, SimTime{0}), SimTime{400'000});
    CHECK(cache.find(n, SimTime{400'000})->counter == 8);
    CHECK(cache.size() == 1);
    CHECK(cache.find(n, SimTime{400'000 + 300 * kSec}) != nullptr);
    CHECK(cache.find(n, SimTime{400'001 + 300 * kSec}) == nullptr);
}

TEST_CASE("cache size is bounded by nodes heard within the TTL") {
    UplinkCache cache(60 * kSec);
    core::Rng rng(3);
    std::vector<std::pair<std::uint32_t, std::int64_t>> heard;
    std::int64_t now = 0;
    for (int i = 0; i < 5000; ++i) {
        now += static_cast<std::int64_t>(rng.exponential(0.5) * kSec);
        const auto node = static_cast<std::uint32_t>(1 + rng.below(300));
        cache.store(uplink(core::NodeAddr{node}, static_cast<std::uint16_t>(i), SimTime{now}), SimTime{now});
        heard.push_back({node, now});
        cache.evict_expired(SimTime{now});
        std::set<std::uint32_t> recent;
        for (auto it = heard.rbegin(); it != heard.rend() && now - it->second <= 60 * kSec; ++it) recent.insert(it->first);
        CHECK(cache.size() <= recent.size());
    }
}

TEST_CASE("g2g codec round trips every kind") {
    core::Rng rng(9);
    for (int i = 0; i < 500; ++i) {
        const core::NodeAddr node{static_cast<std::uint32_t>(rng.next())};
        const auto counter = static_cast<std::uint16_t>(rng.next());
        const G2GMessage messages[] = {
            ReqUplink{node, counter},
            RebroadcastUplink{UplinkRecord::from_frame(uplink(node, counter, SimTime{static_cast<std::int64_t>(rng.below(1ULL << 40))},
                                                              7 + static_cast<int>(rng.below(6))))},
            ReqForwardDownlink{node, counter, SimTime{static_cast<std::int64_t>(rng.below(1ULL << 40))},
                               SimTime{static_cast<std::int64_t>(rng.below(1ULL << 40))},
                               core::opaque_payload(node, counter, rng.below(40))},
        };
        for (const auto& m : messages) {
            const auto bytes = encode_g2g(m);
            CHECK((bytes[0] & 0xE0) == kG2GTagBase);
            CHECK(decode_g2g(bytes) == m);
        }
    }
}

TEST_CASE("g2g decoder rejects bad input") {
    const auto bytes = encode_g2g(ReqUplink{core::NodeAddr{1}, 2});
    CHECK_THROWS_AS(decode_g2g(std::vector<std::uint8_t>{}), core::DecodeError);
    auto bad_tag = bytes;
    bad_tag[0] = 0x40;
    CHECK_THROWS_AS(decode_g2g(bad_tag), core::DecodeError);
    auto extra = bytes;
    extra.push_back(1);
    CHECK_THROWS_AS(decode_g2g(extra), core::DecodeError);
    CHECK_THROWS_AS(decode_g2g(std::span(bytes).first(bytes.size() - 1)), core::DecodeError);
}

TEST_CASE("uplink record keeps the payload bytes") {
    const auto f = uplink(core::NodeAddr{3}, 9, SimTime{12345}, 10, 2);
    const auto r = UplinkRecord::from_frame(f);
    CHECK(r.to_frame() == f);
}

TEST_CASE("uplink fan-out effects") {
    auto gw = trained_gateway(1, kOwn);
    const auto own = core::make_node_addr(kOwn, 1);
    const auto foreign = core::make_node_addr(kForeign, 1);
    const auto expected = std::vector<Effect>{Effect::ForwardToServer, Effect::CacheStore, Effect::RmipObserve,
                                              Effect::InterPredIngest};
    const SimTime t0 = core::slot_start(2000);
    auto f = uplink(own, 1, t0);
    CHECK(gw.on_receive(f, -90.0, f.tx_end()) == expected);
    auto g = uplink(foreign, 1, t0 + kSec);
    CHECK(gw.on_receive(g, -95.0, g.tx_end()) == expected);
    CHECK(gw.cache().size() == 2);
    const auto deliveries = gw.take_deliveries();
    REQUIRE(deliveries.size() == 2);
    CHECK(deliveries[1].uplink.subject_node == foreign);

    const auto req = g2g_frame(ReqUplink{foreign, 0}, core::GatewayId{9}, foreign, t0 + 2 * kSec);
    CHECK(gw.on_receive(req, -80.0, req.tx_end()) == std::vector<Effect>{Effect::G2GHandle});

    GatewayConfig plain;
    plain.id = core::GatewayId{2};
    plain.network = kOwn;
    GatewayRuntime lorawan(plain);
    CHECK(lorawan.on_receive(f, -90.0, f.tx_end()) ==
          std::vector<Effect>{Effect::ForwardToServer, Effect::CacheStore});
}

TEST_CASE("malformed g2g frames are dropped and counted") {
    auto gw = trained_gateway(1, kOwn);
    auto req = g2g_frame(ReqUplink{core::NodeAddr{1}, 0}, core::GatewayId{9}, core::NodeAddr{1}, core::slot_start(2000));
    req.payload.pop_back();
    const auto effects = gw.on_receive(req, -80.0, req.tx_end());
    CHECK(effects == std::vector<Effect>{Effect::G2GHandle, Effect::Malformed});
    CHECK(gw.counters().malformed == 1);
    CHECK(gw.take_transmissions().empty());
}

TEST_CASE("uplink request answered with the cached newer message, bytes untouched") {
    auto gw = trained_gateway(2, kOwn);
    const auto node = core::make_node_addr(kForeign, 4);
    const SimTime t0 = core::slot_start(2000);
    const auto up = uplink(node, 7, t0);
    gw.on_receive(up, -100.0, up.tx_end());
    gw.take_transmissions();

    const auto req = g2g_frame(ReqUplink{node, 6}, core::GatewayId{9}, node, t0 + 5 * kSec);
    gw.on_receive(req, -80.0, req.tx_end());
    run_until(gw, req.tx_end() + 2 * kSec);
    const auto sent = of_kind(gw.take_transmissions(), FrameKind::RebroadcastUplink);
    REQUIRE(sent.size() == 1);
    CHECK(sent[0].radio.band == core::Band::Band0);
    const auto decoded = std::get<RebroadcastUplink>(decode_g2g(sent[0].payload));
    CHECK(decoded.uplink.counter == 7);
    CHECK(decoded.uplink.payload == up.payload);
    CHECK(decoded.uplink.to_frame() == up);
    CHECK(gw.counters().cache_hits == 1);
}

TEST_CASE("uplink request with nothing newer or no entry stays silent") {
    auto gw = trained_gateway(2, kOwn);
    const auto node = core::make_node_addr(kForeign, 4);
    const SimTime t0 = core::slot_start(2000);
    const auto up = uplink(node, 6, t0);
    gw.on_receive(up, -100.0, up.tx_end());
    const auto same = g2g_frame(ReqUplink{node, 6}, core::GatewayId{9}, node, t0 + 5 * kSec);
    gw.on_receive(same, -80.0, same.tx_end());
    const auto other = core::make_node_addr(kForeign, 5);
    const auto unknown = g2g_frame(ReqUplink{other, 1}, core::GatewayId{9}, other, t0 + 6 * kSec);
    gw.on_receive(unknown, -80.0, unknown.tx_end());
    run_until(gw, t0 + 20 * kSec);
    CHECK(gw.take_transmissions().empty());
    CHECK(gw.counters().cache_misses == 2);
}

TEST_CASE("a missing uplink raises a request within F slots") {
    core::EventLog log;
    auto gw = trained_gateway(1, kOwn, &log);
    const auto node = core::make_node_addr(kOwn, 8);
    const std::int64_t base = core::slot_start(2000).us;
    std::uint16_t counter = 1;
    std::int64_t last_end = 0;
    for (int i = 0; i < 14; ++i) {
        const auto f = uplink(node, counter++, SimTime{base + i * 60 * kSec});
        gw.on_receive(f, -100.0, f.tx_end());
        run_until(gw, f.tx_end());
        last_end = f.tx_end().us;
    }
    REQUIRE(gw.rmip().find(node)->delta_t);
    gw.take_transmissions();
    // Next message never arrives.
    run_until(gw, SimTime{last_end + 62 * kSec});
    CHECK(gw.counters().missing_reports == 1);
    const auto reqs = of_kind(gw.take_transmissions(), FrameKind::ReqUplink);
    REQUIRE(reqs.size() == 1);
    const auto msg = std::get<ReqUplink>(decode_g2g(reqs[0].payload));
    CHECK(msg.node == node);
    CHECK(msg.last_counter == counter - 1);
    const auto due = SimTime{last_end + 61 * kSec};
    CHECK(reqs[0].tx_start > due);
    CHECK(core::slot_of(reqs[0].tx_start) - core::slot_of(due) <= 8 + 1);
    CHECK(reqs[0].radio.band == core::Band::Band0);
}

TEST_CASE("declined slots starve a request after the retry limit") {
    GatewayConfig cfg = overlay_config(3, kOwn);
    GatewayRuntime gw(cfg);  // empty Q table: every slot request declines
    const auto node = core::make_node_addr(kForeign, 2);
    const auto up = uplink(node, 5, SimTime{0});
    gw.on_receive(up, -100.0, up.tx_end());
    const auto req = g2g_frame(ReqUplink{node, 4}, core::GatewayId{9}, node, SimTime{up.tx_end().us});
    gw.on_receive(req, -80.0, SimTime{90'000});
    run_until(gw, SimTime{10 * kSec});
    CHECK(gw.counters().slot_declined == 10);
    CHECK(gw.counters().g2g_starved == 1);
    CHECK(gw.take_transmissions().empty());
    CHECK(gw.pending_jobs() == 0);
}

TEST_CASE("no G2G duty cycle left: deferred, never transmitted") {
    GatewayConfig cfg = overlay_config(4, kOwn);
    cfg.g2g_duty_cycle = 1e-7;  // 0.36 ms per hour, shorter than any frame
    auto gw = trained_gateway(4, kOwn, nullptr, cfg);
    const auto node = core::make_node_addr(kForeign, 2);
    const SimTime t0 = core::slot_start(2000);
    const auto up = uplink(node, 5, t0);
    gw.on_receive(up, -100.0, up.tx_end());
    const auto req = g2g_frame(ReqUplink{node, 4}, core::GatewayId{9}, node, t0 + kSec);
    gw.on_receive(req, -80.0, req.tx_end());
    run_until(gw, t0 + 10 * kSec);
    CHECK(gw.counters().slot_blocked >= 1);
    CHECK(of_kind(gw.take_transmissions(), FrameKind::RebroadcastUplink).empty());
}

TEST_CASE("downlink uses RX1, then RX2, then hands over") {
    auto gw = trained_gateway(5, kOwn);
    const auto node = core::make_node_addr(kOwn, 3);
    const std::int64_t base = core::slot_start(2000).us;
    DownlinkRequest req{node, 1, SimTime{base}, 0, 7};
    CHECK(gw.send_downlink(req, SimTime{base + 100'000}) == DownlinkOutcome::Rx1);

    // Exhaust both bands with SF12 acks.
    std::int64_t t = base + 10 * kSec;
    int rx1 = 0, rx2 = 0;
    DownlinkOutcome outcome = DownlinkOutcome::Rx1;
    for (int i = 0; i < 1000 && outcome != DownlinkOutcome::HandedOver; ++i, t += 3 * kSec) {
        outcome = gw.send_downlink({node, static_cast<std::uint16_t>(2 + i), SimTime{t}, 0, 12}, SimTime{t + 100'000});
        rx1 += outcome == DownlinkOutcome::Rx1;
        rx2 += outcome == DownlinkOutcome::Rx2;
    }
    REQUIRE(outcome == DownlinkOutcome::HandedOver);
    CHECK(rx1 > 0);
    CHECK(rx2 > rx1);
    run_until(gw, SimTime{t + 3 * kSec});
    const auto handovers = of_kind(gw.take_transmissions(), FrameKind::ReqForwardDownlink);
    REQUIRE(handovers.size() == 1);
    const auto m = std::get<ReqForwardDownlink>(decode_g2g(handovers[0].payload));
    CHECK(m.rx2 == SimTime{t - 3 * kSec + 2 * kSec});
    CHECK(handovers[0].tx_end() + core::kSlotLength <= m.rx2);

    // A request whose RX2 is about to open cannot be handed over in time.
    const auto late = t + 10 * kSec;
    CHECK(gw.send_downlink({node, 900, SimTime{late - 1'950'000}, 0, 12}, SimTime{late}) == DownlinkOutcome::HandedOver);
    const auto abandoned = gw.counters().ack_abandoned;
    CHECK(abandoned >= 1);
    CHECK(of_kind(gw.take_transmissions(), FrameKind::ReqForwardDownlink).empty());

    // Plain gateways just drop.
    GatewayConfig plain;
    plain.id = core::GatewayId{6};
    plain.network = kOwn;
    GatewayRuntime lorawan(plain);
    CHECK(lorawan.send_downlink(req, SimTime{base + 100'000}) == DownlinkOutcome::Rx1);
    CHECK(lorawan.send_downlink({node, 2, SimTime{base}, 0, 7}, SimTime{base + 2'500'000}) == DownlinkOutcome::Dropped);
}

TEST_CASE("neighbour answers a handover at the node's receive window") {
    const auto node = core::make_node_addr(kForeign, 7);
    const SimTime t0 = core::slot_start(2000);
    const auto up = uplink(node, 11, t0, 9, 1);
    const SimTime received = up.tx_end();

    SUBCASE("fresh cache entry") {
        auto a = trained_gateway(7, kOwn);
        auto b = trained_gateway(8, kOwn);
        a.on_receive(up, -100.0, received);
        b.on_receive(up, -101.0, received);
        a.take_transmissions();
        b.take_transmissions();
        const ReqForwardDownlink msg{node, 11, received + kSec, received + 2 * kSec, std::vector<std::uint8_t>(12, 0xaa)};
        const auto req = g2g_frame(msg, core::GatewayId{1}, node, received + 200'000);
        a.on_receive(req, -80.0, req.tx_end());
        b.on_receive(req, -82.0, req.tx_end());
        for (auto* gw : {&a, &b}) {
            const auto sent = of_kind(gw->take_transmissions(), FrameKind::NeighbourDownlink);
            REQUIRE(sent.size() == 1);
            CHECK(sent[0].tx_start == received + kSec);
            CHECK(sent[0].radio.channel == 1);
            CHECK(sent[0].radio.spreading_factor == 9);
            CHECK(sent[0].payload == msg.downlink);
        }
    }
    SUBCASE("RX1 already passed: RX2 on Band1") {
        auto a = trained_gateway(7, kOwn);
        a.on_receive(up, -100.0, received);
        a.take_transmissions();
        const ReqForwardDownlink msg{node, 11, received + kSec, received + 2 * kSec, {1, 2, 3}};
        const auto req = g2g_frame(msg, core::GatewayId{1}, node, received + 1'200'000);
        a.on_receive(req, -80.0, req.tx_end());
        const auto sent = of_kind(a.take_transmissions(), FrameKind::NeighbourDownlink);
        REQUIRE(sent.size() == 1);
        CHECK(sent[0].tx_start == received + 2 * kSec);
        CHECK(sent[0].radio.band == core::Band::Band1);
    }
    SUBCASE("stale cache entry") {
        auto a = trained_gateway(7, kOwn);
        a.on_receive(up, -100.0, received);
        a.take_transmissions();
        const ReqForwardDownlink msg{node, 11, received + kSec, received + 2 * kSec, {1}};
        const auto req = g2g_frame(msg, core::GatewayId{1}, node, received + 3 * kSec);
        a.on_receive(req, -80.0, req.tx_end());
        CHECK(a.take_transmissions().empty());
        CHECK(a.counters().handover_unanswerable == 1);
    }
}

TEST_CASE("neighbour downlinks always fall inside a receive window") {
    core::Rng rng(21);
    for (int trial = 0; trial < 300; ++trial) {
        auto gw = trained_gateway(9, kOwn);
        const auto node = core::make_node_addr(kForeign, static_cast<std::uint32_t>(1 + trial));
        const SimTime t0 = core::slot_start(2000) + static_cast<core::Micros>(rng.below(kSec));
        const auto up = uplink(node, 3, t0, 7 + static_cast<int>(rng.below(6)));
        const SimTime received = up.tx_end();
        gw.on_receive(up, -100.0, received);
        gw.take_transmissions();
        const auto delay = static_cast<core::Micros>(rng.uniform(0, 2.5 * kSec));
        const ReqForwardDownlink msg{node, 3, received + kSec, received + 2 * kSec, {9}};
        const auto req = g2g_frame(msg, core::GatewayId{1}, node, received + delay);
        gw.on_receive(req, -80.0, req.tx_start + delay / 10);
        for (const auto& f : gw.take_transmissions()) {
            if (f.kind != FrameKind::NeighbourDownlink) continue;
            const auto offset = f.tx_start - received;
            const bool in_rx1 = offset >= 900'000 && offset <= 1'100'000;
            const bool in_rx2 = offset >= 1'900'000 && offset <= 2'100'000;
            CHECK((in_rx1 || in_rx2));
        }
    }
}

TEST_CASE("rebroadcast of an own node's message reaches the server") {
    auto gw = trained_gateway(1, kOwn);
    const auto node = core::make_node_addr(kOwn, 2);
    const auto up = uplink(node, 9, core::slot_start(2000));
    const auto rb = g2g_frame(RebroadcastUplink{UplinkRecord::from_frame(up)}, core::GatewayId{5}, node, up.tx_end() + kSec);
    gw.on_receive(rb, -85.0, rb.tx_end());
    const auto d = gw.take_deliveries();
    REQUIRE(d.size() == 1);
    CHECK(d[0].recovered);
    CHECK(d[0].uplink == up);
}

TEST_CASE("gateway config validation") {
    GatewayConfig c;
    CHECK_NOTHROW(c.validate());
    c.g2g_duty_cycle = 0.02;
    CHECK_THROWS(c.validate());
    c = {};
    c.g2g_sf = 6;
    CHECK_THROWS(c.validate());
    c = {};
    c.rx2_delay = c.rx1_delay;
    CHECK_THROWS(c.validate());
}
