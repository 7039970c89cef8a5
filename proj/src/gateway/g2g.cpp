#include "ironwan/gateway/g2g.hpp"

#include "ironwan/core/bytes.hpp"

namespace ironwan::gateway {

UplinkRecord UplinkRecord::from_frame(const core::Frame& uplink) {
    UplinkRecord r;
    r.node = uplink.subject_node;
    r.counter = uplink.counter;
    r.needs_ack = uplink.needs_ack;
    r.channel = uplink.radio.channel;
    r.spreading_factor = uplink.radio.spreading_factor;
    r.tx_start = uplink.tx_start;
    r.airtime = uplink.airtime;
    r.payload = uplink.payload;
    return r;
}

core::Frame UplinkRecord::to_frame() const {
    core::Frame f;
    f.kind = core::FrameKind::Uplink;
    f.source = node;
    f.subject_node = node;
    f.counter = counter;
    f.payload_len = static_cast<std::uint8_t>(payload.size());
    f.radio.channel = channel;
    f.radio.spreading_factor = spreading_factor;
    f.needs_ack = needs_ack;
    f.tx_start = tx_start;
    f.airtime = airtime;
    f.payload = payload;
    return f;
}

core::FrameKind kind_of(const G2GMessage& message) {
    switch (message.index()) {
        case 0: return core::FrameKind::ReqUplink;
        case 1: return core::FrameKind::RebroadcastUplink;
        default: return core::FrameKind::ReqForwardDownlink;
    }
}

namespace {

void put_bytes(core::ByteWriter& w, const std::vector<std::uint8_t>& b) {
    if (b.size() > 255) throw std::invalid_argument("g2g byte field longer than 255");
    w.u8(static_cast<std::uint8_t>(b.size()));
    w.bytes(b);
}

std::vector<std::uint8_t> get_bytes(core::ByteReader& r) { return r.bytes(r.u8()); }

}  // namespace

std::vector<std::uint8_t> encode_g2g(const G2GMessage& message) {
    core::ByteWriter w(core::Endian::Big);
    w.u8(static_cast<std::uint8_t>(kG2GTagBase | static_cast<std::uint8_t>(kind_of(message))));
    if (const auto* req = std::get_if<ReqUplink>(&message)) {
        w.u32(req->node.value);
        w.u16(req->last_counter);
    } else if (const auto* rb = std::get_if<RebroadcastUplink>(&message)) {
        const auto& u = rb->uplink;
        w.u32(u.node.value);
        w.u16(u.counter);
        w.u8(u.needs_ack ? 1 : 0);
        w.u8(u.channel);
        w.u8(u.spreading_factor);
        w.i64(u.tx_start.us);
        w.u32(static_cast<std::uint32_t>(u.airtime));
        put_bytes(w, u.payload);
    } else {
        const auto& fwd = std::get<ReqForwardDownlink>(message);
        w.u32(fwd.target.value);
        w.u16(fwd.counter);
        w.i64(fwd.rx1.us);
        w.i64(fwd.rx2.us);
        put_bytes(w, fwd.downlink);
    }
    return w.take();
}

G2GMessage decode_g2g(std::span<const std::uint8_t> bytes) {
    core::ByteReader r(bytes, core::Endian::Big);
    const auto tag = r.u8();
    if ((tag & 0xE0) != kG2GTagBase) throw core::DecodeError("not a g2g frame");
    G2GMessage out;
    switch (static_cast<core::FrameKind>(tag & 0x1F)) {
        case core::FrameKind::ReqUplink: {
            ReqUplink req;
            req.node = core::NodeAddr{r.u32()};
            req.last_counter = r.u16();
            out = req;
            break;
        }
        case core::FrameKind::RebroadcastUplink: {
            UplinkRecord u;
            u.node = core::NodeAddr{r.u32()};
            u.counter = r.u16();
            const auto ack = r.u8();
            if (ack > 1) throw core::DecodeError("bad ack flag");
            u.needs_ack = ack == 1;
            u.channel = r.u8();
            u.spreading_factor = r.u8();
            if (u.spreading_factor < 7 || u.spreading_factor > 12) throw core::DecodeError("bad spreading factor");
            u.tx_start = core::SimTime{r.i64()};
            u.airtime = r.u32();
            u.payload = get_bytes(r);
            out = RebroadcastUplink{std::move(u)};
            break;
        }
        case core::FrameKind::ReqForwardDownlink: {
            ReqForwardDownlink fwd;
            fwd.target = core::NodeAddr{r.u32()};
            fwd.counter = r.u16();
            fwd.rx1 = core::SimTime{r.i64()};
            fwd.rx2 = core::SimTime{r.i64()};
            fwd.downlink = get_bytes(r);
            out = std::move(fwd);
            break;
        }
        default: throw core::DecodeError("unknown g2g kind");
    }
    if (!r.done()) throw core::DecodeError("trailing bytes in g2g frame");
    return out;
}

}  // namespace ironwan::gateway
