#include "ironwan/core/types.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "ironwan/core/bytes.hpp"
#include "ironwan/core/random.hpp"

namespace ironwan::core {

const char* to_string(FrameKind kind) {
    switch (kind) {
        case FrameKind::Uplink: return "Uplink";
        case FrameKind::DownlinkAck: return "DownlinkAck";
        case FrameKind::ReqUplink: return "ReqUplink";
        case FrameKind::RebroadcastUplink: return "RebroadcastUplink";
        case FrameKind::ReqForwardDownlink: return "ReqForwardDownlink";
        case FrameKind::NeighbourDownlink: return "NeighbourDownlink";
    }
    return "?";
}

const char* to_string(Band band) { return band == Band::Band0 ? "Band0" : "Band1"; }

namespace {

FrameKind kind_from_byte(std::uint8_t b) {
    if (b > static_cast<std::uint8_t>(FrameKind::NeighbourDownlink)) throw DecodeError("unknown frame kind");
    return static_cast<FrameKind>(b);
}

Band band_from_byte(std::uint8_t b) {
    if (b > 1) throw DecodeError("unknown band");
    return static_cast<Band>(b);
}

FrameKind kind_from_name(const std::string& s) {
    for (std::uint8_t b = 0; b <= static_cast<std::uint8_t>(FrameKind::NeighbourDownlink); ++b) {
        if (s == to_string(static_cast<FrameKind>(b))) return static_cast<FrameKind>(b);
    }
    throw DecodeError("unknown frame kind: " + s);
}

template <typename T>
T parse_number(const std::string& s) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw DecodeError("bad number: " + s);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& f) {
    if (!f.payload.empty() && f.payload.size() != f.payload_len) {
        throw std::invalid_argument("payload size does not match payload_len");
    }
    ByteWriter w;
    w.u8(static_cast<std::uint8_t>(f.kind));
    w.u8(static_cast<std::uint8_t>(f.source.index()));
    w.u32(std::visit([](auto id) { return id.value; }, f.source));
    w.u32(f.subject_node.value);
    w.u16(f.counter);
    w.u8(f.payload_len);
    w.u8(f.radio.channel);
    w.u8(f.radio.spreading_factor);
    w.u32(f.radio.bandwidth_hz);
    w.f64(f.radio.tx_power_dbm);
    w.u8(static_cast<std::uint8_t>(f.radio.band));
    w.u8(f.needs_ack ? 1 : 0);
    w.i64(f.tx_start.us);
    w.i64(f.airtime);
    w.u8(f.payload.empty() ? 0 : 1);
    w.bytes(f.payload);
    return w.take();
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    Frame f;
    f.kind = kind_from_byte(r.u8());
    const auto source_tag = r.u8();
    const auto source_id = r.u32();
    if (source_tag == 0) {
        f.source = NodeAddr{source_id};
    } else if (source_tag == 1) {
        f.source = GatewayId{source_id};
    } else {
        throw DecodeError("unknown source tag");
    }
    f.subject_node = NodeAddr{r.u32()};
    f.counter = r.u16();
    f.payload_len = r.u8();
    f.radio.channel = r.u8();
    f.radio.spreading_factor = r.u8();
    f.radio.bandwidth_hz = r.u32();
    f.radio.tx_power_dbm = r.f64();
    f.radio.band = band_from_byte(r.u8());
    const auto ack = r.u8();
    if (ack > 1) throw DecodeError("bad needs_ack flag");
    f.needs_ack = ack == 1;
    f.tx_start = SimTime{r.i64()};
    f.airtime = r.i64();
    const auto has_payload = r.u8();
    if (has_payload > 1) throw DecodeError("bad payload flag");
    if (has_payload == 1) f.payload = r.bytes(f.payload_len);
    if (!r.done()) throw DecodeError("trailing bytes after frame");
    return f;
}

std::string to_text(const Frame& f) {
    std::ostringstream out;
    out << to_string(f.kind) << ',';
    if (std::holds_alternative<NodeAddr>(f.source)) {
        out << "n:" << std::get<NodeAddr>(f.source).value;
    } else {
        out << "g:" << std::get<GatewayId>(f.source).value;
    }
    char power[32];
    // %a keeps the double exact
    std::snprintf(power, sizeof power, "%a", f.radio.tx_power_dbm);
    out << ',' << f.subject_node.value << ',' << f.counter << ',' << static_cast<int>(f.payload_len) << ','
        << static_cast<int>(f.radio.channel) << ',' << static_cast<int>(f.radio.spreading_factor) << ','
        << f.radio.bandwidth_hz << ',' << power << ',' << to_string(f.radio.band) << ','
        << (f.needs_ack ? 1 : 0) << ',' << f.tx_start.us << ',' << f.airtime;
    return out.str();
}

Frame parse_text(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    if (fields.size() != 13) throw DecodeError("expected 13 fields, got " + std::to_string(fields.size()));

    Frame f;
    f.kind = kind_from_name(fields[0]);
    const auto& src = fields[1];
    if (src.size() < 3 || src[1] != ':') throw DecodeError("bad source: " + src);
    const auto id = parse_number<std::uint32_t>(src.substr(2));
    if (src[0] == 'n') {
        f.source = NodeAddr{id};
    } else if (src[0] == 'g') {
        f.source = GatewayId{id};
    } else {
        throw DecodeError("bad source: " + src);
    }
    f.subject_node = NodeAddr{parse_number<std::uint32_t>(fields[2])};
    f.counter = parse_number<std::uint16_t>(fields[3]);
    const auto len = parse_number<unsigned>(fields[4]);
    if (len > 255) throw DecodeError("payload_len out of range");
    f.payload_len = static_cast<std::uint8_t>(len);
    f.radio.channel = static_cast<std::uint8_t>(parse_number<unsigned>(fields[5]));
    f.radio.spreading_factor = static_cast<std::uint8_t>(parse_number<unsigned>(fields[6]));
    f.radio.bandwidth_hz = parse_number<std::uint32_t>(fields[7]);
    f.radio.tx_power_dbm = std::strtod(fields[8].c_str(), nullptr);
    if (fields[9] == "Band0") {
        f.radio.band = Band::Band0;
    } else if (fields[9] == "Band1") {
        f.radio.band = Band::Band1;
    } else {
        throw DecodeError("bad band: " + fields[9]);
    }
    f.needs_ack = parse_number<int>(fields[10]) != 0;
    f.tx_start = SimTime{parse_number<std::int64_t>(fields[11])};
    f.airtime = parse_number<std::int64_t>(fields[12]);
    return f;
}

std::vector<std::uint8_t> opaque_payload(NodeAddr node, std::uint16_t counter, std::size_t len) {
    std::vector<std::uint8_t> out(len);
    std::uint64_t state = mix_seed(node.value, counter);
    for (std::size_t i = 0; i < len; ++i) {
        if (i % 8 == 0) state = mix_seed(state, i);
        out[i] = static_cast<std::uint8_t>(state >> (8 * (i % 8)));
    }
    return out;
}

}  // namespace ironwan::core
