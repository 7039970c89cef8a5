#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "ironwan/core/types.hpp"

namespace ironwan::core {

enum class Endian { Big, Little };

/// Append-only byte sink with fixed endianness.
class ByteWriter {
public:
    explicit ByteWriter(Endian endian = Endian::Big) : endian_(endian) {}

    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    const std::vector<std::uint8_t>& data() const { return buf_; }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int width) {
        for (int i = 0; i < width; ++i) {
            const int shift = endian_ == Endian::Big ? 8 * (width - 1 - i) : 8 * i;
            buf_.push_back(static_cast<std::uint8_t>(v >> shift));
        }
    }

    Endian endian_;
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; throws DecodeError on truncation.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data, Endian endian = Endian::Big)
        : data_(data), endian_(endian) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> out(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw DecodeError("truncated input");
    }

    std::uint64_t get(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            const std::uint64_t b = data_[pos_ + i];
            const int shift = endian_ == Endian::Big ? 8 * (width - 1 - i) : 8 * i;
            v |= b << shift;
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    Endian endian_;
};

}  // namespace ironwan::core
