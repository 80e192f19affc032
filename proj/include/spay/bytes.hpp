#pragma once

// Canonical byte-level encoding shared by every serialized artifact
// (certificates, chain ops, blocks, ledger journal records, proofs).
//
// Layout rules, fixed for all records:
//   - integers are little-endian, fixed width (u8/u16/u32/u64; i64 as
//     two's-complement u64)
//   - byte strings and text are u32 length followed by the raw bytes
//   - 32-byte digests are written raw, no length prefix
//   - lists are u32 count followed by the items
// Field order is the declaration order of the owning struct.

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace spay {

using Byte = std::uint8_t;
using Bytes = std::vector<Byte>;
using Hash32 = std::array<Byte, 32>;

inline std::string to_hex(const Byte* data, std::size_t len) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(digits[data[i] >> 4]);
        out.push_back(digits[data[i] & 0x0f]);
    }
    return out;
}

inline std::string to_hex(const Bytes& b) { return to_hex(b.data(), b.size()); }
inline std::string to_hex(const Hash32& h) { return to_hex(h.data(), h.size()); }

inline std::optional<Bytes> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = nibble(hex[i]);
        int lo = nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<Byte>((hi << 4) | lo));
    }
    return out;
}

class Encoder {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }

    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<Byte>((v >> (i * 8)) & 0xff));
    }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<Byte>((v >> (i * 8)) & 0xff));
    }

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<Byte>((v >> (i * 8)) & 0xff));
    }

    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

    void hash(const Hash32& h) { buf_.insert(buf_.end(), h.begin(), h.end()); }

    void bytes(const Bytes& b) {
        u32(static_cast<std::uint32_t>(b.size()));
        buf_.insert(buf_.end(), b.begin(), b.end());
    }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    const Bytes& take() const { return buf_; }
    Bytes&& move() { return std::move(buf_); }

private:
    Bytes buf_;
};

// Throws std::out_of_range on truncated input; callers that must not throw
// wrap decode in try/catch and map to a parse failure.
class Decoder {
public:
    explicit Decoder(const Bytes& b) : data_(b.data()), size_(b.size()) {}
    Decoder(const Byte* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return take(1)[0]; }

    std::uint16_t u16() {
        const Byte* p = take(2);
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32() {
        const Byte* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (i * 8);
        return v;
    }

    std::uint64_t u64() {
        const Byte* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (i * 8);
        return v;
    }

    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

    Hash32 hash() {
        const Byte* p = take(32);
        Hash32 h;
        std::memcpy(h.data(), p, 32);
        return h;
    }

    Bytes bytes() {
        std::uint32_t n = u32();
        const Byte* p = take(n);
        return Bytes(p, p + n);
    }

    std::string str() {
        std::uint32_t n = u32();
        const Byte* p = take(n);
        return std::string(reinterpret_cast<const char*>(p), n);
    }

    bool done() const { return pos_ == size_; }
    std::size_t remaining() const { return size_ - pos_; }

private:
    const Byte* take(std::size_t n) {
        if (pos_ + n > size_) throw std::out_of_range("decode past end of record");
        const Byte* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    const Byte* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

}  // namespace spay
