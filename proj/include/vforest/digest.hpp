#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace vforest {

/// 256-bit value that doubles as a tree position: bit i (counting from the
/// most significant, i = 0) selects the branch taken from depth i to depth
/// i+1 (0 = left, 1 = right).
struct Digest {
    std::array<std::uint8_t, 32> b{};

    bool operator==(const Digest&) const = default;
    auto operator<=>(const Digest&) const = default;

    /// Bit i counting from the most significant bit of the 256-bit value.
    bool bit_msb(unsigned i) const { return (b[i >> 3] >> (7 - (i & 7))) & 1; }

    void set_bit_msb(unsigned i, bool v) {
        std::uint8_t mask = static_cast<std::uint8_t>(1u << (7 - (i & 7)));
        if (v) b[i >> 3] |= mask; else b[i >> 3] &= static_cast<std::uint8_t>(~mask);
    }

    void flip_bit_msb(unsigned i) { b[i >> 3] ^= static_cast<std::uint8_t>(1u << (7 - (i & 7))); }

    /// Zeros all bits at MSB index >= depth, leaving the depth-bit prefix
    /// that identifies a node at that depth.
    Digest masked_to_depth(unsigned depth) const {
        Digest out;
        unsigned full = depth >> 3;
        std::memcpy(out.b.data(), b.data(), full);
        if (unsigned rem = depth & 7) {
            out.b[full] = static_cast<std::uint8_t>(b[full] & (0xFFu << (8 - rem)));
        }
        return out;
    }

    /// Top `n` bits (n <= 32) as an integer; used for level-cache parts.
    std::uint32_t top_bits(unsigned n) const {
        std::uint64_t x = (std::uint64_t(b[0]) << 32) | (std::uint64_t(b[1]) << 24) |
                          (std::uint64_t(b[2]) << 16) | (std::uint64_t(b[3]) << 8) | b[4];
        return static_cast<std::uint32_t>(x >> (40 - n));
    }

    std::span<const std::uint8_t> bytes() const { return {b.data(), b.size()}; }
};

inline Digest operator^(const Digest& x, const Digest& y) {
    Digest out;
    for (size_t i = 0; i < 32; ++i) out.b[i] = static_cast<std::uint8_t>(x.b[i] ^ y.b[i]);
    return out;
}

/// MSB index of the first differing bit, or -1 when equal.
inline int first_diff_bit_msb(const Digest& x, const Digest& y) {
    for (size_t i = 0; i < 32; ++i) {
        std::uint8_t d = static_cast<std::uint8_t>(x.b[i] ^ y.b[i]);
        if (d) return static_cast<int>(i * 8) + std::countl_zero(d);
    }
    return -1;
}

/// Position whose top `n` bits equal `prefix` and the rest are zero.
inline Digest digest_from_top_bits(std::uint32_t prefix, unsigned n) {
    Digest out;
    std::uint64_t shifted = std::uint64_t(prefix) << (40 - n);
    out.b[0] = static_cast<std::uint8_t>(shifted >> 32);
    out.b[1] = static_cast<std::uint8_t>(shifted >> 24);
    out.b[2] = static_cast<std::uint8_t>(shifted >> 16);
    out.b[3] = static_cast<std::uint8_t>(shifted >> 8);
    out.b[4] = static_cast<std::uint8_t>(shifted);
    return out;
}

inline std::string to_hex(const Digest& d) {
    static const char* k = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto byte : d.b) {
        s.push_back(k[byte >> 4]);
        s.push_back(k[byte & 15]);
    }
    return s;
}

struct DigestHash {
    size_t operator()(const Digest& d) const {
        std::uint64_t x;
        std::memcpy(&x, d.b.data(), 8);
        return static_cast<size_t>(x);
    }
};

/// 256-bit presence bitmap for proofs. Bit i, counting from the least
/// significant, marks the sibling at tree depth 256 - i. Stored big-endian,
/// so byte 0 carries bits 255..248.
struct Bitmap256 {
    std::array<std::uint8_t, 32> b{};

    bool operator==(const Bitmap256&) const = default;

    bool test(unsigned i) const { return (b[31 - (i >> 3)] >> (i & 7)) & 1; }
    void set(unsigned i) { b[31 - (i >> 3)] |= static_cast<std::uint8_t>(1u << (i & 7)); }
    void clear(unsigned i) { b[31 - (i >> 3)] &= static_cast<std::uint8_t>(~(1u << (i & 7))); }

    unsigned popcount() const {
        unsigned n = 0;
        for (auto byte : b) n += static_cast<unsigned>(std::popcount(byte));
        return n;
    }

    /// Number of set bits strictly below index i; the path-vector index of
    /// the element carried for bit i.
    unsigned rank(unsigned i) const {
        unsigned n = 0;
        unsigned full = i >> 3;
        for (unsigned k = 0; k < full; ++k) n += static_cast<unsigned>(std::popcount(b[31 - k]));
        if (unsigned rem = i & 7) {
            n += static_cast<unsigned>(std::popcount(std::uint8_t(b[31 - full] & ((1u << rem) - 1))));
        }
        return n;
    }
};

}  // namespace vforest
