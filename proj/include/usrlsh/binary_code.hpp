#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "usrlsh/common.hpp"

namespace usrlsh {

constexpr std::size_t code_bytes(std::size_t bits) noexcept { return (bits + 7) / 8; }

/// Packed +/-1 code. Logical bit j lives in byte j / 8 at position j % 8
/// (LSB first); 1 encodes +1 and 0 encodes -1. Padding bits are zero.
class BinaryCode {
public:
    BinaryCode() = default;
    explicit BinaryCode(std::size_t bits) : bits_(bits), bytes_(code_bytes(bits), 0) {}
    BinaryCode(std::size_t bits, std::vector<std::uint8_t> bytes) : bits_(bits), bytes_(std::move(bytes)) {
        if (bytes_.size() != code_bytes(bits)) throw DimensionError("code byte length does not match bit length");
        if (bits % 8 != 0 && !bytes_.empty()) {
            const auto mask = static_cast<std::uint8_t>((1u << (bits % 8)) - 1u);
            if ((bytes_.back() & ~mask) != 0) throw InvalidArgumentError("code padding bits must be zero");
        }
    }

    std::size_t size() const noexcept { return bits_; }
    std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }

    /// True when logical bit j encodes +1.
    bool bit(std::size_t j) const noexcept { return (bytes_[j >> 3] >> (j & 7)) & 1u; }
    void set(std::size_t j, bool positive) noexcept {
        const auto m = static_cast<std::uint8_t>(1u << (j & 7));
        if (positive) bytes_[j >> 3] |= m;
        else bytes_[j >> 3] &= static_cast<std::uint8_t>(~m);
    }

    friend bool operator==(const BinaryCode&, const BinaryCode&) = default;

private:
    std::size_t bits_ = 0;
    std::vector<std::uint8_t> bytes_;
};

inline BinaryCode pack_bits(std::span<const int> signs) {
    BinaryCode code(signs.size());
    for (std::size_t j = 0; j < signs.size(); ++j) {
        if (signs[j] == 1) code.set(j, true);
        else if (signs[j] != -1) throw InvalidArgumentError("sign at index " + std::to_string(j) + " is not +/-1");
    }
    return code;
}

inline std::vector<int> unpack_bits(const BinaryCode& code) {
    std::vector<int> signs(code.size());
    for (std::size_t j = 0; j < code.size(); ++j) signs[j] = code.bit(j) ? 1 : -1;
    return signs;
}

/// Sign binarization with sign(0) = +1 (so -0.0 also maps to +1).
inline void pack_signs_into(std::span<const double> values, std::uint8_t* out) {
    std::memset(out, 0, code_bytes(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) {
        if (values[j] >= 0.0) out[j >> 3] |= static_cast<std::uint8_t>(1u << (j & 7));
    }
}

inline BinaryCode pack_signs(std::span<const double> values) {
    std::vector<std::uint8_t> bytes(code_bytes(values.size()));
    pack_signs_into(values, bytes.data());
    return BinaryCode(values.size(), std::move(bytes));
}

namespace detail {

inline std::uint64_t load_word(const std::uint8_t* p, std::size_t n) noexcept {
    std::uint64_t w = 0;
    if (n > 8) n = 8;
    for (std::size_t i = 0; i < n; ++i) w |= std::uint64_t(p[i]) << (8 * i);
    return w;
}

/// Popcount of a XOR b over `nbytes` bytes, 64 bits at a time.
inline std::size_t hamming_bytes(const std::uint8_t* a, const std::uint8_t* b, std::size_t nbytes) noexcept {
    std::size_t dist = 0;
    std::size_t i = 0;
    for (; i + 8 <= nbytes; i += 8) {
        std::uint64_t wa, wb;
        std::memcpy(&wa, a + i, 8);
        std::memcpy(&wb, b + i, 8);
        dist += static_cast<std::size_t>(std::popcount(wa ^ wb));
    }
    if (i < nbytes) dist += static_cast<std::size_t>(std::popcount(load_word(a + i, nbytes - i) ^ load_word(b + i, nbytes - i)));
    return dist;
}

}  // namespace detail

inline std::size_t hamming(const BinaryCode& a, const BinaryCode& b) {
    if (a.size() != b.size()) throw DimensionError("hamming operands have different lengths");
    return detail::hamming_bytes(a.bytes().data(), b.bytes().data(), a.bytes().size());
}

/// First `key_bits` (<= 64) logical bits of a code as an integer, bit j -> bit j.
inline std::uint64_t code_prefix(std::span<const std::uint8_t> bytes, std::size_t key_bits) noexcept {
    if (key_bits == 0) return 0;
    const std::uint64_t w = detail::load_word(bytes.data(), bytes.size());
    return key_bits >= 64 ? w : (w & ((std::uint64_t(1) << key_bits) - 1));
}

}  // namespace usrlsh
