#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "usrlsh/common.hpp"

namespace usrlsh::wire {

// Little-endian primitive encoding shared by the store and ground-truth files.

template <typename T>
void put(std::ostream& out, T value) {
    static_assert(std::is_arithmetic_v<T>);
    std::array<char, sizeof(T)> buf;
    if constexpr (std::is_floating_point_v<T>) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        put(out, std::bit_cast<U>(value));
        return;
    } else {
        auto u = static_cast<std::make_unsigned_t<T>>(value);
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    }
    out.write(buf.data(), buf.size());
}

inline void put_bytes(std::ostream& out, std::span<const std::uint8_t> bytes) {
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void read_exact(std::istream& in, void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw CorruptionError(std::string("truncated while reading ") + what);
}

template <typename T>
T get(std::istream& in, const char* what) {
    static_assert(std::is_arithmetic_v<T>);
    if constexpr (std::is_floating_point_v<T>) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        return std::bit_cast<T>(get<U>(in, what));
    } else {
        std::array<unsigned char, sizeof(T)> buf;
        read_exact(in, buf.data(), buf.size(), what);
        std::make_unsigned_t<T> u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
        return static_cast<T>(u);
    }
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char got[4];
    in.read(got, 4);
    if (in.gcount() != 4 || std::memcmp(got, magic, 4) != 0) {
        throw FormatError(std::string("bad magic bytes (expected \"") + magic + "\")");
    }
}

inline void expect_end(std::istream& in) {
    if (in.peek() != std::char_traits<char>::eof()) throw CorruptionError("trailing bytes after end of data");
}

}  // namespace usrlsh::wire
