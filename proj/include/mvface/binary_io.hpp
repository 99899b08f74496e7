#ifndef MVFACE_BINARY_IO_HPP
#define MVFACE_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "mvface/error.hpp"

// Little-endian primitives for the template and model containers.
namespace mvface::bin {

template <typename U>
void put_le(std::ostream& out, U v) {
    unsigned char b[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
    unsigned char b[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) throw Error(Errc::io, "unexpected end of file");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_le<std::uint8_t>(out, v); }
inline void put_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
inline void put_i16(std::ostream& out, std::int16_t v) { put_le(out, static_cast<std::uint16_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

inline std::uint8_t get_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
inline std::uint16_t get_u16(std::istream& in) { return get_le<std::uint16_t>(in); }
inline std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
inline std::int16_t get_i16(std::istream& in) { return static_cast<std::int16_t>(get_le<std::uint16_t>(in)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

inline void put_string(std::ostream& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::uint32_t max_len = 1u << 20) {
    const auto n = get_u32(in);
    if (n > max_len) throw Error(Errc::data_validation, "string length out of range");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw Error(Errc::io, "unexpected end of file");
    return s;
}

inline void put_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::string got(magic.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
        throw Error(Errc::data_validation, "bad magic: expected " + std::string(magic));
}

}  // namespace mvface::bin

#endif  // MVFACE_BINARY_IO_HPP
