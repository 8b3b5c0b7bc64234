#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <type_traits>
#include <variant>

#include "error.hpp"

namespace abridge {

static_assert(std::endian::native == std::endian::little, "on-disk payloads are raw little-endian cells");

enum class dtype : std::uint8_t { f64, f32, i64, i32 };

constexpr std::size_t width(dtype t) noexcept
{
    return (t == dtype::f64 || t == dtype::i64) ? 8 : 4;
}

constexpr std::string_view to_string(dtype t) noexcept
{
    switch (t) {
    case dtype::f64: return "f64";
    case dtype::f32: return "f32";
    case dtype::i64: return "i64";
    case dtype::i32: return "i32";
    }
    return "?";
}

inline dtype parse_dtype(std::string_view s)
{
    if (s == "f64") return dtype::f64;
    if (s == "f32") return dtype::f32;
    if (s == "i64") return dtype::i64;
    if (s == "i32") return dtype::i32;
    throw error(errc::invalid_argument, "unknown element type '" + std::string { s } + "'");
}

constexpr bool is_integral(dtype t) noexcept { return t == dtype::i64 || t == dtype::i32; }

template<typename T>
constexpr dtype dtype_of()
{
    if constexpr (std::is_same_v<T, double>) return dtype::f64;
    else if constexpr (std::is_same_v<T, float>) return dtype::f32;
    else if constexpr (std::is_same_v<T, std::int64_t>) return dtype::i64;
    else if constexpr (std::is_same_v<T, std::int32_t>) return dtype::i32;
    else static_assert(!sizeof(T), "unsupported element type");
}

template<typename T>
concept element = std::is_same_v<T, double> || std::is_same_v<T, float>
    || std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::int32_t>;

template<typename T>
struct type_tag {
    using type = T;
};

// Calls f(type_tag<T>{}) with T the C++ type behind t.
template<typename F>
decltype(auto) visit_dtype(dtype t, F &&f)
{
    switch (t) {
    case dtype::f64: return f(type_tag<double> {});
    case dtype::f32: return f(type_tag<float> {});
    case dtype::i64: return f(type_tag<std::int64_t> {});
    case dtype::i32: return f(type_tag<std::int32_t> {});
    }
    throw error(errc::invalid_argument, "bad dtype");
}

// A single element value independent of the storage type; used for fill values.
using scalar = std::variant<double, std::int64_t>;

inline double to_double(const scalar &v)
{
    return std::visit([](auto x) { return static_cast<double>(x); }, v);
}

template<element T>
T scalar_as(const scalar &v)
{
    return std::visit([](auto x) { return static_cast<T>(x); }, v);
}

// Writes one element of type t holding v into out (out.size() >= width(t)).
inline void encode_scalar(dtype t, const scalar &v, std::span<std::byte> out)
{
    visit_dtype(t, [&]<typename T>(type_tag<T>) {
        const T x = scalar_as<T>(v);
        std::memcpy(out.data(), &x, sizeof(T));
    });
}

// Replicates one encoded element across dst.
inline void fill_bytes(std::span<std::byte> dst, std::span<const std::byte> elem)
{
    const auto w = elem.size();
    if (dst.empty())
        return;
    bool all_zero = true;
    for (auto b : elem)
        all_zero = all_zero && b == std::byte { 0 };
    if (all_zero) {
        std::memset(dst.data(), 0, dst.size());
        return;
    }
    for (std::size_t off = 0; off + w <= dst.size(); off += w)
        std::memcpy(dst.data() + off, elem.data(), w);
}

} // namespace abridge
