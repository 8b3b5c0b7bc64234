#include "abridge/array.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace abridge {

void gather_chunk(const dense_view &src, const extents &chunk_shape, const extents &coord,
                  std::span<std::byte> out, const scalar &fill)
{
    const chunk_grid grid { src.shape, chunk_shape };
    const auto w = width(src.type);
    const auto full = grid.chunk_box(coord);
    const auto clipped = grid.clipped_box(coord);
    if (out.size() != full.cells() * w)
        throw error(errc::invalid_argument, "chunk buffer has wrong size");
    if (clipped != full) {
        std::array<std::byte, 8> elem {};
        encode_scalar(src.type, fill, elem);
        fill_bytes(out, std::span { elem.data(), w });
    }
    copy_region(src.bytes, hyperslab::whole(src.shape), out, full, clipped, w);
}

mem_array::mem_array(array_schema schema) : _schema { std::move(schema) }
{
    validate(_schema);
    const auto cells = product(_schema.shape);
    for (const auto &a : _schema.attributes)
        _data.emplace_back(cells * width(a.type));
}

dense_view mem_array::view(std::size_t attr) const
{
    return dense_view { _schema.attributes.at(attr).type, _schema.shape, _data.at(attr) };
}

std::uint64_t mem_array::total_bytes() const noexcept
{
    std::uint64_t n = 0;
    for (const auto &d : _data)
        n += d.size();
    return n;
}

mem_array generate(const array_schema &schema, std::uint64_t seed, synth_pattern pattern)
{
    mem_array a { schema };
    std::mt19937_64 rng { seed };
    for (std::size_t i = 0; i < a.attribute_count(); ++i) {
        visit_dtype(schema.attributes[i].type, [&]<typename T>(type_tag<T>) {
            auto v = a.values<T>(i);
            auto draw = [&]() -> T {
                if constexpr (std::is_floating_point_v<T>)
                    return static_cast<T>(static_cast<double>(rng() >> 11) * 0x1.0p-53);
                else
                    return static_cast<T>(rng() % 1000);
            };
            if (pattern == synth_pattern::uniform) {
                for (auto &x : v)
                    x = draw();
                return;
            }
            for (std::size_t k = 0; k < v.size();) {
                const auto len = std::min<std::size_t>(v.size() - k, 1000 + rng() % 100000);
                std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(k), len, draw());
                k += len;
            }
        });
    }
    return a;
}

} // namespace abridge
