#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "catalog.hpp"
#include "element_type.hpp"
#include "hyperslab.hpp"

namespace abridge {

// Read-only dense row-major cells of one attribute over a whole shape.
struct dense_view {
    dtype type = dtype::f64;
    extents shape;
    std::span<const std::byte> bytes;

    std::uint64_t cells() const noexcept { return product(shape); }

    template<element T>
    std::span<const T> as() const
    {
        if (dtype_of<T>() != type)
            throw error(errc::invalid_argument, "dense view holds " + std::string { to_string(type) });
        return { reinterpret_cast<const T *>(bytes.data()), bytes.size() / sizeof(T) };
    }
};

// Copies the chunk at coord into out, laid out over the full (padded) chunk
// box; cells beyond the shape get fill.
void gather_chunk(const dense_view &src, const extents &chunk_shape, const extents &coord,
                  std::span<std::byte> out, const scalar &fill);

// An array held in engine memory: one dense buffer per attribute.
class mem_array {
public:
    explicit mem_array(array_schema schema);

    const array_schema &schema() const noexcept { return _schema; }
    std::size_t attribute_count() const noexcept { return _schema.attributes.size(); }
    dense_view view(std::size_t attr) const;
    std::span<std::byte> bytes(std::size_t attr) { return _data.at(attr); }

    template<element T>
    std::span<T> values(std::size_t attr)
    {
        if (dtype_of<T>() != _schema.attributes.at(attr).type)
            throw error(errc::invalid_argument, "attribute " + _schema.attributes.at(attr).name + " type mismatch");
        auto &b = _data.at(attr);
        return { reinterpret_cast<T *>(b.data()), b.size() / sizeof(T) };
    }

    // Sum over attributes of cell bytes.
    std::uint64_t total_bytes() const noexcept;

private:
    array_schema _schema;
    std::vector<std::vector<std::byte>> _data;
};

enum class synth_pattern {
    uniform, // independent values in [0, 1) (integers in [0, 1000))
    runs,    // long constant runs, friendly to RLE
};

// Deterministic synthetic contents given the seed.
mem_array generate(const array_schema &schema, std::uint64_t seed, synth_pattern pattern = synth_pattern::uniform);

} // namespace abridge
