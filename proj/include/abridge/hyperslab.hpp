#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace abridge {

// Per-dimension cell counts or offsets.
using extents = std::vector<std::uint64_t>;

std::uint64_t product(const extents &e) noexcept;
std::string to_string(const extents &e);

// Axis-aligned box given by per-dimension start and count.
struct hyperslab {
    extents start;
    extents count;

    std::size_t rank() const noexcept { return start.size(); }
    std::uint64_t cells() const noexcept { return product(count); }

    // start + count, per dimension
    extents end() const;

    static hyperslab whole(const extents &shape);

    bool operator==(const hyperslab &) const = default;
};

std::string to_string(const hyperslab &s);

// rank(start) = rank(count), counts >= 1
bool well_formed(const hyperslab &s) noexcept;
// well_formed and start + count <= shape
bool within(const hyperslab &s, const extents &shape) noexcept;
bool contains(const hyperslab &outer, const hyperslab &inner) noexcept;
bool contains(const hyperslab &box, const extents &point) noexcept;
std::optional<hyperslab> intersect(const hyperslab &a, const hyperslab &b);
bool overlaps(const hyperslab &a, const hyperslab &b);

// Shifts s by (to - from) per dimension.
hyperslab translate(const hyperslab &s, const extents &from, const extents &to);

// Row-major offset of point within box (point must lie inside box).
std::uint64_t linear_offset(const hyperslab &box, const extents &point) noexcept;

// True when inner occupies one contiguous row-major run inside outer.
bool contiguous_in(const hyperslab &inner, const hyperslab &outer) noexcept;

// Copies the cells of region from the row-major buffer laid out over src_box
// into the row-major buffer laid out over dst_box. region must lie in both.
// Returns the number of bytes moved.
std::uint64_t copy_region(std::span<const std::byte> src, const hyperslab &src_box,
                          std::span<std::byte> dst, const hyperslab &dst_box,
                          const hyperslab &region, std::size_t elem_width);

// Writes elem repeatedly over region inside a buffer laid out over box.
void fill_region(std::span<std::byte> dst, const hyperslab &box, const hyperslab &region,
                 std::span<const std::byte> elem);

// Regular chunk grid over a shape.
struct chunk_grid {
    extents shape;
    extents chunk_shape;

    // number of chunks per dimension (edge chunks included)
    extents grid() const;
    std::uint64_t chunk_count() const;

    bool aligned(const extents &coord) const noexcept;
    bool in_bounds(const extents &coord) const noexcept;
    // Full (padded) box of the chunk starting at coord.
    hyperslab chunk_box(const extents &coord) const;
    // Chunk box clipped to the logical shape.
    hyperslab clipped_box(const extents &coord) const;
    // Chunk origin containing cell pos.
    extents chunk_of(const extents &pos) const;

    // Row-major index over the chunk grid; coord must be aligned and in bounds.
    std::uint64_t linearize(const extents &coord) const;
    extents delinearize(std::uint64_t index) const;

    // Linear indices of all chunks intersecting region, ascending.
    std::vector<std::uint64_t> intersecting(const hyperslab &region) const;
};

} // namespace abridge
