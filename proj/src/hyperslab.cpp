#include "abridge/hyperslab.hpp"

#include <algorithm>
#include <cstring>

#include "abridge/element_type.hpp"
#include "abridge/error.hpp"

namespace abridge {

std::uint64_t product(const extents &e) noexcept
{
    std::uint64_t p = 1;
    for (auto v : e)
        p *= v;
    return p;
}

std::string to_string(const extents &e)
{
    std::string s = "[";
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (i)
            s += ',';
        s += std::to_string(e[i]);
    }
    return s + "]";
}

extents hyperslab::end() const
{
    extents e(rank());
    for (std::size_t d = 0; d < rank(); ++d)
        e[d] = start[d] + count[d];
    return e;
}

hyperslab hyperslab::whole(const extents &shape)
{
    return hyperslab { extents(shape.size(), 0), shape };
}

std::string to_string(const hyperslab &s)
{
    return "{start=" + to_string(s.start) + " count=" + to_string(s.count) + "}";
}

bool well_formed(const hyperslab &s) noexcept
{
    if (s.start.size() != s.count.size() || s.start.empty())
        return false;
    return std::all_of(s.count.begin(), s.count.end(), [](auto c) { return c >= 1; });
}

bool within(const hyperslab &s, const extents &shape) noexcept
{
    if (!well_formed(s) || s.rank() != shape.size())
        return false;
    for (std::size_t d = 0; d < s.rank(); ++d)
        if (s.start[d] > shape[d] || s.count[d] > shape[d] - s.start[d])
            return false;
    return true;
}

bool contains(const hyperslab &outer, const hyperslab &inner) noexcept
{
    if (outer.rank() != inner.rank())
        return false;
    for (std::size_t d = 0; d < outer.rank(); ++d)
        if (inner.start[d] < outer.start[d]
            || inner.start[d] + inner.count[d] > outer.start[d] + outer.count[d])
            return false;
    return true;
}

bool contains(const hyperslab &box, const extents &point) noexcept
{
    if (box.rank() != point.size())
        return false;
    for (std::size_t d = 0; d < box.rank(); ++d)
        if (point[d] < box.start[d] || point[d] >= box.start[d] + box.count[d])
            return false;
    return true;
}

std::optional<hyperslab> intersect(const hyperslab &a, const hyperslab &b)
{
    if (a.rank() != b.rank())
        throw error(errc::invalid_argument, "rank mismatch in hyperslab intersection");
    hyperslab r { extents(a.rank()), extents(a.rank()) };
    for (std::size_t d = 0; d < a.rank(); ++d) {
        const auto lo = std::max(a.start[d], b.start[d]);
        const auto hi = std::min(a.start[d] + a.count[d], b.start[d] + b.count[d]);
        if (hi <= lo)
            return std::nullopt;
        r.start[d] = lo;
        r.count[d] = hi - lo;
    }
    return r;
}

bool overlaps(const hyperslab &a, const hyperslab &b)
{
    return intersect(a, b).has_value();
}

hyperslab translate(const hyperslab &s, const extents &from, const extents &to)
{
    hyperslab r = s;
    for (std::size_t d = 0; d < s.rank(); ++d)
        r.start[d] = s.start[d] - from[d] + to[d];
    return r;
}

std::uint64_t linear_offset(const hyperslab &box, const extents &point) noexcept
{
    std::uint64_t off = 0;
    for (std::size_t d = 0; d < box.rank(); ++d)
        off = off * box.count[d] + (point[d] - box.start[d]);
    return off;
}

bool contiguous_in(const hyperslab &inner, const hyperslab &outer) noexcept
{
    // leading dims of count 1, then one partial dim, then full trailing dims
    std::size_t d = 0;
    while (d < inner.rank() && inner.count[d] == 1)
        ++d;
    for (std::size_t j = d + 1; j < inner.rank(); ++j)
        if (inner.count[j] != outer.count[j])
            return false;
    return true;
}

namespace {

// Number of trailing dims (beyond the split point) that are copied as one run.
std::size_t split_dim(const hyperslab &region, const hyperslab &a, const hyperslab &b)
{
    std::size_t k = region.rank() - 1;
    while (k > 0 && region.count[k] == a.count[k] && region.count[k] == b.count[k])
        --k;
    return k;
}

template<typename F>
void for_each_run(const hyperslab &region, std::size_t k, F &&f)
{
    extents point = region.start;
    for (;;) {
        f(point);
        // odometer over dims [0, k)
        std::size_t d = k;
        while (d > 0) {
            --d;
            if (++point[d] < region.start[d] + region.count[d])
                break;
            point[d] = region.start[d];
            if (d == 0)
                return;
        }
        if (k == 0)
            return;
    }
}

} // namespace

std::uint64_t copy_region(std::span<const std::byte> src, const hyperslab &src_box,
                          std::span<std::byte> dst, const hyperslab &dst_box,
                          const hyperslab &region, std::size_t elem_width)
{
    const std::size_t k = split_dim(region, src_box, dst_box);
    std::uint64_t run = 1;
    for (std::size_t d = k; d < region.rank(); ++d)
        run *= region.count[d];
    const std::uint64_t run_bytes = run * elem_width;
    std::uint64_t moved = 0;
    for_each_run(region, k, [&](const extents &p) {
        const auto so = linear_offset(src_box, p) * elem_width;
        const auto doff = linear_offset(dst_box, p) * elem_width;
        std::memcpy(dst.data() + doff, src.data() + so, run_bytes);
        moved += run_bytes;
    });
    return moved;
}

void fill_region(std::span<std::byte> dst, const hyperslab &box, const hyperslab &region,
                 std::span<const std::byte> elem)
{
    const std::size_t k = split_dim(region, box, box);
    std::uint64_t run = 1;
    for (std::size_t d = k; d < region.rank(); ++d)
        run *= region.count[d];
    const auto w = elem.size();
    for_each_run(region, k, [&](const extents &p) {
        const auto off = linear_offset(box, p) * w;
        fill_bytes(dst.subspan(off, run * w), elem);
    });
}

extents chunk_grid::grid() const
{
    extents g(shape.size());
    for (std::size_t d = 0; d < shape.size(); ++d)
        g[d] = (shape[d] + chunk_shape[d] - 1) / chunk_shape[d];
    return g;
}

std::uint64_t chunk_grid::chunk_count() const
{
    return product(grid());
}

bool chunk_grid::aligned(const extents &coord) const noexcept
{
    if (coord.size() != chunk_shape.size())
        return false;
    for (std::size_t d = 0; d < coord.size(); ++d)
        if (coord[d] % chunk_shape[d] != 0)
            return false;
    return true;
}

bool chunk_grid::in_bounds(const extents &coord) const noexcept
{
    if (coord.size() != shape.size())
        return false;
    for (std::size_t d = 0; d < coord.size(); ++d)
        if (coord[d] >= shape[d])
            return false;
    return true;
}

hyperslab chunk_grid::chunk_box(const extents &coord) const
{
    return hyperslab { coord, chunk_shape };
}

hyperslab chunk_grid::clipped_box(const extents &coord) const
{
    hyperslab b { coord, chunk_shape };
    for (std::size_t d = 0; d < b.rank(); ++d)
        b.count[d] = std::min(chunk_shape[d], shape[d] - coord[d]);
    return b;
}

extents chunk_grid::chunk_of(const extents &pos) const
{
    extents c(pos.size());
    for (std::size_t d = 0; d < pos.size(); ++d)
        c[d] = pos[d] / chunk_shape[d] * chunk_shape[d];
    return c;
}

std::uint64_t chunk_grid::linearize(const extents &coord) const
{
    if (!aligned(coord))
        throw error(errc::misaligned, "chunk coordinate " + to_string(coord) + " not aligned to " + to_string(chunk_shape));
    if (!in_bounds(coord))
        throw error(errc::out_of_bounds, "chunk coordinate " + to_string(coord) + " outside " + to_string(shape));
    const auto g = grid();
    std::uint64_t idx = 0;
    for (std::size_t d = 0; d < coord.size(); ++d)
        idx = idx * g[d] + coord[d] / chunk_shape[d];
    return idx;
}

extents chunk_grid::delinearize(std::uint64_t index) const
{
    const auto g = grid();
    extents c(g.size());
    for (std::size_t d = g.size(); d-- > 0;) {
        c[d] = (index % g[d]) * chunk_shape[d];
        index /= g[d];
    }
    return c;
}

std::vector<std::uint64_t> chunk_grid::intersecting(const hyperslab &region) const
{
    std::vector<std::uint64_t> out;
    if (!within(region, shape))
        throw error(errc::out_of_bounds, "region " + to_string(region) + " outside " + to_string(shape));
    const auto g = grid();
    hyperslab chunks { extents(g.size()), extents(g.size()) };
    for (std::size_t d = 0; d < g.size(); ++d) {
        const auto first = region.start[d] / chunk_shape[d];
        const auto last = (region.start[d] + region.count[d] - 1) / chunk_shape[d];
        chunks.start[d] = first;
        chunks.count[d] = last - first + 1;
    }
    out.reserve(chunks.cells());
    for_each_run(chunks, chunks.rank(), [&](const extents &p) {
        std::uint64_t idx = 0;
        for (std::size_t d = 0; d < p.size(); ++d)
            idx = idx * g[d] + p[d];
        out.push_back(idx);
    });
    return out;
}

} // namespace abridge
