#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstring>
#include <span>
#include <utility>
#include <vector>

#include "element_type.hpp"
#include "error.hpp"
#include "hyperslab.hpp"

namespace abridge {

// Cell copies made while building or expanding RLE chunks (instrumentation).
struct rle_stats {
    static inline std::atomic<std::uint64_t> cells_copied { 0 };
};

// Runs shorter than this are kept inside literal segments.
inline constexpr std::uint64_t min_run_length = 3;

// <length, same, data>: data holds one value when same, else length values.
template<element T>
struct rle_segment {
    std::uint64_t length = 0;
    bool same = false;
    std::vector<T> data;

    bool operator==(const rle_segment &) const = default;
};

// A batch handed to iterate_tiled visitors: either literal values or a run
// of run_length copies of run_value.
template<element T>
struct rle_tile {
    std::span<const T> values;
    T run_value {};
    std::uint64_t run_length = 0;

    bool is_run() const noexcept { return run_length != 0; }
    std::uint64_t size() const noexcept { return is_run() ? run_length : values.size(); }
};

// In-memory run-length encoded chunk. Immutable after construction; all
// segment payloads live in one buffer so a dense buffer can be adopted as a
// single literal segment without copying.
template<element T>
class rle_chunk {
public:
    struct segment_view {
        std::uint64_t length;
        bool same;
        std::span<const T> data;
    };

    rle_chunk() = default;

    // Validates the segment invariants; throws errc::invalid_argument.
    static rle_chunk from_segments(hyperslab box, const std::vector<rle_segment<T>> &segments)
    {
        rle_chunk c;
        c._box = std::move(box);
        for (const auto &s : segments) {
            if (s.length == 0)
                throw error(errc::invalid_argument, "RLE segment of length 0");
            if (s.data.size() != (s.same ? 1 : s.length))
                throw error(errc::invalid_argument, "RLE segment payload does not match its length");
            c._segments.push_back(span_ref { s.length, s.same, c._payload.size() });
            c._payload.insert(c._payload.end(), s.data.begin(), s.data.end());
            c._cells += s.length;
        }
        if (!c._box.count.empty() && c._box.cells() != c._cells)
            throw error(errc::invalid_argument, "RLE segments cover " + std::to_string(c._cells)
                        + " cells, chunk has " + std::to_string(c._box.cells()));
        return c;
    }

    // Greedy maximal-run encoding. Runs of at least min_run_length equal
    // values become same-segments; everything else is gathered into literals.
    // Equality is bitwise so that decode(encode(x)) reproduces x exactly.
    static rle_chunk encode(std::span<const T> dense, hyperslab box = {})
    {
        if (dense.empty())
            throw error(errc::invalid_argument, "cannot encode an empty buffer");
        rle_chunk c;
        c._box = std::move(box);
        c._cells = dense.size();
        const auto n = dense.size();
        std::size_t literal_start = 0;
        std::size_t i = 0;
        auto flush_literal = [&](std::size_t end) {
            if (end > literal_start) {
                c._segments.push_back(span_ref { end - literal_start, false, c._payload.size() });
                c._payload.insert(c._payload.end(), dense.begin() + literal_start, dense.begin() + end);
            }
        };
        while (i < n) {
            std::size_t j = i + 1;
            while (j < n && std::memcmp(&dense[j], &dense[i], sizeof(T)) == 0)
                ++j;
            if (j - i >= min_run_length) {
                flush_literal(i);
                c._segments.push_back(span_ref { j - i, true, c._payload.size() });
                c._payload.push_back(dense[i]);
                literal_start = j;
            }
            i = j;
        }
        flush_literal(n);
        rle_stats::cells_copied += c._payload.size();
        return c;
    }

    // Wraps a dense buffer as one literal segment; no cell is inspected or copied.
    static rle_chunk masquerade(std::vector<T> &&dense, hyperslab box = {})
    {
        if (dense.empty())
            throw error(errc::invalid_argument, "cannot wrap an empty buffer");
        rle_chunk c;
        c._box = std::move(box);
        c._cells = dense.size();
        c._segments.push_back(span_ref { dense.size(), false, 0 });
        c._payload = std::move(dense);
        return c;
    }

    std::vector<T> decode() const
    {
        std::vector<T> out;
        out.reserve(_cells);
        for (const auto &s : _segments) {
            if (s.same)
                out.insert(out.end(), s.length, _payload[s.offset]);
            else
                out.insert(out.end(), _payload.begin() + s.offset, _payload.begin() + s.offset + s.length);
        }
        rle_stats::cells_copied += out.size();
        return out;
    }

    // Calls visitor(rle_tile<T>) for consecutive batches of at most tile_size
    // cells, in order. Runs are passed as (value, count) and never expanded.
    template<typename Visitor>
    void iterate_tiled(std::size_t tile_size, Visitor &&visitor) const
    {
        if (tile_size == 0)
            throw error(errc::invalid_argument, "tile size must be >= 1");
        for (const auto &s : _segments) {
            for (std::uint64_t done = 0; done < s.length;) {
                const auto n = std::min<std::uint64_t>(tile_size, s.length - done);
                rle_tile<T> t;
                if (s.same) {
                    t.run_value = _payload[s.offset];
                    t.run_length = n;
                } else {
                    t.values = std::span<const T> { _payload.data() + s.offset + done, n };
                }
                visitor(t);
                done += n;
            }
        }
    }

    std::size_t segment_count() const noexcept { return _segments.size(); }
    segment_view segment(std::size_t i) const
    {
        const auto &s = _segments.at(i);
        return segment_view { s.length, s.same,
                              std::span<const T> { _payload.data() + s.offset, s.same ? 1 : s.length } };
    }
    std::vector<rle_segment<T>> segments() const
    {
        std::vector<rle_segment<T>> out;
        for (std::size_t i = 0; i < _segments.size(); ++i) {
            const auto v = segment(i);
            out.push_back(rle_segment<T> { v.length, v.same, { v.data.begin(), v.data.end() } });
        }
        return out;
    }

    std::uint64_t cells() const noexcept { return _cells; }
    // Chunk region within the array (empty when not attached to an array).
    const hyperslab &box() const noexcept { return _box; }
    const extents &coord() const noexcept { return _box.start; }
    // Address of the segment storage; lets callers check that a masqueraded
    // buffer was adopted rather than copied.
    const T *storage() const noexcept { return _payload.data(); }

private:
    struct span_ref {
        std::uint64_t length;
        bool same;
        std::uint64_t offset;
    };

    hyperslab _box;
    std::uint64_t _cells = 0;
    std::vector<span_ref> _segments;
    std::vector<T> _payload;
};

template<element T>
rle_chunk<T> encode_rle(std::span<const T> dense, hyperslab box = {})
{
    return rle_chunk<T>::encode(dense, std::move(box));
}

template<element T>
std::vector<T> decode_rle(const rle_chunk<T> &chunk)
{
    return chunk.decode();
}

template<element T>
rle_chunk<T> masquerade_dense(std::vector<T> &&dense, hyperslab box = {})
{
    return rle_chunk<T>::masquerade(std::move(dense), std::move(box));
}

template<element T, typename Visitor>
void iterate_tiled(const rle_chunk<T> &chunk, std::size_t tile_size, Visitor &&visitor)
{
    chunk.iterate_tiled(tile_size, std::forward<Visitor>(visitor));
}

} // namespace abridge
