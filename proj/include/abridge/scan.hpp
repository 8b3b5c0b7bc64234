#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "container.hpp"
#include "rle_chunk.hpp"

namespace abridge {

// Per-instance chunk iterator over one attribute of an external array.
// The assigned chunk list is computed at start from the container's current
// shape and is never persisted.
template<element T>
class array_scan {
public:
    static array_scan start(catalog &cat, const std::string &array, const std::string &attr,
                            unsigned n_instances, unsigned instance, const chunk_assigner &assign = round_robin)
    {
        auto found = cat.lookup(array, attr);
        auto file = container::open(found.file, open_mode::read);
        const auto &meta = file.dataset(found.dataset);
        if (meta.type != dtype_of<T>())
            throw error(errc::invalid_argument, found.dataset + " holds " + std::string { to_string(meta.type) }
                        + ", scan expects " + std::string { to_string(dtype_of<T>()) });
        // stored datasets carry their own chunking; views use the array's
        chunk_grid grid { meta.shape,
                          meta.kind == dataset_kind::stored ? meta.chunk_shape : found.schema.chunk_shape };
        auto cp = assigned_chunk_indices(grid, n_instances, instance, assign);
        return array_scan { std::move(file), std::move(found.dataset), std::move(grid), std::move(cp) };
    }

    // Next assigned chunk as a single literal segment, or nullopt once the
    // list is drained (and on every call after that).
    std::optional<rle_chunk<T>> next()
    {
        if (_ptr == _cp.size())
            return std::nullopt;
        auto box = _grid.clipped_box(_grid.delinearize(_cp[_ptr++]));
        std::vector<T> cells(box.cells());
        _file.read_region(_dataset, box, std::as_writable_bytes(std::span { cells }));
        return rle_chunk<T>::masquerade(std::move(cells), std::move(box));
    }

    // True, and the next call to next() returns the chunk holding pos, when
    // that chunk is assigned to this instance. Otherwise nothing changes.
    bool set_position(const extents &pos)
    {
        if (pos.size() != _grid.shape.size() || !contains(hyperslab::whole(_grid.shape), pos))
            throw error(errc::out_of_bounds, "position " + to_string(pos) + " outside " + to_string(_grid.shape));
        const auto l = _grid.linearize(_grid.chunk_of(pos));
        const auto it = std::lower_bound(_cp.begin(), _cp.end(), l);
        if (it == _cp.end() || *it != l)
            return false;
        _ptr = static_cast<std::size_t>(it - _cp.begin());
        return true;
    }

    const std::vector<std::uint64_t> &assigned() const noexcept { return _cp; }
    std::size_t chunk_ptr() const noexcept { return _ptr; }
    const chunk_grid &grid() const noexcept { return _grid; }
    const container &source() const noexcept { return _file; }
    const std::string &dataset() const noexcept { return _dataset; }

private:
    array_scan(container file, std::string dataset, chunk_grid grid, std::vector<std::uint64_t> cp)
        : _file { std::move(file) }, _dataset { std::move(dataset) }, _grid { std::move(grid) }, _cp { std::move(cp) }
    {
    }

    container _file;
    std::string _dataset;
    chunk_grid _grid;
    std::vector<std::uint64_t> _cp;
    std::size_t _ptr = 0;
};

} // namespace abridge
