#include <cstdio>
#include <cstring>
#include <memory>

#include "abridge/array.hpp"
#include "abridge/container.hpp"
#include "abridge/query.hpp"

namespace abridge {

namespace fs = std::filesystem;

namespace {

std::string coord_dataset(std::size_t d)
{
    return "/coord" + std::to_string(d);
}

std::string value_dataset(const attribute &a)
{
    return "/" + a.name;
}

constexpr container_options staging_options { .truncate = true, .lock_timeout = {}, .sync_on_commit = false };

struct file_closer {
    void operator()(std::FILE *f) const noexcept { std::fclose(f); }
};

} // namespace

void staging_tracker::add(std::uint64_t bytes) noexcept
{
    _current += bytes;
    _peak = std::max(_peak, _current);
}

void staging_tracker::release(std::uint64_t bytes) noexcept
{
    _current -= std::min(bytes, _current);
}

flat_array load_flat(const fs::path &binary_in, const array_schema &schema, const fs::path &flat_prefix,
                     staging_tracker &tracker, std::uint64_t block_cells)
{
    validate(schema);
    if (block_cells == 0)
        throw error(errc::invalid_argument, "block size must be >= 1");
    std::size_t cell_width = 0;
    for (const auto &a : schema.attributes)
        cell_width += width(a.type);
    const auto size = fs::file_size(binary_in);
    if (size % cell_width != 0)
        throw error(errc::invalid_argument, binary_in.string() + ": " + std::to_string(size)
                    + " bytes is not a whole number of " + std::to_string(cell_width) + "-byte cells");
    flat_array flat;
    flat.values = schema;
    flat.rank = schema.rank();
    flat.cells = size / cell_width;
    if (flat.cells > product(schema.shape))
        throw error(errc::invalid_argument, binary_in.string() + " holds more cells than " + to_string(schema.shape));
    tracker.input_bytes = size;
    tracker.add(size);

    std::unique_ptr<std::FILE, file_closer> in { std::fopen(binary_in.c_str(), "rb") };
    if (!in)
        throw error(errc::io, "cannot read " + binary_in.string());
    std::vector<std::byte> raw;
    std::vector<std::vector<std::int64_t>> coords(flat.rank);
    std::vector<std::vector<std::byte>> values(schema.attributes.size());
    extents pos(flat.rank, 0);
    for (std::uint64_t done = 0; done < flat.cells;) {
        const auto k = std::min(block_cells, flat.cells - done);
        raw.resize(k * cell_width);
        if (std::fread(raw.data(), 1, raw.size(), in.get()) != raw.size())
            throw error(errc::truncated, "short read on " + binary_in.string());
        for (auto &c : coords)
            c.resize(k);
        for (std::uint64_t i = 0; i < k; ++i) {
            for (std::size_t d = 0; d < flat.rank; ++d)
                coords[d][i] = static_cast<std::int64_t>(pos[d]);
            for (std::size_t d = flat.rank; d-- > 0;) {
                if (++pos[d] < schema.shape[d])
                    break;
                pos[d] = 0;
            }
        }
        std::size_t offset = 0;
        for (std::size_t a = 0; a < values.size(); ++a) {
            const auto w = width(schema.attributes[a].type);
            values[a].resize(k * w);
            for (std::uint64_t i = 0; i < k; ++i)
                std::memcpy(values[a].data() + i * w, raw.data() + i * cell_width + offset, w);
            offset += w;
        }

        const auto path = fs::path { flat_prefix.string() + ".b" + std::to_string(flat.blocks.size()) + ".abr" };
        {
            auto c = container::create(path, staging_options);
            for (std::size_t d = 0; d < flat.rank; ++d) {
                c.create_dataset(coord_dataset(d), dtype::i64, { k }, { k }, std::int64_t { 0 });
                c.write_chunk_as<std::int64_t>(coord_dataset(d), { 0 }, coords[d]);
            }
            for (std::size_t a = 0; a < values.size(); ++a) {
                const auto &attr = schema.attributes[a];
                c.create_dataset(value_dataset(attr), attr.type, { k }, { k }, 0.0);
                c.write_chunk(value_dataset(attr), { 0 }, values[a]);
            }
            c.commit();
        }
        const auto bytes = fs::file_size(path);
        tracker.add(bytes);
        tracker.flat_bytes += bytes;
        flat.blocks.push_back(path);
        flat.block_cells.push_back(k);
        done += k;
    }
    return flat;
}

void redimension(flat_array &flat, const fs::path &out, staging_tracker &tracker)
{
    const auto &schema = flat.values;
    const auto grid = schema.grid();
    const auto whole = hyperslab::whole(schema.shape);
    mem_array dense { schema };
    std::vector<bool> seen(product(schema.shape));
    std::vector<std::uint64_t> missing(grid.chunk_count());
    for (std::uint64_t l = 0; l < missing.size(); ++l)
        missing[l] = grid.clipped_box(grid.delinearize(l)).cells();

    auto c = container::create(out, staging_options);
    for (const auto &a : schema.attributes)
        c.create_dataset(value_dataset(a), a.type, schema.shape, schema.chunk_shape, 0.0);
    c.commit();
    std::uint64_t out_size = fs::file_size(out);
    tracker.add(out_size);
    auto track_output = [&] {
        const auto now = fs::file_size(out);
        tracker.add(now - std::min(now, out_size));
        tracker.release(out_size - std::min(now, out_size));
        out_size = now;
    };

    std::vector<std::byte> buf;
    auto write_chunk = [&](std::uint64_t l) {
        const auto coord = grid.delinearize(l);
        for (std::size_t a = 0; a < dense.attribute_count(); ++a) {
            const auto view = dense.view(a);
            buf.resize(product(schema.chunk_shape) * width(view.type));
            gather_chunk(view, schema.chunk_shape, coord, buf, 0.0);
            c.write_chunk(value_dataset(schema.attributes[a]), coord, buf);
        }
    };

    extents pos(flat.rank);
    for (std::size_t b = 0; b < flat.blocks.size(); ++b) {
        const auto k = flat.block_cells[b];
        std::vector<std::vector<std::int64_t>> coords;
        std::vector<std::vector<std::byte>> values;
        {
            auto blk = container::open(flat.blocks[b], open_mode::read);
            for (std::size_t d = 0; d < flat.rank; ++d)
                coords.push_back(blk.read_region_as<std::int64_t>(coord_dataset(d), hyperslab::whole({ k })));
            for (const auto &a : schema.attributes) {
                values.emplace_back(k * width(a.type));
                blk.read_region(value_dataset(a), hyperslab::whole({ k }), values.back());
            }
        }
        for (std::uint64_t i = 0; i < k; ++i) {
            for (std::size_t d = 0; d < flat.rank; ++d) {
                const auto x = coords[d][i];
                if (x < 0 || static_cast<std::uint64_t>(x) >= schema.shape[d])
                    throw error(errc::out_of_bounds, "coordinate " + std::to_string(x) + " outside dimension "
                                + std::to_string(d) + " of " + to_string(schema.shape));
                pos[d] = static_cast<std::uint64_t>(x);
            }
            const auto cell = linear_offset(whole, pos);
            if (seen[cell])
                throw error(errc::duplicate_coordinate, "cell " + to_string(pos) + " appears twice in the flat array");
            seen[cell] = true;
            for (std::size_t a = 0; a < values.size(); ++a) {
                const auto w = width(schema.attributes[a].type);
                std::memcpy(dense.bytes(a).data() + cell * w, values[a].data() + i * w, w);
            }
            const auto l = grid.linearize(grid.chunk_of(pos));
            if (--missing[l] == 0)
                write_chunk(l);
        }
        track_output();
        const auto bytes = fs::file_size(flat.blocks[b]);
        fs::remove(flat.blocks[b]);
        tracker.release(bytes);
    }
    // partially covered chunks keep fill in their gaps
    for (std::uint64_t l = 0; l < missing.size(); ++l)
        if (missing[l] != 0 && missing[l] != grid.clipped_box(grid.delinearize(l)).cells())
            write_chunk(l);
    c.commit();
    track_output();
    tracker.output_bytes = out_size;
    flat.blocks.clear();
    flat.block_cells.clear();
}

} // namespace abridge
