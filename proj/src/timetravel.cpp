#include "abridge/timetravel.hpp"

#include <cstring>

namespace abridge {

namespace {

std::string latest_path(const std::string &name)
{
    return "/" + name;
}

void check_compatible(const dataset_meta &latest, const dense_view &data)
{
    if (latest.kind != dataset_kind::stored)
        throw error(errc::wrong_kind, latest.path + " must be a stored dataset to be versioned");
    if (latest.type != data.type || latest.shape != data.shape)
        throw error(errc::invalid_argument, "new contents (" + std::string { to_string(data.type) } + " "
                    + to_string(data.shape) + ") do not match " + latest.path);
}

void write_all_chunks(container &c, const std::string &path, const dense_view &data, const extents &chunk_shape,
                      const scalar &fill)
{
    const chunk_grid grid { data.shape, chunk_shape };
    std::vector<std::byte> buf(product(chunk_shape) * width(data.type));
    for (std::uint64_t l = 0; l < grid.chunk_count(); ++l) {
        const auto coord = grid.delinearize(l);
        gather_chunk(data, chunk_shape, coord, buf, fill);
        c.write_chunk(path, coord, buf);
    }
}

// Points mappings of the previous version that read from `/<name>` at the
// dataset that now holds those cells.
void repoint_previous(container &c, const std::string &name, std::uint64_t k, const std::string &target)
{
    if (k == 0)
        return;
    const auto prev = previous_version_path(k - 1);
    if (!c.contains(prev) || c.dataset(prev).kind != dataset_kind::virtual_view)
        return;
    auto maps = c.dataset(prev).mappings;
    bool touched = false;
    for (auto &m : maps)
        if (m.source_file == "." && m.source_dataset == latest_path(name)) {
            m.source_dataset = target;
            touched = true;
        }
    if (touched)
        c.recreate_virtual_dataset(prev, std::move(maps));
}

std::uint64_t create_first(container &c, const std::string &name, const dense_view &data, const extents &chunk_shape,
                           const scalar &fill)
{
    c.create_dataset(latest_path(name), data.type, data.shape, chunk_shape, fill);
    write_all_chunks(c, latest_path(name), data, chunk_shape, fill);
    c.commit();
    return 0;
}

} // namespace

std::string version_label(std::uint64_t k)
{
    return "V" + std::to_string(k);
}

std::string previous_version_path(std::uint64_t k)
{
    return "/PreviousVersions/" + version_label(k);
}

std::string version_data_path(std::uint64_t k)
{
    return "/VersionData/" + version_label(k);
}

std::vector<extents> detect_changed_chunks(const container &c, const std::string &path, const dense_view &data)
{
    const auto &meta = c.dataset(path);
    check_compatible(meta, data);
    const auto grid = meta.grid();
    const auto w = meta.elem_width();
    const auto whole = hyperslab::whole(meta.shape);
    std::vector<std::byte> old_cells, new_cells;
    std::vector<extents> changed;
    for (std::uint64_t l = 0; l < grid.chunk_count(); ++l) {
        const auto coord = grid.delinearize(l);
        const auto box = grid.clipped_box(coord);
        const auto bytes = box.cells() * w;
        old_cells.resize(bytes);
        c.read_region(path, box, old_cells);
        std::span<const std::byte> fresh;
        if (contiguous_in(box, whole)) {
            fresh = data.bytes.subspan(linear_offset(whole, box.start) * w, bytes);
        } else {
            new_cells.resize(bytes);
            copy_region(data.bytes, whole, new_cells, box, box, w);
            fresh = new_cells;
        }
        if (std::memcmp(old_cells.data(), fresh.data(), bytes) != 0)
            changed.push_back(coord);
    }
    return changed;
}

std::uint64_t save_version_full_copy(container &c, const std::string &name, const dense_view &data,
                                     const extents &chunk_shape, const scalar &fill)
{
    const auto path = latest_path(name);
    if (!c.contains(path))
        return create_first(c, name, data, chunk_shape, fill);
    const auto meta = c.dataset(path);
    check_compatible(meta, data);
    const auto k = latest_version(c, name);
    const auto retired = previous_version_path(k);
    c.rename_dataset(path, retired);
    // a virtual predecessor read its unchanged chunks from /<name>; those
    // cells now live under the retired name
    repoint_previous(c, name, k, retired);
    c.create_dataset(path, meta.type, meta.shape, meta.chunk_shape, meta.fill);
    write_all_chunks(c, path, data, meta.chunk_shape, meta.fill);
    c.commit();
    return k + 1;
}

std::uint64_t save_version_chunk_mosaic(container &c, const std::string &name, const dense_view &data,
                                        const extents &chunk_shape, const scalar &fill)
{
    const auto path = latest_path(name);
    if (!c.contains(path))
        return create_first(c, name, data, chunk_shape, fill);
    const auto meta = c.dataset(path);
    const auto changed = detect_changed_chunks(c, path, data);
    const auto k = latest_version(c, name);
    const auto grid = meta.grid();

    // superseded chunks keep their bytes; the new version data only takes
    // over the extents, so nothing is copied
    const auto store = version_data_path(k);
    c.create_dataset(store, meta.type, meta.shape, meta.chunk_shape, meta.fill);
    for (const auto &coord : changed)
        c.share_chunk(store, path, coord);

    std::vector<mapping> maps;
    std::size_t next_changed = 0;
    for (std::uint64_t l = 0; l < grid.chunk_count(); ++l) {
        const auto coord = grid.delinearize(l);
        const auto box = grid.clipped_box(coord);
        const bool is_changed = next_changed < changed.size() && changed[next_changed] == coord;
        if (is_changed)
            ++next_changed;
        maps.push_back(mapping { ".", is_changed ? store : path, box, box });
    }
    c.create_virtual_dataset(previous_version_path(k), meta.type, meta.shape, meta.fill, std::move(maps));
    repoint_previous(c, name, k, previous_version_path(k));

    std::vector<std::byte> buf(product(meta.chunk_shape) * meta.elem_width());
    for (const auto &coord : changed) {
        gather_chunk(data, meta.chunk_shape, coord, buf, meta.fill);
        c.write_chunk(path, coord, buf);
    }
    c.commit();
    return k + 1;
}

std::uint64_t latest_version(const container &c, const std::string &name)
{
    if (!c.contains(latest_path(name)))
        throw error(errc::not_found, "no versioned dataset " + latest_path(name));
    std::uint64_t k = 0;
    while (c.contains(previous_version_path(k)))
        ++k;
    return k;
}

std::vector<std::uint64_t> list_versions(const container &c, const std::string &name)
{
    std::vector<std::uint64_t> out(latest_version(c, name) + 1);
    for (std::uint64_t k = 0; k < out.size(); ++k)
        out[k] = k;
    return out;
}

std::string version_path(const container &c, const std::string &name, std::uint64_t k)
{
    const auto latest = latest_version(c, name);
    if (k > latest)
        throw error(errc::not_found, latest_path(name) + " has no version " + version_label(k));
    return k == latest ? latest_path(name) : previous_version_path(k);
}

std::vector<std::byte> read_version(const container &c, const std::string &name, std::uint64_t k)
{
    const auto path = version_path(c, name, k);
    const auto &meta = c.dataset(path);
    std::vector<std::byte> out(product(meta.shape) * meta.elem_width());
    c.read_region(path, hyperslab::whole(meta.shape), out);
    return out;
}

} // namespace abridge
