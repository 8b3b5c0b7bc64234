#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "element_type.hpp"
#include "error.hpp"
#include "file_lock.hpp"
#include "hyperslab.hpp"

namespace abridge {

// Single-file chunked array container.
//
// Layout: [0..8) "ABRG0001", [8..16) zeros, chunk data extents, metadata JSON,
// 8-byte LE metadata length, "ABRGEND1". The trailing footer is the only
// metadata authority; chunk extents are never modified once committed.
//
// One writer per file (advisory `<path>.lock`); any number of readers.
// A reader sees the footer that was committed when it opened the file.

inline constexpr std::string_view header_magic = "ABRG0001";
inline constexpr std::string_view end_magic = "ABRGEND1";
inline constexpr std::uint64_t header_size = 16;
inline constexpr std::uint64_t trailer_size = 16;

enum class open_mode { read, write };
enum class dataset_kind { stored, virtual_view };

constexpr std::string_view to_string(dataset_kind k) noexcept
{
    return k == dataset_kind::stored ? "stored" : "virtual";
}

// Places src cells of source_dataset (in source_file) at dst of the virtual
// dataset. source_file "." names the file holding the virtual dataset.
struct mapping {
    std::string source_file;
    std::string source_dataset;
    hyperslab src;
    hyperslab dst;

    bool operator==(const mapping &) const = default;
};

struct chunk_extent {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    bool operator==(const chunk_extent &) const = default;
};

struct dataset_meta {
    std::string path;
    dataset_kind kind = dataset_kind::stored;
    dtype type = dtype::f64;
    extents shape;
    extents chunk_shape; // stored only
    scalar fill = 0.0;
    std::map<extents, chunk_extent> chunks; // stored only
    std::vector<mapping> mappings; // virtual only

    chunk_grid grid() const { return chunk_grid { shape, chunk_shape }; }
    std::size_t elem_width() const noexcept { return width(type); }
};

struct dataset_info {
    std::string path;
    dataset_kind kind;
    extents shape;
    dtype type;

    bool operator==(const dataset_info &) const = default;
};

struct container_options {
    // create(): replace an existing file
    bool truncate = false;
    // write-mode opens: how long to wait for another writer to go away
    std::chrono::milliseconds lock_timeout { 0 };
    // commit(): fdatasync before returning
    bool sync_on_commit = true;
};

class container {
public:
    static container create(const std::filesystem::path &path, const container_options &opts = {});
    static container open(const std::filesystem::path &path, open_mode mode, const container_options &opts = {});

    container(container &&) noexcept;
    container &operator=(container &&) noexcept;
    ~container();

    const std::filesystem::path &path() const noexcept { return _path; }
    open_mode mode() const noexcept { return _mode; }

    // Publishes the in-memory metadata as the new footer.
    void commit();

    void create_dataset(const std::string &path, dtype type, const extents &shape,
                        const extents &chunk_shape, scalar fill);
    void create_virtual_dataset(const std::string &path, dtype type, const extents &shape, scalar fill,
                                std::vector<mapping> mappings);
    // Virtual datasets cannot be edited; the list is replaced wholesale.
    void recreate_virtual_dataset(const std::string &path, std::vector<mapping> mappings);
    void rename_dataset(const std::string &old_path, const std::string &new_path);

    // cells: dense row-major buffer of the full (padded) chunk
    void write_chunk(const std::string &path, const extents &chunk_coord, std::span<const std::byte> cells);
    // Makes dst_path's chunk at coord refer to the bytes currently stored for
    // src_path at the same coord, without copying. Returns false if src has no
    // stored chunk there. Both datasets must be stored with equal dtype and
    // chunk shape.
    bool share_chunk(const std::string &dst_path, const std::string &src_path, const extents &chunk_coord);

    void read_chunk(const std::string &path, const extents &chunk_coord, std::span<std::byte> out) const;
    void read_region(const std::string &path, const hyperslab &region, std::span<std::byte> out) const;

    template<element T>
    std::vector<T> read_region_as(const std::string &path, const hyperslab &region) const
    {
        check_type(path, dtype_of<T>());
        std::vector<T> out(region.cells());
        read_region(path, region, std::as_writable_bytes(std::span { out }));
        return out;
    }

    template<element T>
    void write_chunk_as(const std::string &path, const extents &chunk_coord, std::span<const T> cells)
    {
        check_type(path, dtype_of<T>());
        write_chunk(path, chunk_coord, std::as_bytes(cells));
    }

    // Lexicographic by path.
    std::vector<dataset_info> list_datasets() const;
    // Groups implied by dataset paths, e.g. "/PreviousVersions".
    std::vector<std::string> list_groups() const;
    bool contains(const std::string &path) const;
    const dataset_meta &dataset(const std::string &path) const;

    // Number of mappings written by create/recreate through this handle.
    std::uint64_t mapping_writes() const noexcept { return _mapping_writes; }
    // Stored chunks fetched from disk through this handle.
    std::uint64_t chunk_reads() const noexcept { return _chunk_reads; }
    // Cell bytes that went through an intermediate buffer instead of being
    // read straight into the caller's destination.
    std::uint64_t staged_bytes() const noexcept { return _staged_bytes; }
    // Bytes in the data region (header excluded, footer excluded).
    std::uint64_t data_bytes() const noexcept { return _data_end - header_size; }
    // Offset of the metadata document as currently laid out on disk. The
    // committed footer always sits directly after the data region.
    std::uint64_t metadata_offset() const noexcept { return _data_end; }

    // Serialized metadata document for the current in-memory state.
    std::string metadata_json() const;

private:
    struct resolve_context;

    container(std::filesystem::path path, open_mode mode, container_options opts);

    void load_footer();
    void require_writable() const;
    void check_type(const std::string &path, dtype t) const;
    dataset_meta &mutable_dataset(const std::string &path);
    void check_new_path(const std::string &path) const;
    void validate_mappings(const dataset_meta &meta) const;

    void read_impl(const std::string &path, const hyperslab &region, std::span<std::byte> out,
                   resolve_context &ctx) const;
    void read_stored(const dataset_meta &meta, const hyperslab &region, std::span<std::byte> out) const;
    void read_virtual(const dataset_meta &meta, const hyperslab &region, std::span<std::byte> out,
                      resolve_context &ctx) const;
    void pread_all(std::span<std::byte> out, std::uint64_t offset) const;
    void pwrite_all(std::span<const std::byte> in, std::uint64_t offset);

    std::filesystem::path _path;
    open_mode _mode;
    container_options _opts;
    sidecar_lock _lock;
    unique_fd _fd;
    std::map<std::string, dataset_meta> _datasets;
    // footer bytes (metadata + trailer) as last committed
    std::string _committed_footer;
    // end of the data region, including extents written since the last commit
    std::uint64_t _data_end = header_size;
    std::uint64_t _mapping_writes = 0;
    mutable std::uint64_t _chunk_reads = 0;
    mutable std::uint64_t _staged_bytes = 0;
};

// "/a/b" style names: leading slash, non-empty components, no trailing slash.
bool valid_dataset_path(std::string_view path) noexcept;

} // namespace abridge
