#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "array.hpp"
#include "container.hpp"
#include "workers.hpp"

namespace abridge {

enum class write_mode { serial, partitioned, virtual_view };
enum class mapping_strategy { parallel, coordinator };

// One instance's share: src within its partition dataset, dst within the
// global array.
struct partition {
    hyperslab src;
    hyperslab dst;

    bool operator==(const partition &) const = default;
};

// Splits the chunk rows along dimension 0 into n contiguous slabs whose
// row counts differ by at most one (larger slabs first).
std::vector<partition> plan_partitions(const array_schema &schema, unsigned n_instances);

// `<prefix>.p<i>.abr`
std::filesystem::path partition_path(const std::filesystem::path &prefix, unsigned instance);

struct save_options {
    unsigned n_instances = 1;
    worker_kind workers = worker_kind::threads;
    // how long an instance waits for the view file lock (parallel strategy)
    std::chrono::milliseconds lock_timeout { 60000 };
    // how long the coordinator waits for every instance to report
    std::chrono::milliseconds barrier_timeout { 60000 };
    bool sync = true;
    scalar fill = 0.0;
    std::function<void()> on_workers_started;
    // Runs inside instance i after its partition is written and before it
    // touches the view or reports to the coordinator.
    std::function<void(unsigned)> before_report;
};

struct save_report {
    std::vector<std::filesystem::path> files;
    std::uint64_t cell_bytes = 0;
    std::uint64_t bytes_shuffled = 0;
    std::uint64_t mappings_written = 0;
    // seconds; per-instance phases report the slowest instance
    double shuffle_s = 0;
    double write_s = 0;
    double view_s = 0;
    double total_s = 0;
    // number of processes or threads that wrote cell bytes
    unsigned writers = 0;
};

// Every attribute becomes dataset `/<attr>`.
// Instances own chunks round-robin and ship them to the coordinator, which
// is the only writer and writes chunks in row-major order, so the output
// bytes do not depend on n_instances.
save_report save_serial(const mem_array &array, const std::filesystem::path &out, const save_options &opts = {});
// Each instance writes its slab's chunks into its own file holding datasets
// of the full global shape.
save_report save_partitioned(const mem_array &array, const std::filesystem::path &out_prefix,
                             const save_options &opts = {});
// Partition files (named after out without its `.abr` extension) hold
// slab-shaped datasets; out holds one virtual dataset per attribute.
save_report save_virtual(const mem_array &array, const std::filesystem::path &out, mapping_strategy strategy,
                         const save_options &opts = {});

struct export_report {
    std::uint64_t bytes = 0;
    double seconds = 0;
};

// One line per cell in row-major order, attributes comma separated, numbers
// in the shortest form that parses back to the same value.
export_report export_csv(const mem_array &array, const std::filesystem::path &out);
// Little-endian cells in row-major order, attributes interleaved per cell.
export_report export_binary(const mem_array &array, const std::filesystem::path &out);
// Per chunk (row-major) and per attribute (schema order): u64 chunk index,
// u32 segment count, then per segment u64 length, u8 same flag, payload.
// Chunks carry only the cells inside the shape.
export_report export_opaque(const mem_array &array, const std::filesystem::path &out);

mem_array import_csv(const std::filesystem::path &in, const array_schema &schema);
mem_array import_binary(const std::filesystem::path &in, const array_schema &schema);
mem_array import_opaque(const std::filesystem::path &in, const array_schema &schema);

} // namespace abridge
