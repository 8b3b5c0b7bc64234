#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "catalog.hpp"
#include "hyperslab.hpp"

namespace abridge {

enum class agg_fn { sum, count, min, max, avg };

agg_fn parse_agg_fn(const std::string &s);
std::string_view to_string(agg_fn f) noexcept;

// attr <op> threshold, e.g. "E>2.0". Comparisons are IEEE: NaN never passes.
struct cell_filter {
    enum class op { gt, ge, lt, le, eq, ne };
    std::string attr;
    op cmp = op::gt;
    double threshold = 0;

    static cell_filter parse(const std::string &text);
    bool pass(double v) const noexcept;
};

struct aggregate_spec {
    agg_fn fn = agg_fn::sum;
    std::optional<cell_filter> filter;
    // group cells into blocks of this shape; edge blocks are partial
    std::optional<extents> grid;
    std::size_t tile = 4096;
};

// Running aggregate of one output cell. The floating sum is compensated
// (sum + comp), so it stays accurate over millions of cells in any order.
// Integer attributes also keep an exact integer sum and extremes.
struct partial_aggregate {
    double sum = 0;
    double comp = 0;
    std::uint64_t count = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
    std::int64_t isum = 0;
    std::int64_t imin = std::numeric_limits<std::int64_t>::max();
    std::int64_t imax = std::numeric_limits<std::int64_t>::min();

    void add(double v) noexcept;
    void add_int(std::int64_t v) noexcept;
    void add_run(double v, std::uint64_t n) noexcept;
    void add_int_run(std::int64_t v, std::uint64_t n) noexcept;
    void merge(const partial_aggregate &o) noexcept;
    double total() const noexcept { return sum + comp; }

    bool operator==(const partial_aggregate &) const = default;
};

struct phase_timings {
    double coordinator_s = 0;
    double scan_s = 0;
    double aggregate_s = 0;
    double redistribute_s = 0;
};

struct query_result {
    agg_fn fn = agg_fn::sum;
    // exact integer results are available when the value is one integer attribute
    bool integral = false;
    // per output cell, row-major over grid_shape ({1} without a grid)
    extents grid_shape;
    std::vector<partial_aggregate> cells;
    unsigned instances = 1;
    phase_timings timings;
    std::uint64_t bytes_redistributed = 0;
    // stored chunks fetched by all instances' scans
    std::uint64_t chunk_reads = 0;

    // nullopt for an empty avg/min/max cell
    std::optional<double> value(std::size_t cell = 0) const;
    std::optional<std::int64_t> int_value(std::size_t cell = 0) const;
};

// Value of a cell is the attribute itself for one attribute, else the
// Euclidean norm of the attributes. The filter attribute may be any
// attribute of the array.
query_result aggregate(catalog &cat, const std::string &array, const std::vector<std::string> &attrs,
                       const aggregate_spec &spec, unsigned n_instances);
// Only chunks intersecting region are read; cells outside it are ignored.
query_result aggregate_region(catalog &cat, const std::string &array, const std::vector<std::string> &attrs,
                              const hyperslab &region, const aggregate_spec &spec, unsigned n_instances);

std::string timings_csv_header();
std::string timings_csv_row(const query_result &r);

// Disk bytes held by the load path over time.
class staging_tracker {
public:
    void add(std::uint64_t bytes) noexcept;
    void release(std::uint64_t bytes) noexcept;

    std::uint64_t current() const noexcept { return _current; }
    std::uint64_t peak() const noexcept { return _peak; }

    std::uint64_t input_bytes = 0;
    // largest size the flat stage reached
    std::uint64_t flat_bytes = 0;
    std::uint64_t output_bytes = 0;

private:
    std::uint64_t _current = 0;
    std::uint64_t _peak = 0;
};

// One-dimensional staging table: r i64 coordinate attributes plus the value
// attributes, stored as a sequence of block containers. Each block holds
// datasets /coord<d> and /<attr>, so consumed blocks can be deleted.
struct flat_array {
    array_schema values; // attributes and the shape coordinates refer to
    std::size_t rank = 0;
    std::uint64_t cells = 0;
    std::vector<std::filesystem::path> blocks;
    std::vector<std::uint64_t> block_cells;
};

// Input in the binary export layout of the schema's attributes; coordinates
// are synthesized in row-major order over the schema shape.
flat_array load_flat(const std::filesystem::path &binary_in, const array_schema &schema,
                     const std::filesystem::path &flat_prefix, staging_tracker &tracker,
                     std::uint64_t block_cells = 1 << 20);
// Builds stored datasets /<attr> in out from the flat table, deleting each
// block once it has been placed.
void redimension(flat_array &flat, const std::filesystem::path &out, staging_tracker &tracker);

} // namespace abridge
