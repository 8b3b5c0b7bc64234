#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "element_type.hpp"
#include "hyperslab.hpp"

namespace abridge {

struct attribute {
    std::string name;
    dtype type = dtype::f64;

    bool operator==(const attribute &) const = default;
};

// Rank, dimension lengths, chunking and attributes of an array.
struct array_schema {
    std::string name;
    extents shape;
    extents chunk_shape;
    std::vector<attribute> attributes;

    std::size_t rank() const noexcept { return shape.size(); }
    chunk_grid grid() const { return chunk_grid { shape, chunk_shape }; }
    // throws errc::not_found
    std::size_t attribute_index(const std::string &attr) const;

    bool operator==(const array_schema &) const = default;
};

// throws errc::invalid_argument
void validate(const array_schema &schema);

// Where one attribute of an external array lives.
struct binding {
    std::filesystem::path file;
    std::string dataset;

    bool operator==(const binding &) const = default;
};

struct catalog_entry {
    array_schema schema;
    std::map<std::string, binding> bindings;
};

struct lookup_result {
    // resolved against the catalog's directory
    std::filesystem::path file;
    std::string dataset;
    array_schema schema;
};

// Chunk-to-instance assignment function over row-major linear chunk indices.
using chunk_assigner = std::function<unsigned(std::uint64_t linear_index, unsigned n_instances)>;

inline unsigned round_robin(std::uint64_t linear_index, unsigned n_instances)
{
    return static_cast<unsigned>(linear_index % n_instances);
}

// Linear indices of the chunks owned by instance, ascending.
std::vector<std::uint64_t> assigned_chunk_indices(const chunk_grid &grid, unsigned n_instances, unsigned instance,
                                                  const chunk_assigner &assign = round_robin);
// Chunk coordinates owned by instance, ascending by linear index.
std::vector<extents> assign_chunks(const array_schema &schema, unsigned n_instances, unsigned instance,
                                   const chunk_assigner &assign = round_robin);
std::uint64_t chunk_linearize(const array_schema &schema, const extents &chunk_coord);

// Registry of external arrays, persisted as one JSON document:
// {"arrays": {"<name>": {"schema": {...}, "bindings": {"<attr>": ["file", "dataset"]}}}}
// Mutations are serialized through the advisory `<file>.lock`.
class catalog {
public:
    static catalog open(const std::filesystem::path &file);

    const std::filesystem::path &file() const noexcept { return _file; }

    // Binding targets are not checked; they are resolved on lookup.
    void register_external_array(const std::string &name, array_schema schema,
                                 std::map<std::string, binding> bindings);

    // Reads the bound dataset's shape from its container; a shape that
    // changed behind the catalog's back is written back to the catalog.
    lookup_result lookup(const std::string &name, const std::string &attr);

    bool contains(const std::string &name) const { return _arrays.contains(name); }
    const catalog_entry &entry(const std::string &name) const;
    std::vector<std::string> names() const;
    std::filesystem::path resolve(const std::filesystem::path &file) const;

private:
    explicit catalog(std::filesystem::path file) : _file { std::move(file) } {}
    void reload();
    void persist() const;

    std::filesystem::path _file;
    std::map<std::string, catalog_entry> _arrays;
};

} // namespace abridge
