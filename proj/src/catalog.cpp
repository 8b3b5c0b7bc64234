#include "abridge/catalog.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "abridge/container.hpp"
#include "abridge/error.hpp"
#include "abridge/file_lock.hpp"
#include "json.hpp"

namespace abridge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::chrono::milliseconds catalog_lock_timeout { 30000 };

json schema_to_json(const array_schema &s)
{
    json attrs = json::array();
    for (const auto &a : s.attributes)
        attrs.push_back(json { { "name", a.name }, { "dtype", std::string { to_string(a.type) } } });
    return json { { "shape", s.shape }, { "chunk_shape", s.chunk_shape }, { "attributes", attrs } };
}

array_schema schema_from_json(const std::string &name, const json &j)
{
    array_schema s;
    s.name = name;
    s.shape = j.at("shape").get<extents>();
    s.chunk_shape = j.at("chunk_shape").get<extents>();
    for (const auto &a : j.at("attributes"))
        s.attributes.push_back(attribute { a.at("name").get<std::string>(), parse_dtype(a.at("dtype").get<std::string>()) });
    return s;
}

} // namespace

std::size_t array_schema::attribute_index(const std::string &attr) const
{
    for (std::size_t i = 0; i < attributes.size(); ++i)
        if (attributes[i].name == attr)
            return i;
    throw error(errc::not_found, "array " + name + " has no attribute " + attr);
}

void validate(const array_schema &s)
{
    if (s.shape.empty())
        throw error(errc::invalid_argument, "array " + s.name + " needs rank >= 1");
    if (s.chunk_shape.size() != s.shape.size())
        throw error(errc::invalid_argument, "array " + s.name + ": chunk rank differs from shape rank");
    for (std::size_t d = 0; d < s.rank(); ++d)
        if (s.chunk_shape[d] == 0 || s.shape[d] == 0)
            throw error(errc::invalid_argument, "array " + s.name + ": dimensions must be >= 1");
    if (s.attributes.empty())
        throw error(errc::invalid_argument, "array " + s.name + " has no attributes");
    std::set<std::string> names;
    for (const auto &a : s.attributes)
        if (a.name.empty() || !names.insert(a.name).second)
            throw error(errc::invalid_argument, "array " + s.name + ": bad or duplicate attribute '" + a.name + "'");
}

std::vector<std::uint64_t> assigned_chunk_indices(const chunk_grid &grid, unsigned n_instances, unsigned instance,
                                                  const chunk_assigner &assign)
{
    if (n_instances == 0 || instance >= n_instances)
        throw error(errc::invalid_argument, "instance " + std::to_string(instance) + " of " + std::to_string(n_instances));
    std::vector<std::uint64_t> cp;
    const auto n = grid.chunk_count();
    for (std::uint64_t l = 0; l < n; ++l)
        if (assign(l, n_instances) == instance)
            cp.push_back(l);
    return cp;
}

std::vector<extents> assign_chunks(const array_schema &schema, unsigned n_instances, unsigned instance,
                                   const chunk_assigner &assign)
{
    const auto grid = schema.grid();
    std::vector<extents> out;
    for (auto l : assigned_chunk_indices(grid, n_instances, instance, assign))
        out.push_back(grid.delinearize(l));
    return out;
}

std::uint64_t chunk_linearize(const array_schema &schema, const extents &chunk_coord)
{
    return schema.grid().linearize(chunk_coord);
}

catalog catalog::open(const fs::path &file)
{
    catalog c { file };
    c.reload();
    return c;
}

void catalog::reload()
{
    _arrays.clear();
    if (!fs::exists(_file))
        return;
    std::ifstream in { _file };
    if (!in)
        throw error(errc::io, "cannot read catalog " + _file.string());
    try {
        const auto doc = json::parse(in);
        for (const auto &[name, e] : doc.at("arrays").items()) {
            catalog_entry entry;
            entry.schema = schema_from_json(name, e.at("schema"));
            for (const auto &[attr, b] : e.at("bindings").items())
                entry.bindings.emplace(attr, binding { b.at(0).get<std::string>(), b.at(1).get<std::string>() });
            _arrays.emplace(name, std::move(entry));
        }
    } catch (const error &) {
        throw;
    } catch (const std::exception &e) {
        throw error(errc::bad_metadata, "catalog " + _file.string() + ": " + e.what());
    }
}

void catalog::persist() const
{
    json arrays = json::object();
    for (const auto &[name, e] : _arrays) {
        json b = json::object();
        for (const auto &[attr, bind] : e.bindings)
            b[attr] = json::array({ bind.file.string(), bind.dataset });
        arrays[name] = json { { "schema", schema_to_json(e.schema) }, { "bindings", b } };
    }
    const auto tmp = fs::path { _file.string() + ".tmp" };
    {
        std::ofstream out { tmp, std::ios::trunc };
        out << json { { "arrays", arrays } }.dump(2) << '\n';
        if (!out)
            throw error(errc::io, "cannot write catalog " + tmp.string());
    }
    fs::rename(tmp, _file);
}

void catalog::register_external_array(const std::string &name, array_schema schema,
                                      std::map<std::string, binding> bindings)
{
    schema.name = name;
    validate(schema);
    if (bindings.size() != schema.attributes.size())
        throw error(errc::invalid_argument, "array " + name + " has " + std::to_string(schema.attributes.size())
                    + " attributes but " + std::to_string(bindings.size()) + " bindings");
    for (const auto &a : schema.attributes)
        if (!bindings.contains(a.name))
            throw error(errc::invalid_argument, "attribute " + a.name + " of " + name + " is not bound");
    auto lock = sidecar_lock::acquire(_file, catalog_lock_timeout);
    reload();
    if (_arrays.contains(name))
        throw error(errc::already_exists, "array " + name + " is already registered");
    _arrays.emplace(name, catalog_entry { std::move(schema), std::move(bindings) });
    persist();
}

const catalog_entry &catalog::entry(const std::string &name) const
{
    auto it = _arrays.find(name);
    if (it == _arrays.end())
        throw error(errc::not_found, "no array named " + name);
    return it->second;
}

std::vector<std::string> catalog::names() const
{
    std::vector<std::string> out;
    for (const auto &[n, e] : _arrays)
        out.push_back(n);
    return out;
}

fs::path catalog::resolve(const fs::path &file) const
{
    if (file.is_absolute())
        return file;
    return _file.parent_path() / file;
}

lookup_result catalog::lookup(const std::string &name, const std::string &attr)
{
    const auto &e = entry(name);
    e.schema.attribute_index(attr);
    const auto &b = e.bindings.at(attr);
    lookup_result r { resolve(b.file), b.dataset, e.schema };
    extents actual;
    {
        auto c = container::open(r.file, open_mode::read);
        actual = c.dataset(b.dataset).shape;
    }
    if (actual != r.schema.shape) {
        if (actual.size() != r.schema.rank())
            throw error(errc::invalid_argument, b.dataset + " rank changed behind the catalog");
        auto lock = sidecar_lock::acquire(_file, catalog_lock_timeout);
        reload();
        auto &fresh = _arrays.at(name);
        fresh.schema.shape = actual;
        persist();
        r.schema = fresh.schema;
    }
    return r;
}

} // namespace abridge
