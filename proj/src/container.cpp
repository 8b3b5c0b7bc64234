#include "abridge/container.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <set>
#include <sys/stat.h>
#include <unistd.h>

#include "json.hpp"

namespace abridge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string sys_error(const std::string &what)
{
    return what + ": " + std::strerror(errno);
}

std::string chunk_key(const extents &coord)
{
    std::string s;
    for (std::size_t i = 0; i < coord.size(); ++i) {
        if (i)
            s += ',';
        s += std::to_string(coord[i]);
    }
    return s;
}

extents parse_chunk_key(const std::string &key)
{
    extents out;
    std::size_t pos = 0;
    while (pos <= key.size()) {
        const auto comma = key.find(',', pos);
        const auto part = key.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
            throw error(errc::bad_metadata, "bad chunk key '" + key + "'");
        out.push_back(std::stoull(part));
        if (comma == std::string::npos)
            break;
        pos = comma + 1;
    }
    return out;
}

json slab_to_json(const hyperslab &s)
{
    return json { { "start", s.start }, { "count", s.count } };
}

hyperslab slab_from_json(const json &j)
{
    return hyperslab { j.at("start").get<extents>(), j.at("count").get<extents>() };
}

json fill_to_json(dtype t, const scalar &v)
{
    if (is_integral(t))
        return scalar_as<std::int64_t>(v);
    return to_double(v);
}

scalar fill_from_json(dtype t, const json &j)
{
    if (is_integral(t))
        return j.get<std::int64_t>();
    return j.get<double>();
}

json dataset_to_json(const dataset_meta &m)
{
    json d;
    d["kind"] = std::string { to_string(m.kind) };
    d["dtype"] = std::string { to_string(m.type) };
    d["shape"] = m.shape;
    d["fill"] = fill_to_json(m.type, m.fill);
    if (m.kind == dataset_kind::stored) {
        d["chunk_shape"] = m.chunk_shape;
        json chunks = json::object();
        for (const auto &[coord, ext] : m.chunks)
            chunks[chunk_key(coord)] = json::array({ ext.offset, ext.length });
        d["chunks"] = std::move(chunks);
    } else {
        json maps = json::array();
        for (const auto &mp : m.mappings)
            maps.push_back(json { { "file", mp.source_file },
                                  { "dataset", mp.source_dataset },
                                  { "src", slab_to_json(mp.src) },
                                  { "dst", slab_to_json(mp.dst) } });
        d["mappings"] = std::move(maps);
    }
    return d;
}

dataset_meta dataset_from_json(const std::string &path, const json &d)
{
    dataset_meta m;
    m.path = path;
    const auto kind = d.at("kind").get<std::string>();
    if (kind == "stored")
        m.kind = dataset_kind::stored;
    else if (kind == "virtual")
        m.kind = dataset_kind::virtual_view;
    else
        throw error(errc::bad_metadata, "unknown dataset kind '" + kind + "'");
    m.type = parse_dtype(d.at("dtype").get<std::string>());
    m.shape = d.at("shape").get<extents>();
    m.fill = fill_from_json(m.type, d.at("fill"));
    if (m.kind == dataset_kind::stored) {
        m.chunk_shape = d.at("chunk_shape").get<extents>();
        for (const auto &[key, ext] : d.at("chunks").items())
            m.chunks.emplace(parse_chunk_key(key), chunk_extent { ext.at(0).get<std::uint64_t>(), ext.at(1).get<std::uint64_t>() });
    } else {
        for (const auto &mp : d.at("mappings"))
            m.mappings.push_back(mapping { mp.at("file").get<std::string>(), mp.at("dataset").get<std::string>(),
                                           slab_from_json(mp.at("src")), slab_from_json(mp.at("dst")) });
    }
    return m;
}

std::string make_footer(const std::string &meta)
{
    std::string f = meta;
    std::array<char, 8> len {};
    const std::uint64_t n = meta.size();
    std::memcpy(len.data(), &n, sizeof n);
    f.append(len.data(), len.size());
    f.append(end_magic);
    return f;
}

std::string canonical_key(const fs::path &p)
{
    std::error_code ec;
    auto c = fs::weakly_canonical(p, ec);
    return ec ? fs::absolute(p).lexically_normal().string() : c.string();
}

} // namespace

bool valid_dataset_path(std::string_view path) noexcept
{
    if (path.size() < 2 || path.front() != '/' || path.back() == '/')
        return false;
    return path.find("//") == std::string_view::npos;
}

struct container::resolve_context {
    std::vector<std::string> stack;
    std::map<std::string, std::unique_ptr<container>> opened;
};

container::container(fs::path path, open_mode mode, container_options opts)
    : _path { std::move(path) }, _mode { mode }, _opts { opts }
{}

container::container(container &&) noexcept = default;
container &container::operator=(container &&) noexcept = default;
container::~container() = default;

container container::create(const fs::path &path, const container_options &opts)
{
    if (!opts.truncate && fs::exists(path))
        throw error(errc::already_exists, path.string() + " already exists");
    container c { path, open_mode::write, opts };
    c._lock = sidecar_lock::acquire(path, opts.lock_timeout);
    // Built under a private name and published complete, so a reader never
    // opens a file that lacks its header or footer.
    const auto staging = fs::path { path.string() + ".creating-" + std::to_string(::getpid()) };
    c._fd = unique_fd { ::open(staging.c_str(), O_RDWR | O_CREAT | O_TRUNC | O_CLOEXEC, 0644) };
    if (!c._fd)
        throw error(errc::io, sys_error("create " + staging.string()));
    try {
        std::array<std::byte, header_size> header {};
        std::memcpy(header.data(), header_magic.data(), header_magic.size());
        c.pwrite_all(header, 0);
        c._data_end = header_size;
        c._committed_footer.clear();
        c.commit();
        if (opts.truncate) {
            if (::rename(staging.c_str(), path.c_str()) != 0)
                throw error(errc::io, sys_error("publish " + path.string()));
        } else {
            if (::link(staging.c_str(), path.c_str()) != 0) {
                if (errno == EEXIST)
                    throw error(errc::already_exists, path.string() + " already exists");
                throw error(errc::io, sys_error("publish " + path.string()));
            }
            ::unlink(staging.c_str());
        }
    } catch (...) {
        ::unlink(staging.c_str());
        throw;
    }
    return c;
}

container container::open(const fs::path &path, open_mode mode, const container_options &opts)
{
    container c { path, mode, opts };
    if (mode == open_mode::write)
        c._lock = sidecar_lock::acquire(path, opts.lock_timeout);
    c._fd = unique_fd { ::open(path.c_str(), (mode == open_mode::write ? O_RDWR : O_RDONLY) | O_CLOEXEC) };
    if (!c._fd) {
        if (errno == ENOENT)
            throw error(errc::not_found, path.string() + " does not exist");
        throw error(errc::io, sys_error("open " + path.string()));
    }
    c.load_footer();
    return c;
}

void container::load_footer()
{
    flock_guard g { _fd.get(), flock_guard::kind::shared };
    struct stat st {};
    if (::fstat(_fd.get(), &st) != 0)
        throw error(errc::io, sys_error("stat " + _path.string()));
    const auto size = static_cast<std::uint64_t>(st.st_size);
    if (size < header_size + trailer_size)
        throw error(errc::truncated, _path.string() + " is too short to hold a footer");
    std::array<std::byte, header_size> head {};
    pread_all(head, 0);
    if (std::memcmp(head.data(), header_magic.data(), header_magic.size()) != 0)
        throw error(errc::bad_magic, _path.string() + " has no container header");
    std::array<std::byte, trailer_size> tail {};
    pread_all(tail, size - trailer_size);
    if (std::memcmp(tail.data() + 8, end_magic.data(), end_magic.size()) != 0)
        throw error(errc::bad_magic, _path.string() + " does not end with the footer magic");
    std::uint64_t meta_len = 0;
    std::memcpy(&meta_len, tail.data(), sizeof meta_len);
    if (meta_len > size - header_size - trailer_size)
        throw error(errc::truncated, _path.string() + " footer length exceeds file size");
    const std::uint64_t meta_off = size - trailer_size - meta_len;
    std::string meta(meta_len, '\0');
    pread_all(std::as_writable_bytes(std::span { meta.data(), meta.size() }), meta_off);

    std::map<std::string, dataset_meta> datasets;
    try {
        const auto doc = json::parse(meta);
        if (!doc.is_object())
            throw error(errc::bad_metadata, "metadata is not an object");
        if (doc.contains("datasets")) {
            for (const auto &[p, d] : doc.at("datasets").items()) {
                if (!valid_dataset_path(p))
                    throw error(errc::bad_metadata, "bad dataset path '" + p + "'");
                auto m = dataset_from_json(p, d);
                for (const auto &[coord, ext] : m.chunks)
                    if (ext.offset < header_size || ext.offset + ext.length > meta_off)
                        throw error(errc::bad_metadata, "chunk extent of " + p + " outside the data region");
                datasets.emplace(p, std::move(m));
            }
        }
    } catch (const error &) {
        throw;
    } catch (const std::exception &e) {
        throw error(errc::bad_metadata, _path.string() + ": " + e.what());
    }
    _datasets = std::move(datasets);
    _data_end = meta_off;
    _committed_footer = make_footer(meta);
}

std::string container::metadata_json() const
{
    if (_datasets.empty())
        return "{}";
    json ds = json::object();
    for (const auto &[p, m] : _datasets)
        ds[p] = dataset_to_json(m);
    return json { { "datasets", std::move(ds) } }.dump();
}

void container::commit()
{
    require_writable();
    auto footer = make_footer(metadata_json());
    {
        flock_guard g { _fd.get(), flock_guard::kind::exclusive };
        pwrite_all(std::as_bytes(std::span { footer.data(), footer.size() }), _data_end);
        if (::ftruncate(_fd.get(), static_cast<off_t>(_data_end + footer.size())) != 0)
            throw error(errc::io, sys_error("truncate " + _path.string()));
        if (_opts.sync_on_commit && ::fdatasync(_fd.get()) != 0)
            throw error(errc::io, sys_error("sync " + _path.string()));
    }
    _committed_footer = std::move(footer);
}

void container::require_writable() const
{
    if (_mode != open_mode::write || !_fd)
        throw error(errc::invalid_argument, _path.string() + " is not open for writing");
}

bool container::contains(const std::string &path) const
{
    return _datasets.contains(path);
}

const dataset_meta &container::dataset(const std::string &path) const
{
    auto it = _datasets.find(path);
    if (it == _datasets.end())
        throw error(errc::not_found, "no dataset " + path + " in " + _path.string());
    return it->second;
}

dataset_meta &container::mutable_dataset(const std::string &path)
{
    auto it = _datasets.find(path);
    if (it == _datasets.end())
        throw error(errc::not_found, "no dataset " + path + " in " + _path.string());
    return it->second;
}

void container::check_type(const std::string &path, dtype t) const
{
    const auto &m = dataset(path);
    if (m.type != t)
        throw error(errc::invalid_argument, path + " holds " + std::string { to_string(m.type) }
                    + ", not " + std::string { to_string(t) });
}

void container::check_new_path(const std::string &path) const
{
    if (!valid_dataset_path(path))
        throw error(errc::invalid_argument, "bad dataset path '" + path + "'");
    if (_datasets.contains(path))
        throw error(errc::already_exists, "dataset " + path + " already exists");
    // a dataset name cannot double as a group name
    const auto as_group = path + "/";
    for (const auto &[p, m] : _datasets) {
        if (p.starts_with(as_group))
            throw error(errc::already_exists, path + " is a group");
        if (path.starts_with(p + "/"))
            throw error(errc::already_exists, p + " is a dataset, not a group");
    }
}

void container::create_dataset(const std::string &path, dtype type, const extents &shape,
                               const extents &chunk_shape, scalar fill)
{
    require_writable();
    check_new_path(path);
    if (shape.empty() || chunk_shape.size() != shape.size())
        throw error(errc::invalid_argument, "chunk rank " + std::to_string(chunk_shape.size())
                    + " does not match shape rank " + std::to_string(shape.size()));
    if (std::any_of(chunk_shape.begin(), chunk_shape.end(), [](auto c) { return c == 0; }))
        throw error(errc::invalid_argument, "chunk dimensions must be >= 1");
    dataset_meta m;
    m.path = path;
    m.kind = dataset_kind::stored;
    m.type = type;
    m.shape = shape;
    m.chunk_shape = chunk_shape;
    m.fill = fill;
    _datasets.emplace(path, std::move(m));
}

void container::validate_mappings(const dataset_meta &meta) const
{
    for (const auto &mp : meta.mappings) {
        if (!well_formed(mp.src) || !well_formed(mp.dst) || mp.src.rank() != mp.dst.rank())
            throw error(errc::invalid_argument, "malformed mapping for " + meta.path);
        if (mp.src.count != mp.dst.count)
            throw error(errc::invalid_argument, "mapping src " + to_string(mp.src) + " and dst "
                        + to_string(mp.dst) + " differ in extent");
        if (!within(mp.dst, meta.shape))
            throw error(errc::out_of_bounds, "mapping dst " + to_string(mp.dst) + " outside "
                        + to_string(meta.shape));
        if (!valid_dataset_path(mp.source_dataset) || mp.source_file.empty())
            throw error(errc::invalid_argument, "mapping source '" + mp.source_file + ":" + mp.source_dataset + "'");
    }
    // sweep along dim 0 so only candidates sharing a dim-0 range are compared
    std::vector<const hyperslab *> dst;
    dst.reserve(meta.mappings.size());
    for (const auto &mp : meta.mappings)
        dst.push_back(&mp.dst);
    std::sort(dst.begin(), dst.end(), [](auto a, auto b) { return a->start[0] < b->start[0]; });
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const auto end0 = dst[i]->start[0] + dst[i]->count[0];
        for (std::size_t j = i + 1; j < dst.size() && dst[j]->start[0] < end0; ++j)
            if (overlaps(*dst[i], *dst[j]))
                throw error(errc::overlap, "mappings " + to_string(*dst[i]) + " and " + to_string(*dst[j])
                            + " overlap in " + meta.path);
    }
}

void container::create_virtual_dataset(const std::string &path, dtype type, const extents &shape, scalar fill,
                                       std::vector<mapping> mappings)
{
    require_writable();
    check_new_path(path);
    if (shape.empty())
        throw error(errc::invalid_argument, "virtual dataset needs rank >= 1");
    dataset_meta m;
    m.path = path;
    m.kind = dataset_kind::virtual_view;
    m.type = type;
    m.shape = shape;
    m.fill = fill;
    m.mappings = std::move(mappings);
    validate_mappings(m);
    _mapping_writes += m.mappings.size();
    _datasets.emplace(path, std::move(m));
}

void container::recreate_virtual_dataset(const std::string &path, std::vector<mapping> mappings)
{
    require_writable();
    auto &m = mutable_dataset(path);
    if (m.kind != dataset_kind::virtual_view)
        throw error(errc::wrong_kind, path + " is a stored dataset");
    dataset_meta next = m;
    next.mappings = std::move(mappings);
    validate_mappings(next);
    _mapping_writes += next.mappings.size();
    m = std::move(next);
}

void container::rename_dataset(const std::string &old_path, const std::string &new_path)
{
    require_writable();
    auto node = _datasets.extract(old_path);
    if (node.empty())
        throw error(errc::not_found, "no dataset " + old_path);
    try {
        check_new_path(new_path);
    } catch (...) {
        _datasets.insert(std::move(node));
        throw;
    }
    node.key() = new_path;
    node.mapped().path = new_path;
    _datasets.insert(std::move(node));
}

void container::write_chunk(const std::string &path, const extents &chunk_coord, std::span<const std::byte> cells)
{
    require_writable();
    auto &m = mutable_dataset(path);
    if (m.kind != dataset_kind::stored)
        throw error(errc::wrong_kind, path + " is virtual; chunks cannot be written");
    const auto grid = m.grid();
    if (!grid.aligned(chunk_coord))
        throw error(errc::misaligned, "chunk coordinate " + to_string(chunk_coord) + " not aligned to "
                    + to_string(m.chunk_shape));
    if (!grid.in_bounds(chunk_coord))
        throw error(errc::out_of_bounds, "chunk coordinate " + to_string(chunk_coord) + " outside " + to_string(m.shape));
    const auto expect = product(m.chunk_shape) * m.elem_width();
    if (cells.size() != expect)
        throw error(errc::invalid_argument, "chunk buffer has " + std::to_string(cells.size()) + " bytes, expected "
                    + std::to_string(expect));
    {
        // the committed footer moves behind the new extent so readers never
        // observe a tail that is not a complete footer
        flock_guard g { _fd.get(), flock_guard::kind::exclusive };
        pwrite_all(cells, _data_end);
        pwrite_all(std::as_bytes(std::span { _committed_footer.data(), _committed_footer.size() }),
                   _data_end + cells.size());
    }
    m.chunks[chunk_coord] = chunk_extent { _data_end, cells.size() };
    _data_end += cells.size();
}

bool container::share_chunk(const std::string &dst_path, const std::string &src_path, const extents &chunk_coord)
{
    require_writable();
    const auto &src = dataset(src_path);
    auto &dst = mutable_dataset(dst_path);
    if (src.kind != dataset_kind::stored || dst.kind != dataset_kind::stored)
        throw error(errc::wrong_kind, "chunk sharing needs two stored datasets");
    if (src.type != dst.type || src.chunk_shape != dst.chunk_shape)
        throw error(errc::invalid_argument, src_path + " and " + dst_path + " differ in layout");
    if (!dst.grid().aligned(chunk_coord) || !dst.grid().in_bounds(chunk_coord))
        throw error(errc::misaligned, "bad chunk coordinate " + to_string(chunk_coord));
    auto it = src.chunks.find(chunk_coord);
    if (it == src.chunks.end())
        return false;
    dst.chunks[chunk_coord] = it->second;
    return true;
}

void container::read_chunk(const std::string &path, const extents &chunk_coord, std::span<std::byte> out) const
{
    const auto &m = dataset(path);
    if (m.kind != dataset_kind::stored)
        throw error(errc::wrong_kind, path + " is virtual; use read_region");
    const auto grid = m.grid();
    if (!grid.aligned(chunk_coord))
        throw error(errc::misaligned, "chunk coordinate " + to_string(chunk_coord) + " not aligned");
    if (!grid.in_bounds(chunk_coord))
        throw error(errc::out_of_bounds, "chunk coordinate " + to_string(chunk_coord) + " outside " + to_string(m.shape));
    const auto bytes = product(m.chunk_shape) * m.elem_width();
    if (out.size() != bytes)
        throw error(errc::invalid_argument, "destination has " + std::to_string(out.size()) + " bytes, expected "
                    + std::to_string(bytes));
    auto it = m.chunks.find(chunk_coord);
    if (it == m.chunks.end()) {
        std::array<std::byte, 8> elem {};
        encode_scalar(m.type, m.fill, elem);
        fill_bytes(out, std::span { elem.data(), m.elem_width() });
        return;
    }
    pread_all(out, it->second.offset);
    ++_chunk_reads;
}

void container::read_region(const std::string &path, const hyperslab &region, std::span<std::byte> out) const
{
    resolve_context ctx;
    read_impl(path, region, out, ctx);
}

void container::read_impl(const std::string &path, const hyperslab &region, std::span<std::byte> out,
                          resolve_context &ctx) const
{
    const auto &m = dataset(path);
    if (!within(region, m.shape))
        throw error(errc::out_of_bounds, "region " + to_string(region) + " outside " + path + " " + to_string(m.shape));
    if (out.size() != region.cells() * m.elem_width())
        throw error(errc::invalid_argument, "destination has " + std::to_string(out.size()) + " bytes, expected "
                    + std::to_string(region.cells() * m.elem_width()));
    const auto key = canonical_key(_path) + ":" + path;
    if (std::find(ctx.stack.begin(), ctx.stack.end(), key) != ctx.stack.end())
        throw error(errc::cyclic_reference, "virtual dataset cycle through " + key);
    ctx.stack.push_back(key);
    try {
        if (m.kind == dataset_kind::stored)
            read_stored(m, region, out);
        else
            read_virtual(m, region, out, ctx);
    } catch (...) {
        ctx.stack.pop_back();
        throw;
    }
    ctx.stack.pop_back();
}

void container::read_stored(const dataset_meta &m, const hyperslab &region, std::span<std::byte> out) const
{
    const auto grid = m.grid();
    const auto w = m.elem_width();
    std::array<std::byte, 8> fill_elem {};
    encode_scalar(m.type, m.fill, fill_elem);
    const std::span<const std::byte> fill { fill_elem.data(), w };
    std::vector<std::byte> scratch;
    for (const auto idx : grid.intersecting(region)) {
        const auto coord = grid.delinearize(idx);
        const auto box = grid.chunk_box(coord);
        const auto inter = *intersect(box, region);
        auto it = m.chunks.find(coord);
        if (it == m.chunks.end()) {
            fill_region(out, region, inter, fill);
            continue;
        }
        ++_chunk_reads;
        if (contiguous_in(inter, box) && contiguous_in(inter, region)) {
            const auto src_off = it->second.offset + linear_offset(box, inter.start) * w;
            const auto dst_off = linear_offset(region, inter.start) * w;
            pread_all(out.subspan(dst_off, inter.cells() * w), src_off);
            continue;
        }
        scratch.resize(it->second.length);
        pread_all(scratch, it->second.offset);
        _staged_bytes += copy_region(scratch, box, out, region, inter, w);
    }
}

void container::read_virtual(const dataset_meta &m, const hyperslab &region, std::span<std::byte> out,
                             resolve_context &ctx) const
{
    const auto w = m.elem_width();
    std::uint64_t covered = 0;
    for (const auto &mp : m.mappings)
        if (auto inter = intersect(mp.dst, region))
            covered += inter->cells();
    if (covered < region.cells()) {
        std::array<std::byte, 8> fill_elem {};
        encode_scalar(m.type, m.fill, fill_elem);
        fill_region(out, region, region, std::span { fill_elem.data(), w });
    }
    const auto self_key = canonical_key(_path);
    for (const auto &mp : m.mappings) {
        const auto inter = intersect(mp.dst, region);
        if (!inter)
            continue;
        const container *src = this;
        if (mp.source_file != ".") {
            fs::path p { mp.source_file };
            if (p.is_relative())
                p = _path.parent_path() / p;
            const auto key = canonical_key(p);
            if (key != self_key) {
                auto it = ctx.opened.find(key);
                if (it == ctx.opened.end()) {
                    if (!fs::exists(p))
                        throw error(errc::missing_source, "source file " + p.string() + " of " + m.path + " is missing");
                    it = ctx.opened.emplace(key, std::make_unique<container>(container::open(p, open_mode::read))).first;
                }
                src = it->second.get();
            }
        }
        if (!src->contains(mp.source_dataset))
            throw error(errc::missing_source, "source dataset " + mp.source_file + ":" + mp.source_dataset + " of "
                        + m.path + " is missing");
        if (src->dataset(mp.source_dataset).type != m.type)
            throw error(errc::invalid_argument, "source " + mp.source_dataset + " element type differs from " + m.path);
        const auto src_region = translate(*inter, mp.dst.start, mp.src.start);
        if (contiguous_in(*inter, region)) {
            const auto off = linear_offset(region, inter->start) * w;
            src->read_impl(mp.source_dataset, src_region, out.subspan(off, inter->cells() * w), ctx);
            continue;
        }
        std::vector<std::byte> tmp(inter->cells() * w);
        src->read_impl(mp.source_dataset, src_region, tmp, ctx);
        _staged_bytes += copy_region(tmp, *inter, out, region, *inter, w);
    }
}

std::vector<dataset_info> container::list_datasets() const
{
    std::vector<dataset_info> out;
    out.reserve(_datasets.size());
    for (const auto &[p, m] : _datasets)
        out.push_back(dataset_info { p, m.kind, m.shape, m.type });
    return out;
}

std::vector<std::string> container::list_groups() const
{
    std::set<std::string> groups;
    for (const auto &[p, m] : _datasets)
        for (auto pos = p.find('/', 1); pos != std::string::npos; pos = p.find('/', pos + 1))
            groups.insert(p.substr(0, pos));
    return { groups.begin(), groups.end() };
}

void container::pread_all(std::span<std::byte> out, std::uint64_t offset) const
{
    std::size_t done = 0;
    while (done < out.size()) {
        const auto n = ::pread(_fd.get(), out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw error(errc::io, sys_error("read " + _path.string()));
        }
        if (n == 0)
            throw error(errc::truncated, _path.string() + ": unexpected end of file at " + std::to_string(offset + done));
        done += static_cast<std::size_t>(n);
    }
}

void container::pwrite_all(std::span<const std::byte> in, std::uint64_t offset)
{
    std::size_t done = 0;
    while (done < in.size()) {
        const auto n = ::pwrite(_fd.get(), in.data() + done, in.size() - done, static_cast<off_t>(offset + done));
        if (n < 0) {
            if (errno == EINTR)
                continue;
            throw error(errc::io, sys_error("write " + _path.string()));
        }
        done += static_cast<std::size_t>(n);
    }
}

} // namespace abridge
