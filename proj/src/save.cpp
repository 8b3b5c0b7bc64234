#include "abridge/save.hpp"

#include <charconv>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "abridge/rle_chunk.hpp"
#include "json.hpp"

namespace abridge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point t0)
{
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string dataset_for(const attribute &a)
{
    return "/" + a.name;
}

// A chunk in flight from an instance to the coordinator.
struct chunk_message {
    std::uint64_t linear = 0;
    std::vector<std::byte> cells;
};

class channel {
public:
    explicit channel(std::size_t capacity) : _capacity { capacity } {}

    void push(chunk_message m)
    {
        std::unique_lock g { _m };
        _cv.wait(g, [&] { return _q.size() < _capacity; });
        _q.push_back(std::move(m));
        _cv.notify_all();
    }

    chunk_message pop()
    {
        std::unique_lock g { _m };
        _cv.wait(g, [&] { return !_q.empty(); });
        auto m = std::move(_q.front());
        _q.pop_front();
        _cv.notify_all();
        return m;
    }

    std::optional<chunk_message> try_pop()
    {
        std::unique_lock g { _m };
        if (_q.empty())
            return std::nullopt;
        auto m = std::move(_q.front());
        _q.pop_front();
        _cv.notify_all();
        return m;
    }

private:
    std::size_t _capacity;
    std::mutex _m;
    std::condition_variable _cv;
    std::deque<chunk_message> _q;
};

void create_attribute_datasets(container &c, const array_schema &schema, const extents &shape, const scalar &fill)
{
    for (const auto &a : schema.attributes)
        c.create_dataset(dataset_for(a), a.type, shape, schema.chunk_shape, fill);
}

container_options writer_options(const save_options &opts)
{
    return container_options { .truncate = true, .lock_timeout = {}, .sync_on_commit = opts.sync };
}

json slab_json(const hyperslab &s)
{
    return json { { "start", s.start }, { "count", s.count } };
}

hyperslab slab_from_json(const json &j)
{
    return hyperslab { j.at("start").get<extents>(), j.at("count").get<extents>() };
}

fs::path view_stem(const fs::path &out)
{
    auto s = out;
    if (s.extension() == ".abr")
        s.replace_extension();
    return s;
}

// Writes the partition of instance i whose datasets have the given shape;
// origin is subtracted from global chunk coordinates.
// Cell offset of the chunk at coord when its cells already lie contiguous
// in the dense row-major array: every dimension but the first is covered
// whole and the chunk is not clipped.
std::optional<std::uint64_t> contiguous_chunk_offset(const array_schema &schema, const extents &coord)
{
    for (std::size_t d = 1; d < schema.rank(); ++d)
        if (schema.chunk_shape[d] != schema.shape[d])
            return std::nullopt;
    if (coord[0] + schema.chunk_shape[0] > schema.shape[0])
        return std::nullopt;
    return coord[0] * (product(schema.shape) / schema.shape[0]);
}

std::uint64_t write_partition(const mem_array &array, const fs::path &file, const partition &part,
                              const extents &shape, const extents &origin, const save_options &opts)
{
    const auto &schema = array.schema();
    auto c = container::create(file, writer_options(opts));
    create_attribute_datasets(c, schema, shape, opts.fill);
    const auto grid = schema.grid();
    const auto per_chunk = product(schema.chunk_shape);
    std::vector<std::byte> buf;
    std::uint64_t bytes = 0;
    for (auto l : grid.intersecting(part.dst)) {
        const auto g = grid.delinearize(l);
        extents local = g;
        for (std::size_t d = 0; d < local.size(); ++d)
            local[d] -= origin[d];
        const auto contiguous = contiguous_chunk_offset(schema, g);
        for (std::size_t a = 0; a < array.attribute_count(); ++a) {
            const auto view = array.view(a);
            const auto chunk_bytes = per_chunk * width(view.type);
            if (contiguous) {
                c.write_chunk(dataset_for(schema.attributes[a]), local,
                              view.bytes.subspan(*contiguous * width(view.type), chunk_bytes));
            } else {
                buf.resize(chunk_bytes);
                gather_chunk(view, schema.chunk_shape, g, buf, opts.fill);
                c.write_chunk(dataset_for(schema.attributes[a]), local, buf);
            }
            bytes += chunk_bytes;
        }
    }
    c.commit();
    return bytes;
}

struct file_closer {
    void operator()(std::FILE *f) const noexcept { std::fclose(f); }
};

class out_file {
public:
    explicit out_file(const fs::path &p) : _path { p }, _f { std::fopen(p.c_str(), "wb") }
    {
        if (!_f)
            throw error(errc::io, "cannot create " + p.string() + ": " + std::strerror(errno));
        std::setvbuf(_f.get(), nullptr, _IOFBF, 1 << 20);
    }

    void write(const void *data, std::size_t n)
    {
        if (n != 0 && std::fwrite(data, 1, n, _f.get()) != n)
            throw error(errc::io, "write " + _path.string() + ": " + std::strerror(errno));
        _bytes += n;
    }

    template<typename T>
    void put(T v)
    {
        write(&v, sizeof v);
    }

    std::uint64_t close()
    {
        if (std::fclose(_f.release()) != 0)
            throw error(errc::io, "close " + _path.string() + ": " + std::strerror(errno));
        return _bytes;
    }

private:
    fs::path _path;
    std::unique_ptr<std::FILE, file_closer> _f;
    std::uint64_t _bytes = 0;
};

std::string slurp(const fs::path &p)
{
    std::unique_ptr<std::FILE, file_closer> f { std::fopen(p.c_str(), "rb") };
    if (!f)
        throw error(errc::io, "cannot read " + p.string() + ": " + std::strerror(errno));
    std::string out;
    out.resize(fs::file_size(p));
    if (!out.empty() && std::fread(out.data(), 1, out.size(), f.get()) != out.size())
        throw error(errc::io, "short read on " + p.string());
    return out;
}

template<element T>
void append_number(std::string &out, T v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, r.ptr);
}

} // namespace

std::vector<partition> plan_partitions(const array_schema &schema, unsigned n_instances)
{
    validate(schema);
    if (n_instances == 0)
        throw error(errc::invalid_argument, "need at least one instance");
    const auto rows = schema.grid().grid()[0];
    if (rows < n_instances)
        throw error(errc::invalid_argument, std::to_string(rows) + " chunk rows cannot be split across "
                    + std::to_string(n_instances) + " instances");
    const auto base = rows / n_instances;
    const auto extra = rows % n_instances;
    std::vector<partition> plan;
    std::uint64_t row = 0;
    for (unsigned i = 0; i < n_instances; ++i) {
        const auto k = base + (i < extra ? 1 : 0);
        const auto begin = row * schema.chunk_shape[0];
        const auto end = std::min((row + k) * schema.chunk_shape[0], schema.shape[0]);
        row += k;
        partition p;
        p.dst.start = extents(schema.rank(), 0);
        p.dst.start[0] = begin;
        p.dst.count = schema.shape;
        p.dst.count[0] = end - begin;
        p.src = hyperslab { extents(schema.rank(), 0), p.dst.count };
        plan.push_back(std::move(p));
    }
    return plan;
}

fs::path partition_path(const fs::path &prefix, unsigned instance)
{
    return fs::path { prefix.string() + ".p" + std::to_string(instance) + ".abr" };
}

save_report save_serial(const mem_array &array, const fs::path &out, const save_options &opts)
{
    const auto t0 = clock::now();
    const auto &schema = array.schema();
    const unsigned n = std::max(1u, opts.n_instances);
    const auto grid = schema.grid();
    const auto n_chunks = grid.chunk_count();
    const auto per_chunk = product(schema.chunk_shape);
    const auto n_attr = array.attribute_count();

    std::vector<std::unique_ptr<channel>> queues;
    // buffers the coordinator is done with go back to their instance
    std::vector<std::unique_ptr<channel>> spent;
    for (unsigned i = 0; i < n; ++i) {
        queues.push_back(std::make_unique<channel>(2 * n_attr));
        spent.push_back(std::make_unique<channel>(std::numeric_limits<std::size_t>::max()));
    }
    std::vector<std::jthread> instances;
    for (unsigned i = 0; i < n; ++i)
        instances.emplace_back([&, i] {
            for (auto l : assigned_chunk_indices(grid, n, i)) {
                const auto coord = grid.delinearize(l);
                for (std::size_t a = 0; a < n_attr; ++a) {
                    const auto view = array.view(a);
                    chunk_message m { l, {} };
                    if (auto old = spent[i]->try_pop())
                        m.cells = std::move(old->cells);
                    m.cells.resize(per_chunk * width(view.type));
                    gather_chunk(view, schema.chunk_shape, coord, m.cells, opts.fill);
                    queues[i]->push(std::move(m));
                }
            }
        });
    if (opts.on_workers_started)
        opts.on_workers_started();

    save_report r;
    r.writers = 1;
    r.files.push_back(out);
    auto c = container::create(out, writer_options(opts));
    create_attribute_datasets(c, schema, schema.shape, opts.fill);
    for (std::uint64_t l = 0; l < n_chunks; ++l) {
        const auto owner = static_cast<unsigned>(l % n);
        const auto coord = grid.delinearize(l);
        for (std::size_t a = 0; a < n_attr; ++a) {
            auto tw = clock::now();
            auto m = queues[owner]->pop();
            r.shuffle_s += seconds_since(tw);
            if (owner != 0)
                r.bytes_shuffled += m.cells.size();
            tw = clock::now();
            c.write_chunk(dataset_for(schema.attributes[a]), coord, m.cells);
            r.write_s += seconds_since(tw);
            r.cell_bytes += m.cells.size();
            spent[owner]->push(std::move(m));
        }
    }
    const auto tc = clock::now();
    c.commit();
    r.write_s += seconds_since(tc);
    r.total_s = seconds_since(t0);
    return r;
}

save_report save_partitioned(const mem_array &array, const fs::path &out_prefix, const save_options &opts)
{
    const auto t0 = clock::now();
    const auto plan = plan_partitions(array.schema(), opts.n_instances);
    const extents origin(array.schema().rank(), 0);
    worker_options w { opts.workers, std::nullopt, opts.on_workers_started };
    const auto payloads = run_workers(opts.n_instances, [&](unsigned i) {
        const auto tw = clock::now();
        const auto bytes = write_partition(array, partition_path(out_prefix, i), plan[i], array.schema().shape, origin, opts);
        const auto secs = seconds_since(tw);
        if (opts.before_report)
            opts.before_report(i);
        return json { { "bytes", bytes }, { "write_s", secs } }.dump();
    }, w);
    save_report r;
    r.writers = opts.n_instances;
    for (unsigned i = 0; i < opts.n_instances; ++i) {
        const auto j = json::parse(payloads[i]);
        r.files.push_back(partition_path(out_prefix, i));
        r.cell_bytes += j.at("bytes").get<std::uint64_t>();
        r.write_s = std::max(r.write_s, j.at("write_s").get<double>());
    }
    r.total_s = seconds_since(t0);
    return r;
}

save_report save_virtual(const mem_array &array, const fs::path &out, mapping_strategy strategy,
                         const save_options &opts)
{
    const auto t0 = clock::now();
    const auto &schema = array.schema();
    const auto plan = plan_partitions(schema, opts.n_instances);
    const auto stem = view_stem(out);

    if (strategy == mapping_strategy::parallel) {
        auto v = container::create(out, writer_options(opts));
        for (const auto &a : schema.attributes)
            v.create_virtual_dataset(dataset_for(a), a.type, schema.shape, opts.fill, {});
        v.commit();
    }

    worker_options w { opts.workers, std::nullopt, opts.on_workers_started };
    if (strategy == mapping_strategy::coordinator)
        w.deadline = opts.barrier_timeout;
    const auto payloads = run_workers(opts.n_instances, [&](unsigned i) {
        const auto &part = plan[i];
        const auto file = partition_path(stem, i);
        auto tw = clock::now();
        const auto bytes = write_partition(array, file, part, part.dst.count, part.dst.start, opts);
        const auto write_s = seconds_since(tw);
        if (opts.before_report)
            opts.before_report(i);
        json reply { { "bytes", bytes }, { "write_s", write_s }, { "file", file.filename().string() },
                     { "src", slab_json(part.src) }, { "dst", slab_json(part.dst) } };
        if (strategy == mapping_strategy::parallel) {
            tw = clock::now();
            // the view's single-writer lock serializes the instances
            auto v = container::open(out, open_mode::write,
                                     { .truncate = false, .lock_timeout = opts.lock_timeout, .sync_on_commit = opts.sync });
            for (const auto &a : schema.attributes) {
                auto maps = v.dataset(dataset_for(a)).mappings;
                maps.push_back(mapping { file.filename().string(), dataset_for(a), part.src, part.dst });
                v.recreate_virtual_dataset(dataset_for(a), std::move(maps));
            }
            v.commit();
            reply["mappings_written"] = v.mapping_writes();
            reply["view_s"] = seconds_since(tw);
        }
        return reply.dump();
    }, w);

    save_report r;
    r.writers = opts.n_instances;
    std::vector<json> replies;
    for (unsigned i = 0; i < opts.n_instances; ++i) {
        replies.push_back(json::parse(payloads[i]));
        const auto &j = replies.back();
        r.files.push_back(partition_path(stem, i));
        r.cell_bytes += j.at("bytes").get<std::uint64_t>();
        r.write_s = std::max(r.write_s, j.at("write_s").get<double>());
        if (strategy == mapping_strategy::parallel) {
            r.mappings_written += j.at("mappings_written").get<std::uint64_t>();
            r.view_s = std::max(r.view_s, j.at("view_s").get<double>());
        }
    }
    if (strategy == mapping_strategy::coordinator) {
        const auto tv = clock::now();
        auto v = container::create(out, writer_options(opts));
        for (const auto &a : schema.attributes) {
            std::vector<mapping> maps;
            for (const auto &j : replies)
                maps.push_back(mapping { j.at("file").get<std::string>(), dataset_for(a),
                                         slab_from_json(j.at("src")), slab_from_json(j.at("dst")) });
            v.create_virtual_dataset(dataset_for(a), a.type, schema.shape, opts.fill, std::move(maps));
        }
        v.commit();
        r.mappings_written = v.mapping_writes();
        r.view_s = seconds_since(tv);
    }
    r.total_s = seconds_since(t0);
    return r;
}

export_report export_csv(const mem_array &array, const fs::path &out)
{
    const auto t0 = clock::now();
    out_file f { out };
    const auto n_attr = array.attribute_count();
    std::vector<dense_view> views;
    for (std::size_t a = 0; a < n_attr; ++a)
        views.push_back(array.view(a));
    const auto cells = product(array.schema().shape);
    std::string line;
    line.reserve(1 << 20);
    for (std::uint64_t i = 0; i < cells; ++i) {
        for (std::size_t a = 0; a < n_attr; ++a) {
            if (a != 0)
                line.push_back(',');
            visit_dtype(views[a].type, [&]<typename T>(type_tag<T>) { append_number(line, views[a].as<T>()[i]); });
        }
        line.push_back('\n');
        if (line.size() >= (1 << 20) - 512) {
            f.write(line.data(), line.size());
            line.clear();
        }
    }
    f.write(line.data(), line.size());
    const auto bytes = f.close();
    return { bytes, seconds_since(t0) };
}

export_report export_binary(const mem_array &array, const fs::path &out)
{
    const auto t0 = clock::now();
    out_file f { out };
    const auto n_attr = array.attribute_count();
    if (n_attr == 1) {
        const auto v = array.view(0);
        f.write(v.bytes.data(), v.bytes.size());
    } else {
        std::vector<dense_view> views;
        std::size_t cell_width = 0;
        for (std::size_t a = 0; a < n_attr; ++a) {
            views.push_back(array.view(a));
            cell_width += width(views.back().type);
        }
        const auto cells = product(array.schema().shape);
        constexpr std::uint64_t block = 1 << 16;
        std::vector<std::byte> buf(block * cell_width);
        for (std::uint64_t first = 0; first < cells; first += block) {
            const auto k = std::min(block, cells - first);
            auto *p = buf.data();
            for (std::uint64_t i = first; i < first + k; ++i)
                for (const auto &v : views) {
                    const auto w = width(v.type);
                    std::memcpy(p, v.bytes.data() + i * w, w);
                    p += w;
                }
            f.write(buf.data(), static_cast<std::size_t>(p - buf.data()));
        }
    }
    const auto bytes = f.close();
    return { bytes, seconds_since(t0) };
}

export_report export_opaque(const mem_array &array, const fs::path &out)
{
    const auto t0 = clock::now();
    out_file f { out };
    const auto &schema = array.schema();
    const auto grid = schema.grid();
    const auto whole = hyperslab::whole(schema.shape);
    for (std::uint64_t l = 0; l < grid.chunk_count(); ++l) {
        const auto box = grid.clipped_box(grid.delinearize(l));
        for (std::size_t a = 0; a < array.attribute_count(); ++a) {
            const auto view = array.view(a);
            visit_dtype(view.type, [&]<typename T>(type_tag<T>) {
                const auto all = view.as<T>();
                std::vector<T> scratch;
                std::span<const T> cells;
                if (contiguous_in(box, whole)) {
                    cells = all.subspan(linear_offset(whole, box.start), box.cells());
                } else {
                    scratch.resize(box.cells());
                    copy_region(view.bytes, whole, std::as_writable_bytes(std::span { scratch }), box, box, sizeof(T));
                    cells = scratch;
                }
                const auto chunk = encode_rle<T>(cells, box);
                f.put<std::uint64_t>(l);
                f.put<std::uint32_t>(static_cast<std::uint32_t>(chunk.segment_count()));
                for (std::size_t s = 0; s < chunk.segment_count(); ++s) {
                    const auto seg = chunk.segment(s);
                    f.put<std::uint64_t>(seg.length);
                    f.put<std::uint8_t>(seg.same ? 1 : 0);
                    f.write(seg.data.data(), seg.data.size_bytes());
                }
            });
        }
    }
    const auto bytes = f.close();
    return { bytes, seconds_since(t0) };
}

mem_array import_csv(const fs::path &in, const array_schema &schema)
{
    mem_array arr { schema };
    const auto text = slurp(in);
    const auto cells = product(schema.shape);
    const char *p = text.data();
    const char *end = text.data() + text.size();
    for (std::uint64_t i = 0; i < cells; ++i) {
        for (std::size_t a = 0; a < arr.attribute_count(); ++a) {
            visit_dtype(schema.attributes[a].type, [&]<typename T>(type_tag<T>) {
                T v {};
                const auto r = std::from_chars(p, end, v);
                if (r.ec != std::errc {})
                    throw error(errc::invalid_argument, in.string() + ": bad number on line " + std::to_string(i + 1));
                arr.values<T>(a)[i] = v;
                p = r.ptr;
            });
            const char want = a + 1 == arr.attribute_count() ? '\n' : ',';
            if (p == end || *p != want)
                throw error(errc::invalid_argument, in.string() + ": malformed line " + std::to_string(i + 1));
            ++p;
        }
    }
    if (p != end)
        throw error(errc::invalid_argument, in.string() + " has more cells than the schema");
    return arr;
}

mem_array import_binary(const fs::path &in, const array_schema &schema)
{
    mem_array arr { schema };
    const auto raw = slurp(in);
    std::size_t cell_width = 0;
    for (const auto &a : schema.attributes)
        cell_width += width(a.type);
    const auto cells = product(schema.shape);
    if (raw.size() != cells * cell_width)
        throw error(errc::invalid_argument, in.string() + " holds " + std::to_string(raw.size()) + " bytes, schema needs "
                    + std::to_string(cells * cell_width));
    const auto *p = reinterpret_cast<const std::byte *>(raw.data());
    if (arr.attribute_count() == 1) {
        std::memcpy(arr.bytes(0).data(), p, raw.size());
        return arr;
    }
    for (std::uint64_t i = 0; i < cells; ++i)
        for (std::size_t a = 0; a < arr.attribute_count(); ++a) {
            const auto w = width(schema.attributes[a].type);
            std::memcpy(arr.bytes(a).data() + i * w, p, w);
            p += w;
        }
    return arr;
}

mem_array import_opaque(const fs::path &in, const array_schema &schema)
{
    mem_array arr { schema };
    const auto raw = slurp(in);
    std::size_t pos = 0;
    auto take = [&](void *dst, std::size_t n) {
        if (raw.size() - pos < n)
            throw error(errc::truncated, in.string() + " ends inside a chunk record");
        std::memcpy(dst, raw.data() + pos, n);
        pos += n;
    };
    const auto grid = schema.grid();
    const auto whole = hyperslab::whole(schema.shape);
    for (std::uint64_t l = 0; l < grid.chunk_count(); ++l) {
        const auto box = grid.clipped_box(grid.delinearize(l));
        for (std::size_t a = 0; a < arr.attribute_count(); ++a) {
            std::uint64_t index = 0;
            std::uint32_t n_seg = 0;
            take(&index, 8);
            take(&n_seg, 4);
            if (index != l)
                throw error(errc::invalid_argument, in.string() + ": expected chunk " + std::to_string(l) + ", found "
                            + std::to_string(index));
            visit_dtype(schema.attributes[a].type, [&]<typename T>(type_tag<T>) {
                std::vector<rle_segment<T>> segs(n_seg);
                for (auto &s : segs) {
                    std::uint8_t same = 0;
                    take(&s.length, 8);
                    take(&same, 1);
                    s.same = same != 0;
                    const auto k = s.same ? 1 : s.length;
                    if (k > (raw.size() - pos) / sizeof(T))
                        throw error(errc::truncated, in.string() + " ends inside a segment");
                    s.data.resize(k);
                    take(s.data.data(), k * sizeof(T));
                }
                const auto cells = rle_chunk<T>::from_segments(box, segs).decode();
                copy_region(std::as_bytes(std::span { cells }), box, arr.bytes(a), whole, box, sizeof(T));
            });
        }
    }
    if (pos != raw.size())
        throw error(errc::invalid_argument, in.string() + " has trailing bytes");
    return arr;
}

} // namespace abridge
