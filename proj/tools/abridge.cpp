#include <abridge/catalog.hpp>
#include <abridge/container.hpp>
#include <abridge/query.hpp>
#include <abridge/save.hpp>
#include <abridge/timetravel.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace abridge;

namespace {

// Bad command-line input that CLI11 cannot catch by itself.
class usage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct cli_config {
    unsigned n_instances = 4;
    std::size_t tile = 4096;
    std::chrono::milliseconds lock_timeout { 60000 };
    fs::path catalog_file = "catalog.json";
    bool csv = false;
    bool processes = false;
    std::uint64_t seed = 1;
};

std::vector<std::string> split(const std::string &s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in { s };
    while (std::getline(in, cur, sep))
        out.push_back(cur);
    if (!s.empty() && s.back() == sep)
        out.emplace_back();
    return out;
}

std::uint64_t parse_u64(const std::string &s, const std::string &what)
{
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc {} || r.ptr != s.data() + s.size())
        throw usage_error("bad " + what + " '" + s + "'");
    return v;
}

extents parse_extents(const std::string &s, const std::string &what)
{
    extents out;
    for (const auto &part : split(s, ','))
        out.push_back(parse_u64(part, what));
    if (out.empty())
        throw usage_error("empty " + what);
    return out;
}

// "0:500" or "0:500,10:20" with exclusive ends
hyperslab parse_region(const std::string &s)
{
    hyperslab h;
    for (const auto &part : split(s, ',')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos)
            throw usage_error("region dimension '" + part + "' is not start:end");
        const auto b = parse_u64(part.substr(0, colon), "region start");
        const auto e = parse_u64(part.substr(colon + 1), "region end");
        if (e <= b)
            throw usage_error("region dimension '" + part + "' is empty");
        h.start.push_back(b);
        h.count.push_back(e - b);
    }
    return h;
}

// "256MiB", "1GiB", "4096"
std::uint64_t parse_size(const std::string &s)
{
    static const std::pair<std::string, std::uint64_t> units[] { { "KiB", 1ull << 10 }, { "MiB", 1ull << 20 },
                                                                 { "GiB", 1ull << 30 }, { "B", 1 } };
    for (const auto &[suffix, mult] : units)
        if (s.size() > suffix.size() && s.ends_with(suffix))
            return parse_u64(s.substr(0, s.size() - suffix.size()), "size") * mult;
    return parse_u64(s, "size");
}

// attr=file:/dataset
std::pair<std::string, binding> parse_bind(const std::string &s)
{
    const auto eq = s.find('=');
    const auto colon = s.rfind(':');
    if (eq == std::string::npos || eq == 0 || colon == std::string::npos || colon < eq + 2)
        throw usage_error("binding '" + s + "' is not attr=file:/dataset");
    const auto attr = s.substr(0, eq);
    const auto file = s.substr(eq + 1, colon - eq - 1);
    const auto dataset = s.substr(colon + 1);
    if (!valid_dataset_path(dataset))
        throw usage_error("binding '" + s + "' has a bad dataset path");
    return { attr, binding { file, dataset } };
}

std::string format_number(double v)
{
    if (std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 9007199254740992.0)
        return std::to_string(static_cast<std::int64_t>(v));
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return { buf, r.ptr };
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v)
{
    if (v.empty())
        return 0;
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2;
}

save_options make_save_options(const cli_config &cfg, unsigned n)
{
    save_options o;
    o.n_instances = n;
    o.workers = cfg.processes ? worker_kind::processes : worker_kind::threads;
    o.lock_timeout = cfg.lock_timeout;
    return o;
}

container_options writer_options(const cli_config &cfg)
{
    container_options o;
    o.lock_timeout = cfg.lock_timeout;
    return o;
}

// Reads every attribute of a registered array into memory.
mem_array load_array(catalog &cat, const std::string &name)
{
    auto schema = cat.entry(name).schema;
    for (const auto &a : schema.attributes) {
        const auto r = cat.lookup(name, a.name);
        schema.shape = r.schema.shape;
    }
    mem_array arr { schema };
    for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
        const auto r = cat.lookup(name, schema.attributes[i].name);
        const auto c = container::open(r.file, open_mode::read);
        const auto &meta = c.dataset(r.dataset);
        if (meta.type != schema.attributes[i].type)
            throw error(errc::invalid_argument, "dataset " + r.dataset + " holds " + std::string { to_string(meta.type) });
        c.read_region(r.dataset, hyperslab { extents(schema.rank(), 0), schema.shape }, arr.bytes(i));
    }
    return arr;
}

void fill_constant(mem_array &arr, double value)
{
    for (std::size_t i = 0; i < arr.attribute_count(); ++i)
        visit_dtype(arr.schema().attributes[i].type, [&]<typename T>(type_tag<T>) {
            std::ranges::fill(arr.values<T>(i), static_cast<T>(value));
        });
}

std::string relative_to_catalog(const cli_config &cfg, const fs::path &file)
{
    const auto dir = fs::absolute(cfg.catalog_file).parent_path();
    return fs::absolute(file).lexically_normal().lexically_relative(dir).string();
}

void register_saved(const cli_config &cfg, const array_schema &schema, const fs::path &file)
{
    auto cat = catalog::open(cfg.catalog_file);
    std::map<std::string, binding> bindings;
    for (const auto &a : schema.attributes)
        bindings[a.name] = binding { relative_to_catalog(cfg, file), "/" + a.name };
    cat.register_external_array(schema.name, schema, bindings);
}

// -- create ------------------------------------------------------------------

struct create_args {
    std::string name;
    std::string shape;
    std::string chunk;
    std::vector<std::string> dtypes { "f64" };
    std::vector<std::string> binds;
};

int cmd_create(const cli_config &cfg, const create_args &a)
{
    array_schema s;
    s.name = a.name;
    s.shape = parse_extents(a.shape, "shape");
    s.chunk_shape = parse_extents(a.chunk, "chunk shape");
    if (a.dtypes.size() != 1 && a.dtypes.size() != a.binds.size())
        throw usage_error("give one --dtype or one per --bind");
    std::map<std::string, binding> bindings;
    for (std::size_t i = 0; i < a.binds.size(); ++i) {
        auto [attr, b] = parse_bind(a.binds[i]);
        if (bindings.contains(attr))
            throw usage_error("attribute " + attr + " bound twice");
        const auto &t = a.dtypes.size() == 1 ? a.dtypes[0] : a.dtypes[i];
        s.attributes.push_back(attribute { attr, parse_dtype(t) });
        bindings[attr] = std::move(b);
    }
    auto cat = catalog::open(cfg.catalog_file);
    cat.register_external_array(s.name, s, bindings);
    std::cout << "created " << s.name << "\n";
    return 0;
}

// -- gen ---------------------------------------------------------------------

struct gen_args {
    fs::path file;
    std::string name;
    std::string shape;
    std::string chunk;
    std::string attrs = "val";
    std::string dtype = "f64";
    std::string pattern = "uniform";
    double value = 1.0;
    bool no_register = false;
};

int cmd_gen(const cli_config &cfg, const gen_args &a)
{
    array_schema s;
    s.name = a.name.empty() ? a.file.stem().string() : a.name;
    s.shape = parse_extents(a.shape, "shape");
    s.chunk_shape = parse_extents(a.chunk, "chunk shape");
    for (const auto &attr : split(a.attrs, ','))
        s.attributes.push_back(attribute { attr, parse_dtype(a.dtype) });
    validate(s);
    auto arr = a.pattern == "constant" ? mem_array { s }
                                       : generate(s, cfg.seed, a.pattern == "runs" ? synth_pattern::runs
                                                                                   : synth_pattern::uniform);
    if (a.pattern == "constant")
        fill_constant(arr, a.value);
    const auto r = save_serial(arr, a.file, make_save_options(cfg, 1));
    if (!a.no_register)
        register_saved(cfg, s, a.file);
    std::cout << "wrote " << a.file.string() << " cell_bytes=" << r.cell_bytes << "\n";
    return 0;
}

// -- scan --------------------------------------------------------------------

struct scan_args {
    std::string name;
    std::string agg = "sum";
    std::vector<std::string> attrs;
    std::string region;
    std::string filter;
    std::string grid;
};

int cmd_scan(const cli_config &cfg, const scan_args &a)
{
    auto cat = catalog::open(cfg.catalog_file);
    if (!cat.contains(a.name))
        throw error(errc::not_found, "no array named " + a.name);

    aggregate_spec spec;
    std::vector<std::string> attrs = a.attrs;
    const auto colon = a.agg.find(':');
    try {
        spec.fn = parse_agg_fn(a.agg.substr(0, colon));
    } catch (const error &e) {
        throw usage_error(e.what());
    }
    if (colon != std::string::npos)
        attrs.push_back(a.agg.substr(colon + 1));
    if (attrs.empty())
        attrs.push_back(cat.entry(a.name).schema.attributes.at(0).name);
    if (!a.filter.empty()) {
        try {
            spec.filter = cell_filter::parse(a.filter);
        } catch (const error &e) {
            throw usage_error(e.what());
        }
    }
    if (!a.grid.empty())
        spec.grid = parse_extents(a.grid, "grid");
    spec.tile = cfg.tile;

    const auto r = a.region.empty() ? aggregate(cat, a.name, attrs, spec, cfg.n_instances)
                                    : aggregate_region(cat, a.name, attrs, parse_region(a.region), spec,
                                                       cfg.n_instances);
    const auto label = std::string { to_string(spec.fn) };
    auto cell_text = [&](std::size_t i) -> std::string {
        if (const auto iv = r.int_value(i))
            return std::to_string(*iv);
        const auto v = r.value(i);
        return v ? format_number(*v) : "null";
    };
    if (r.cells.size() == 1) {
        std::cout << label << "=" << cell_text(0) << "\n";
    } else {
        for (std::size_t i = 0; i < r.cells.size(); ++i) {
            std::string coord;
            auto rest = i;
            for (std::size_t d = r.grid_shape.size(); d-- > 0;) {
                coord = std::to_string(rest % r.grid_shape[d]) + (coord.empty() ? "" : "," + coord);
                rest /= r.grid_shape[d];
            }
            std::cout << label << "[" << coord << "]=" << cell_text(i) << "\n";
        }
    }
    if (cfg.csv) {
        std::cout << timings_csv_header() << "\n" << timings_csv_row(r) << "\n";
    } else {
        std::cout << "instances=" << r.instances << " coordinator_s=" << r.timings.coordinator_s
                  << " scan_s=" << r.timings.scan_s << " aggregate_s=" << r.timings.aggregate_s
                  << " redistribute_s=" << r.timings.redistribute_s
                  << " bytes_redistributed=" << r.bytes_redistributed << " chunk_reads=" << r.chunk_reads << "\n";
    }
    return 0;
}

// -- save --------------------------------------------------------------------

struct save_args {
    std::string name;
    std::string mode = "serial";
    std::string mapping;
    std::string format = "abr";
    fs::path out;
};

int cmd_save(const cli_config &cfg, const save_args &a)
{
    if (!a.mapping.empty() && a.mode != "virtual")
        throw usage_error("--mapping only applies to --mode virtual");
    if (a.format != "abr" && a.mode != "serial")
        throw usage_error("--format " + a.format + " writes a single file; use --mode serial");
    auto cat = catalog::open(cfg.catalog_file);
    if (!cat.contains(a.name))
        throw error(errc::not_found, "no array named " + a.name);
    const auto arr = load_array(cat, a.name);

    if (a.format != "abr") {
        const auto r = a.format == "csv"      ? export_csv(arr, a.out)
                       : a.format == "binary" ? export_binary(arr, a.out)
                                              : export_opaque(arr, a.out);
        std::cout << "format=" << a.format << " bytes=" << r.bytes << " seconds=" << r.seconds << "\n";
        return 0;
    }
    const auto opts = make_save_options(cfg, cfg.n_instances);
    save_report r;
    if (a.mode == "serial") {
        r = save_serial(arr, a.out, opts);
    } else if (a.mode == "partitioned") {
        r = save_partitioned(arr, a.out, opts);
    } else {
        const auto strategy = a.mapping == "parallel" ? mapping_strategy::parallel : mapping_strategy::coordinator;
        r = save_virtual(arr, a.out, strategy, opts);
        std::cout << "mappings_written=" << r.mappings_written << "\n";
    }
    std::cout << "files=" << r.files.size() << " cell_bytes=" << r.cell_bytes << " bytes_shuffled=" << r.bytes_shuffled
              << " shuffle_s=" << r.shuffle_s << " write_s=" << r.write_s << " view_s=" << r.view_s
              << " total_s=" << r.total_s << "\n";
    return 0;
}

// -- version -----------------------------------------------------------------

struct version_args {
    fs::path file;
    std::string name;
    std::string strategy;
    fs::path from;
    bool list = false;
    std::string read;
    fs::path out;
    std::string shape;
    std::string chunk;
    std::string dtype = "f64";
};

std::uint64_t parse_version_label(const std::string &s)
{
    if (s.size() < 2 || s[0] != 'V')
        throw usage_error("version '" + s + "' is not V<k>");
    return parse_u64(s.substr(1), "version");
}

int cmd_version(const cli_config &cfg, const version_args &a)
{
    const auto modes = int { a.list } + int { !a.read.empty() } + int { !a.strategy.empty() };
    if (modes != 1)
        throw usage_error("give exactly one of --strategy, --list, --read");
    if (a.list) {
        const auto c = container::open(a.file, open_mode::read);
        std::string line;
        for (const auto k : list_versions(c, a.name))
            line += (line.empty() ? "" : " ") + version_label(k);
        std::cout << line << "\n";
        return 0;
    }
    if (!a.read.empty()) {
        if (a.out.empty())
            throw usage_error("--read needs -o");
        const auto c = container::open(a.file, open_mode::read);
        const auto bytes = read_version(c, a.name, parse_version_label(a.read));
        std::ofstream f { a.out, std::ios::binary };
        f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f)
            throw error(errc::io, "cannot write " + a.out.string());
        std::cout << "wrote " << bytes.size() << " bytes\n";
        return 0;
    }
    if (a.from.empty())
        throw usage_error("--strategy needs --from");

    auto c = fs::exists(a.file) ? container::open(a.file, open_mode::write, writer_options(cfg))
                                : container::create(a.file, writer_options(cfg));
    array_schema s;
    s.name = a.name;
    if (c.contains("/" + a.name)) {
        const auto &meta = c.dataset("/" + a.name);
        s.shape = meta.shape;
        s.chunk_shape = meta.chunk_shape;
        s.attributes.push_back(attribute { a.name, meta.type });
    } else {
        if (a.shape.empty() || a.chunk.empty())
            throw usage_error("the first version needs --shape and --chunk");
        s.shape = parse_extents(a.shape, "shape");
        s.chunk_shape = parse_extents(a.chunk, "chunk shape");
        s.attributes.push_back(attribute { a.name, parse_dtype(a.dtype) });
    }
    const auto data = import_binary(a.from, s);
    const auto before = c.data_bytes();
    const auto k = a.strategy == "full-copy" ? save_version_full_copy(c, a.name, data.view(0), s.chunk_shape)
                                             : save_version_chunk_mosaic(c, a.name, data.view(0), s.chunk_shape);
    std::cout << "saved " << version_label(k) << " data_bytes_added=" << c.data_bytes() - before << "\n";
    return 0;
}

// -- bench -------------------------------------------------------------------

struct bench_args {
    std::string experiment;
    std::string size = "64MiB";
    std::string chunk = "16MiB";
    std::vector<unsigned> instances { 1, 2, 4, 8 };
    unsigned repeat = 3;
    std::vector<double> update_pct { 1, 10, 50, 100 };
    unsigned chunks = 200;
    fs::path workdir;
};

class scratch_dir {
public:
    explicit scratch_dir(const fs::path &requested)
    {
        if (!requested.empty()) {
            _path = requested;
            fs::create_directories(_path);
            return;
        }
        _path = fs::temp_directory_path() / ("abridge-bench-" + std::to_string(::getpid()));
        fs::create_directories(_path);
        _owned = true;
    }
    ~scratch_dir()
    {
        std::error_code ec;
        if (_owned)
            fs::remove_all(_path, ec);
    }
    scratch_dir(const scratch_dir &) = delete;
    scratch_dir &operator=(const scratch_dir &) = delete;

    const fs::path &path() const noexcept { return _path; }

private:
    fs::path _path;
    bool _owned = false;
};

void remove_outputs(const fs::path &out, const save_report &r)
{
    std::error_code ec;
    fs::remove(out, ec);
    for (const auto &f : r.files)
        fs::remove(f, ec);
}

array_schema bench_schema(const std::string &name, std::uint64_t bytes, std::uint64_t chunk_bytes)
{
    array_schema s;
    s.name = name;
    const auto cells = std::max<std::uint64_t>(1, bytes / sizeof(double));
    s.shape = { cells };
    s.chunk_shape = { std::clamp<std::uint64_t>(chunk_bytes / sizeof(double), 1, cells) };
    s.attributes = { attribute { "val", dtype::f64 } };
    return s;
}

int bench_scan(const cli_config &cfg, const bench_args &a, const fs::path &dir)
{
    const auto schema = bench_schema("bench_scan", parse_size(a.size), parse_size(a.chunk));
    const auto file = dir / "bench_scan.abr";
    {
        const auto arr = generate(schema, cfg.seed);
        save_serial(arr, file, make_save_options(cfg, 1));
    }
    auto bench_cfg = cfg;
    bench_cfg.catalog_file = dir / "catalog.json";
    register_saved(bench_cfg, schema, file);
    auto cat = catalog::open(bench_cfg.catalog_file);

    std::cout << "instances,result,median_s,coordinator_s,scan_s,aggregate_s,redistribute_s,bytes_redistributed\n";
    aggregate_spec spec;
    spec.tile = cfg.tile;
    for (const auto n : a.instances) {
        std::vector<double> total, coord, scan, agg, redist;
        query_result last;
        for (unsigned rep = 0; rep < a.repeat; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            last = aggregate(cat, schema.name, { "val" }, spec, n);
            total.push_back(seconds_since(t0));
            coord.push_back(last.timings.coordinator_s);
            scan.push_back(last.timings.scan_s);
            agg.push_back(last.timings.aggregate_s);
            redist.push_back(last.timings.redistribute_s);
        }
        char result[64];
        const auto r = std::to_chars(result, result + sizeof result, *last.value());
        std::cout << n << "," << std::string_view { result, static_cast<std::size_t>(r.ptr - result) } << ","
                  << median(total) << "," << median(coord) << "," << median(scan) << "," << median(agg) << ","
                  << median(redist) << "," << last.bytes_redistributed << "\n";
    }
    return 0;
}

int bench_save(const cli_config &cfg, const bench_args &a, const fs::path &dir)
{
    const auto bytes = parse_size(a.size);
    const auto chunk = parse_size(a.chunk);
    std::cout << "mode,instances,bytes,median_s,mib_per_s,mappings_written\n";
    auto emit = [](const std::string &mode, unsigned n, std::uint64_t b, const std::vector<double> &times,
                   std::uint64_t mappings) {
        const auto m = median(times);
        std::cout << mode << "," << n << "," << b << "," << m << ","
                  << (m > 0 ? static_cast<double>(b) / (1 << 20) / m : 0.0) << "," << mappings << "\n";
    };
    {
        const auto arr = generate(bench_schema("bench_save", bytes, chunk), cfg.seed);
        const auto out = dir / "bench_save.abr";
        for (const auto n : a.instances) {
            const auto opts = make_save_options(cfg, n);
            for (const std::string mode : { "serial", "partitioned", "virtual-coordinator", "virtual-parallel" }) {
                std::vector<double> times;
                std::uint64_t mappings = 0;
                for (unsigned rep = 0; rep < a.repeat; ++rep) {
                    save_report r;
                    if (mode == "serial")
                        r = save_serial(arr, out, opts);
                    else if (mode == "partitioned")
                        r = save_partitioned(arr, dir / "bench_save", opts);
                    else
                        r = save_virtual(arr, out,
                                         mode == "virtual-parallel" ? mapping_strategy::parallel
                                                                    : mapping_strategy::coordinator,
                                         opts);
                    times.push_back(r.total_s);
                    mappings = r.mappings_written;
                    remove_outputs(out, r);
                }
                emit(mode, n, arr.total_bytes(), times, mappings);
            }
        }
    }
    // export formats on RLE-friendly contents
    const auto runs = generate(bench_schema("bench_export", bytes, chunk), cfg.seed, synth_pattern::runs);
    for (const std::string format : { "csv", "binary", "opaque" }) {
        const auto out = dir / ("bench_export." + format);
        std::vector<double> times;
        for (unsigned rep = 0; rep < a.repeat; ++rep) {
            const auto r = format == "csv"      ? export_csv(runs, out)
                           : format == "binary" ? export_binary(runs, out)
                                                : export_opaque(runs, out);
            times.push_back(r.seconds);
            fs::remove(out);
        }
        emit("export-" + format, 1, runs.total_bytes(), times, 0);
    }
    return 0;
}

int bench_version(const cli_config &cfg, const bench_args &a, const fs::path &dir)
{
    const auto bytes = parse_size(a.size);
    const auto cells = std::max<std::uint64_t>(1, bytes / sizeof(double));
    array_schema schema;
    schema.name = "v";
    schema.shape = { cells };
    schema.chunk_shape = { (cells + a.chunks - 1) / a.chunks };
    schema.attributes = { attribute { "v", dtype::f64 } };
    const auto base = generate(schema, cfg.seed);
    const auto grid = schema.grid();
    const auto n_chunks = grid.chunk_count();

    std::cout << "update_pct,chunks_updated,full_copy_bytes,mosaic_bytes,mosaic_ratio,full_copy_s,mosaic_s\n";
    for (const auto pct : a.update_pct) {
        const auto k = static_cast<std::uint64_t>(std::llround(pct / 100.0 * static_cast<double>(n_chunks)));
        std::vector<std::uint64_t> order(n_chunks);
        for (std::uint64_t i = 0; i < n_chunks; ++i)
            order[i] = i;
        std::mt19937_64 rng { cfg.seed + static_cast<std::uint64_t>(pct * 1000) };
        std::shuffle(order.begin(), order.end(), rng);
        mem_array next { schema };
        std::ranges::copy(base.view(0).bytes, next.bytes(0).begin());
        auto vals = next.values<double>(0);
        for (std::uint64_t j = 0; j < k; ++j) {
            const auto box = grid.clipped_box(grid.delinearize(order[j]));
            for (auto c = box.start[0]; c < box.start[0] + box.count[0]; ++c)
                vals[c] += 1.0;
        }
        std::uint64_t added[2] {};
        std::vector<double> times[2];
        for (int strategy = 0; strategy < 2; ++strategy) {
            for (unsigned rep = 0; rep < a.repeat; ++rep) {
                const auto file = dir / "bench_version.abr";
                container_options o;
                o.truncate = true;
                auto c = container::create(file, o);
                save_version_full_copy(c, "v", base.view(0), schema.chunk_shape);
                const auto before = c.data_bytes();
                const auto t0 = std::chrono::steady_clock::now();
                if (strategy == 0)
                    save_version_full_copy(c, "v", next.view(0), schema.chunk_shape);
                else
                    save_version_chunk_mosaic(c, "v", next.view(0), schema.chunk_shape);
                times[strategy].push_back(seconds_since(t0));
                added[strategy] = c.data_bytes() - before;
            }
        }
        std::cout << pct << "," << k << "," << added[0] << "," << added[1] << ","
                  << (added[0] ? static_cast<double>(added[1]) / static_cast<double>(added[0]) : 0.0) << ","
                  << median(times[0]) << "," << median(times[1]) << "\n";
    }
    return 0;
}

int cmd_bench(const cli_config &cfg, const bench_args &a)
{
    if (a.repeat == 0)
        throw usage_error("--repeat must be >= 1");
    for (const auto n : a.instances)
        if (n == 0)
            throw usage_error("instance counts must be >= 1");
    scratch_dir dir { a.workdir };
    if (a.experiment == "scan")
        return bench_scan(cfg, a, dir.path());
    if (a.experiment == "save")
        return bench_save(cfg, a, dir.path());
    return bench_version(cfg, a, dir.path());
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app { "abridge: chunked array storage with virtual views and versioning" };
    app.require_subcommand(1);
    app.fallthrough();

    cli_config cfg;
    if (const char *env = std::getenv("ABRIDGE_LOCK_TIMEOUT_MS")) {
        try {
            cfg.lock_timeout = std::chrono::milliseconds { parse_u64(env, "ABRIDGE_LOCK_TIMEOUT_MS") };
        } catch (const usage_error &e) {
            std::cerr << "abridge: " << e.what() << "\n";
            return 2;
        }
    }
    std::uint64_t lock_timeout_ms = static_cast<std::uint64_t>(cfg.lock_timeout.count());
    app.add_option("--catalog", cfg.catalog_file, "catalog file")->capture_default_str();
    app.add_option("--tile", cfg.tile, "cells per aggregation batch")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--lock-timeout-ms", lock_timeout_ms, "wait for a busy writer lock (also ABRIDGE_LOCK_TIMEOUT_MS)");
    app.add_option("--seed", cfg.seed, "seed for synthetic data")->capture_default_str();
    app.add_flag("--csv", cfg.csv, "CSV output");
    app.add_flag("--processes", cfg.processes, "run instances as processes instead of threads");

    create_args ca;
    auto *create = app.add_subcommand("create", "register an external array");
    create->add_option("name", ca.name)->required();
    create->add_option("--shape", ca.shape, "e.g. 1000 or 100,200")->required();
    create->add_option("--chunk", ca.chunk)->required();
    create->add_option("--dtype", ca.dtypes, "f64|f32|i64|i32, once or per binding");
    create->add_option("--bind", ca.binds, "attr=file:/dataset")->required();

    gen_args ga;
    auto *gen = app.add_subcommand("gen", "write a synthetic array and register it");
    gen->add_option("file", ga.file)->required();
    gen->add_option("--name", ga.name, "array name (default: file stem)");
    gen->add_option("--shape", ga.shape)->required();
    gen->add_option("--chunk", ga.chunk)->required();
    gen->add_option("--attrs", ga.attrs, "comma separated attribute names")->capture_default_str();
    gen->add_option("--dtype", ga.dtype)->check(CLI::IsMember({ "f64", "f32", "i64", "i32" }))->capture_default_str();
    gen->add_option("--pattern", ga.pattern)->check(CLI::IsMember({ "uniform", "runs", "constant" }))->capture_default_str();
    gen->add_option("--value", ga.value, "cell value for --pattern constant")->capture_default_str();
    gen->add_flag("--no-register", ga.no_register);

    scan_args sa;
    auto *scan = app.add_subcommand("scan", "aggregate a registered array");
    scan->add_option("name", sa.name)->required();
    scan->add_option("--agg", sa.agg, "sum|count|min|max|avg[:attr]")->capture_default_str();
    scan->add_option("--attrs", sa.attrs, "value attributes (norm when several)")->delimiter(',');
    scan->add_option("--region", sa.region, "start:end per dimension, comma separated");
    scan->add_option("--filter", sa.filter, "e.g. \"E>2.0\"");
    scan->add_option("--grid", sa.grid, "group cells into blocks of this shape");
    scan->add_option("-n", cfg.n_instances)->check(CLI::PositiveNumber)->capture_default_str();

    save_args va;
    auto *save = app.add_subcommand("save", "write a registered array");
    save->add_option("name", va.name)->required();
    save->add_option("--mode", va.mode)->check(CLI::IsMember({ "serial", "partitioned", "virtual" }))->capture_default_str();
    save->add_option("--mapping", va.mapping)->check(CLI::IsMember({ "parallel", "coordinator" }));
    save->add_option("--format", va.format)->check(CLI::IsMember({ "abr", "csv", "binary", "opaque" }))->capture_default_str();
    save->add_option("-o", va.out, "output file (prefix for partitioned)")->required();
    save->add_option("-n", cfg.n_instances)->check(CLI::PositiveNumber)->capture_default_str();

    version_args vva;
    auto *version = app.add_subcommand("version", "save or read versions of a dataset");
    version->add_option("file", vva.file)->required();
    version->add_option("name", vva.name)->required();
    version->add_option("--strategy", vva.strategy)->check(CLI::IsMember({ "full-copy", "chunk-mosaic" }));
    version->add_option("--from", vva.from, "binary cells of the new version");
    version->add_flag("--list", vva.list);
    version->add_option("--read", vva.read, "V<k>");
    version->add_option("-o", vva.out);
    version->add_option("--shape", vva.shape, "first version only");
    version->add_option("--chunk", vva.chunk, "first version only");
    version->add_option("--dtype", vva.dtype, "first version only")->check(CLI::IsMember({ "f64", "f32", "i64", "i32" }));

    bench_args ba;
    auto *bench = app.add_subcommand("bench", "run an experiment grid and print CSV medians");
    bench->add_option("experiment", ba.experiment)->required()->check(CLI::IsMember({ "scan", "save", "version" }));
    bench->add_option("--size", ba.size, "array bytes, e.g. 256MiB")->capture_default_str();
    bench->add_option("--chunk", ba.chunk, "chunk bytes (scan, save)")->capture_default_str();
    bench->add_option("-n", ba.instances, "instance counts")->delimiter(',');
    bench->add_option("--repeat", ba.repeat)->capture_default_str();
    bench->add_option("--update-pct", ba.update_pct, "percent of chunks changed (version)")->delimiter(',');
    bench->add_option("--chunks", ba.chunks, "chunk count (version)")->check(CLI::PositiveNumber)->capture_default_str();
    bench->add_option("--workdir", ba.workdir, "keep scratch files here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 2;
    }
    cfg.lock_timeout = std::chrono::milliseconds { lock_timeout_ms };

    try {
        if (*create)
            return cmd_create(cfg, ca);
        if (*gen)
            return cmd_gen(cfg, ga);
        if (*scan)
            return cmd_scan(cfg, sa);
        if (*save)
            return cmd_save(cfg, va);
        if (*version)
            return cmd_version(cfg, vva);
        return cmd_bench(cfg, ba);
    } catch (const usage_error &e) {
        std::cerr << "abridge: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "abridge: " << e.what() << "\n";
        return 1;
    }
}
