#include "abridge/query.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <variant>

#include "abridge/scan.hpp"
#include "abridge/workers.hpp"

namespace abridge {

namespace {

using clock = std::chrono::steady_clock;

double seconds_since(clock::time_point t0)
{
    return std::chrono::duration<double>(clock::now() - t0).count();
}

using any_scan = std::variant<array_scan<double>, array_scan<float>, array_scan<std::int64_t>, array_scan<std::int32_t>>;
using any_chunk = std::variant<rle_chunk<double>, rle_chunk<float>, rle_chunk<std::int64_t>, rle_chunk<std::int32_t>>;

any_scan start_scan(catalog &cat, const std::string &array, const std::string &attr, dtype type, unsigned n,
                    unsigned instance)
{
    return visit_dtype(type, [&]<typename T>(type_tag<T>) {
        return any_scan { std::in_place_type<array_scan<T>>, array_scan<T>::start(cat, array, attr, n, instance) };
    });
}

std::optional<any_chunk> next_chunk(any_scan &s)
{
    return std::visit([](auto &scan) -> std::optional<any_chunk> {
        auto c = scan.next();
        if (!c)
            return std::nullopt;
        return any_chunk { std::move(*c) };
    }, s);
}

const chunk_grid &grid_of(const any_scan &s)
{
    return std::visit([](const auto &scan) -> const chunk_grid & { return scan.grid(); }, s);
}

const hyperslab &box_of(const any_chunk &c)
{
    return std::visit([](const auto &chunk) -> const hyperslab & { return chunk.box(); }, c);
}

// Dense cells of a scanned chunk; a masqueraded chunk is used in place.
template<element T>
std::span<const T> dense_cells(const rle_chunk<T> &c, std::vector<T> &scratch)
{
    if (c.segment_count() == 1 && !c.segment(0).same)
        return c.segment(0).data;
    scratch = c.decode();
    return scratch;
}

struct plan {
    std::vector<std::string> needed; // attributes to scan
    std::vector<dtype> types;
    std::vector<std::size_t> value_idx; // into needed
    std::optional<std::size_t> filter_idx;
    bool integral = false;
    extents shape;
    extents grid_shape { 1 };
    std::uint64_t grid_cells = 1;
};

struct instance_header {
    double scan_s;
    double aggregate_s;
    double serialize_s;
    std::uint64_t chunk_reads;
};

class folder {
public:
    folder(const plan &p, const aggregate_spec &spec, const std::optional<hyperslab> &region)
        : _p { p }, _spec { spec }, _region { region }, _parts(p.grid_cells)
    {
    }

    void fold(const std::vector<any_chunk> &chunks)
    {
        const auto &box = box_of(chunks[0]);
        const bool inside = !_region || contains(*_region, box);
        if (_p.needed.size() == 1 && !_spec.grid && !_spec.filter && inside)
            fold_tiled(chunks[0]);
        else
            fold_cells(chunks, box);
    }

    std::vector<partial_aggregate> &parts() { return _parts; }

private:
    void fold_tiled(const any_chunk &chunk)
    {
        auto &acc = _parts[0];
        std::visit([&]<typename T>(const rle_chunk<T> &c) {
            c.iterate_tiled(_spec.tile, [&](const rle_tile<T> &t) {
                if constexpr (std::is_integral_v<T>) {
                    if (t.is_run()) {
                        acc.add_int_run(t.run_value, t.run_length);
                    } else {
                        for (auto v : t.values)
                            acc.add_int(v);
                    }
                } else {
                    if (t.is_run()) {
                        acc.add_run(t.run_value, t.run_length);
                    } else {
                        for (auto v : t.values)
                            acc.add(v);
                    }
                }
            });
        }, chunk);
    }

    void fold_cells(const std::vector<any_chunk> &chunks, const hyperslab &box)
    {
        // every attribute as doubles, plus exact integers for an integral value
        std::vector<std::span<const double>> vals(chunks.size());
        std::vector<std::vector<double>> converted(chunks.size());
        std::vector<std::int64_t> ints;
        for (std::size_t k = 0; k < chunks.size(); ++k)
            std::visit([&]<typename T>(const rle_chunk<T> &c) {
                std::vector<T> scratch;
                const auto cells = dense_cells(c, scratch);
                if constexpr (std::is_same_v<T, double>) {
                    if (scratch.empty()) {
                        vals[k] = cells;
                    } else {
                        converted[k] = std::move(scratch);
                        vals[k] = converted[k];
                    }
                } else {
                    converted[k].assign(cells.begin(), cells.end());
                    vals[k] = converted[k];
                }
                if (_p.integral && k == _p.value_idx[0])
                    if constexpr (std::is_integral_v<T>)
                        ints.assign(cells.begin(), cells.end());
            }, chunks[k]);

        const auto sub = _region ? intersect(*_region, box) : std::optional<hyperslab> { box };
        if (!sub)
            return;
        const auto rank = box.rank();
        extents p = sub->start;
        const auto last = rank - 1;
        for (;;) {
            auto off = linear_offset(box, p);
            for (std::uint64_t j = 0; j < sub->count[last]; ++j, ++off) {
                if (_p.filter_idx && !_spec.filter->pass(vals[*_p.filter_idx][off]))
                    continue;
                std::size_t cell = 0;
                if (_spec.grid) {
                    for (std::size_t d = 0; d < rank; ++d) {
                        const auto x = d == last ? p[d] + j : p[d];
                        cell = cell * _p.grid_shape[d] + x / (*_spec.grid)[d];
                    }
                }
                auto &acc = _parts[cell];
                if (_p.integral) {
                    acc.add_int(ints[off]);
                } else if (_p.value_idx.size() == 1) {
                    acc.add(vals[_p.value_idx[0]][off]);
                } else {
                    double s = 0;
                    for (auto k : _p.value_idx)
                        s += vals[k][off] * vals[k][off];
                    acc.add(std::sqrt(s));
                }
            }
            // advance the odometer over all but the last dimension
            std::size_t d = last;
            while (d > 0) {
                --d;
                if (++p[d] < sub->start[d] + sub->count[d])
                    break;
                p[d] = sub->start[d];
                if (d == 0)
                    return;
            }
            if (rank == 1)
                return;
        }
    }

    const plan &_p;
    const aggregate_spec &_spec;
    const std::optional<hyperslab> &_region;
    std::vector<partial_aggregate> _parts;
};

plan make_plan(catalog &cat, const std::string &array, const std::vector<std::string> &attrs, const aggregate_spec &spec)
{
    if (attrs.empty())
        throw error(errc::invalid_argument, "no attribute to aggregate");
    plan p;
    auto need = [&](const std::string &attr) {
        for (std::size_t k = 0; k < p.needed.size(); ++k)
            if (p.needed[k] == attr)
                return k;
        const auto found = cat.lookup(array, attr);
        const auto type = found.schema.attributes[found.schema.attribute_index(attr)].type;
        auto c = container::open(found.file, open_mode::read);
        const auto &shape = c.dataset(found.dataset).shape;
        if (p.needed.empty())
            p.shape = shape;
        else if (shape != p.shape)
            throw error(errc::invalid_argument, "attribute " + attr + " has shape " + to_string(shape) + ", expected "
                        + to_string(p.shape));
        p.needed.push_back(attr);
        p.types.push_back(type);
        return p.needed.size() - 1;
    };
    for (const auto &a : attrs)
        p.value_idx.push_back(need(a));
    if (spec.filter)
        p.filter_idx = need(spec.filter->attr);
    p.integral = attrs.size() == 1 && is_integral(p.types[p.value_idx[0]]);
    if (spec.grid) {
        if (spec.grid->size() != p.shape.size())
            throw error(errc::invalid_argument, "grid rank differs from array rank");
        p.grid_shape = chunk_grid { p.shape, *spec.grid }.grid();
        p.grid_cells = product(p.grid_shape);
    }
    if (spec.tile == 0)
        throw error(errc::invalid_argument, "tile size must be >= 1");
    return p;
}

query_result run_query(catalog &cat, const std::string &array, const std::vector<std::string> &attrs,
                       const std::optional<hyperslab> &region, const aggregate_spec &spec, unsigned n)
{
    if (n == 0)
        throw error(errc::invalid_argument, "need at least one instance");
    const auto t0 = clock::now();
    const auto p = make_plan(cat, array, attrs, spec);
    if (region && !within(*region, p.shape))
        throw error(errc::out_of_bounds, "region " + to_string(*region) + " outside " + to_string(p.shape));
    double coordinator_s = seconds_since(t0);

    const auto payloads = run_workers(n, [&](unsigned i) {
        catalog local = cat;
        std::vector<any_scan> scans;
        for (std::size_t k = 0; k < p.needed.size(); ++k)
            scans.push_back(start_scan(local, array, p.needed[k], p.types[k], n, i));
        const auto &grid = grid_of(scans[0]);
        for (const auto &s : scans)
            if (grid_of(s).chunk_shape != grid.chunk_shape)
                throw error(errc::invalid_argument, "attributes of " + array + " are chunked differently");
        folder f { p, spec, region };
        instance_header h {};
        std::vector<any_chunk> chunks;
        auto read_all = [&]() {
            const auto ts = clock::now();
            chunks.clear();
            for (auto &s : scans) {
                auto c = next_chunk(s);
                if (!c)
                    break;
                chunks.push_back(std::move(*c));
            }
            h.scan_s += seconds_since(ts);
            return chunks.size() == scans.size();
        };
        auto fold = [&] {
            const auto ta = clock::now();
            f.fold(chunks);
            h.aggregate_s += seconds_since(ta);
        };
        if (!region) {
            while (read_all())
                fold();
        } else {
            for (auto l : grid.intersecting(*region)) {
                extents pos = grid.delinearize(l);
                for (std::size_t d = 0; d < pos.size(); ++d)
                    pos[d] = std::max(pos[d], region->start[d]);
                bool mine = true;
                for (auto &s : scans)
                    mine = std::visit([&](auto &scan) { return scan.set_position(pos); }, s) && mine;
                if (!mine)
                    continue;
                if (read_all())
                    fold();
            }
        }
        for (const auto &s : scans)
            h.chunk_reads += std::visit([](const auto &scan) { return scan.source().chunk_reads(); }, s);
        const auto tr = clock::now();
        const auto &parts = f.parts();
        std::string out(sizeof(instance_header) + parts.size() * sizeof(partial_aggregate), '\0');
        std::memcpy(out.data() + sizeof(instance_header), parts.data(), parts.size() * sizeof(partial_aggregate));
        h.serialize_s = seconds_since(tr);
        std::memcpy(out.data(), &h, sizeof h);
        return out;
    });

    query_result r;
    r.fn = spec.fn;
    r.integral = p.integral;
    r.grid_shape = p.grid_shape;
    r.instances = n;
    r.cells.resize(p.grid_cells);
    const auto tm = clock::now();
    double serialize_s = 0;
    for (unsigned i = 0; i < n; ++i) {
        instance_header h;
        std::memcpy(&h, payloads[i].data(), sizeof h);
        r.timings.scan_s = std::max(r.timings.scan_s, h.scan_s);
        r.timings.aggregate_s = std::max(r.timings.aggregate_s, h.aggregate_s);
        serialize_s = std::max(serialize_s, h.serialize_s);
        r.chunk_reads += h.chunk_reads;
        const auto body = payloads[i].size() - sizeof h;
        if (i != 0)
            r.bytes_redistributed += body;
        std::vector<partial_aggregate> parts(body / sizeof(partial_aggregate));
        std::memcpy(parts.data(), payloads[i].data() + sizeof h, body);
        for (std::size_t c = 0; c < parts.size(); ++c)
            r.cells[c].merge(parts[c]);
    }
    r.timings.redistribute_s = serialize_s + seconds_since(tm);
    r.timings.coordinator_s = coordinator_s;
    return r;
}

} // namespace

agg_fn parse_agg_fn(const std::string &s)
{
    for (auto f : { agg_fn::sum, agg_fn::count, agg_fn::min, agg_fn::max, agg_fn::avg })
        if (to_string(f) == s)
            return f;
    throw error(errc::invalid_argument, "unknown aggregate '" + s + "'");
}

std::string_view to_string(agg_fn f) noexcept
{
    switch (f) {
    case agg_fn::sum: return "sum";
    case agg_fn::count: return "count";
    case agg_fn::min: return "min";
    case agg_fn::max: return "max";
    case agg_fn::avg: return "avg";
    }
    return "?";
}

cell_filter cell_filter::parse(const std::string &text)
{
    static const std::pair<std::string_view, op> ops[] = {
        { ">=", op::ge }, { "<=", op::le }, { "!=", op::ne }, { "==", op::eq }, { ">", op::gt }, { "<", op::lt }, { "=", op::eq },
    };
    for (const auto &[sym, o] : ops) {
        const auto at = text.find(sym);
        if (at == std::string::npos || at == 0)
            continue;
        cell_filter f;
        f.attr = text.substr(0, at);
        f.cmp = o;
        const auto num = text.substr(at + sym.size());
        std::size_t used = 0;
        try {
            f.threshold = std::stod(num, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (num.empty() || used != num.size())
            break;
        return f;
    }
    throw error(errc::invalid_argument, "cannot parse filter '" + text + "' (expected e.g. E>2.0)");
}

bool cell_filter::pass(double v) const noexcept
{
    switch (cmp) {
    case op::gt: return v > threshold;
    case op::ge: return v >= threshold;
    case op::lt: return v < threshold;
    case op::le: return v <= threshold;
    case op::eq: return v == threshold;
    case op::ne: return v == v && v != threshold;
    }
    return false;
}

namespace {

void neumaier(double &sum, double &comp, double v) noexcept
{
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
        comp += (sum - t) + v;
    else
        comp += (v - t) + sum;
    sum = t;
}

} // namespace

void partial_aggregate::add(double v) noexcept
{
    neumaier(sum, comp, v);
    ++count;
    min = std::min(min, v);
    max = std::max(max, v);
}

void partial_aggregate::add_int(std::int64_t v) noexcept
{
    isum += v;
    imin = std::min(imin, v);
    imax = std::max(imax, v);
    add(static_cast<double>(v));
}

void partial_aggregate::add_run(double v, std::uint64_t n) noexcept
{
    const double k = static_cast<double>(n);
    const double p = v * k;
    neumaier(sum, comp, p);
    comp += std::fma(v, k, -p);
    count += n;
    min = std::min(min, v);
    max = std::max(max, v);
}

void partial_aggregate::add_int_run(std::int64_t v, std::uint64_t n) noexcept
{
    isum += v * static_cast<std::int64_t>(n);
    imin = std::min(imin, v);
    imax = std::max(imax, v);
    add_run(static_cast<double>(v), n);
}

void partial_aggregate::merge(const partial_aggregate &o) noexcept
{
    neumaier(sum, comp, o.sum);
    comp += o.comp;
    count += o.count;
    min = std::min(min, o.min);
    max = std::max(max, o.max);
    isum += o.isum;
    imin = std::min(imin, o.imin);
    imax = std::max(imax, o.imax);
}

std::optional<double> query_result::value(std::size_t cell) const
{
    const auto &c = cells.at(cell);
    switch (fn) {
    case agg_fn::sum: return integral ? static_cast<double>(c.isum) : c.total();
    case agg_fn::count: return static_cast<double>(c.count);
    case agg_fn::min: return c.count ? std::optional { integral ? static_cast<double>(c.imin) : c.min } : std::nullopt;
    case agg_fn::max: return c.count ? std::optional { integral ? static_cast<double>(c.imax) : c.max } : std::nullopt;
    case agg_fn::avg:
        if (c.count == 0)
            return std::nullopt;
        return (integral ? static_cast<double>(c.isum) : c.total()) / static_cast<double>(c.count);
    }
    return std::nullopt;
}

std::optional<std::int64_t> query_result::int_value(std::size_t cell) const
{
    const auto &c = cells.at(cell);
    if (fn == agg_fn::count)
        return static_cast<std::int64_t>(c.count);
    if (!integral || fn == agg_fn::avg)
        return std::nullopt;
    if (fn == agg_fn::sum)
        return c.isum;
    if (c.count == 0)
        return std::nullopt;
    return fn == agg_fn::min ? c.imin : c.imax;
}

query_result aggregate(catalog &cat, const std::string &array, const std::vector<std::string> &attrs,
                       const aggregate_spec &spec, unsigned n_instances)
{
    return run_query(cat, array, attrs, std::nullopt, spec, n_instances);
}

query_result aggregate_region(catalog &cat, const std::string &array, const std::vector<std::string> &attrs,
                              const hyperslab &region, const aggregate_spec &spec, unsigned n_instances)
{
    return run_query(cat, array, attrs, region, spec, n_instances);
}

std::string timings_csv_header()
{
    return "instances,coordinator_s,scan_s,aggregate_s,redistribute_s,bytes_redistributed";
}

std::string timings_csv_row(const query_result &r)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%u,%.6f,%.6f,%.6f,%.6f,%llu", r.instances, r.timings.coordinator_s,
                  r.timings.scan_s, r.timings.aggregate_s, r.timings.redistribute_s,
                  static_cast<unsigned long long>(r.bytes_redistributed));
    return buf;
}

} // namespace abridge
