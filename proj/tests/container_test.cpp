#include <abridge/container.hpp>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <gtest/gtest.h>
#include <numeric>
#include <random>
#include <thread>

#include "test_util.hpp"

using namespace abridge;
using abridge::test::temp_dir;

namespace {

std::string slurp(const std::filesystem::path &p)
{
    std::ifstream in { p, std::ios::binary };
    return { std::istreambuf_iterator<char> { in }, {} };
}

std::vector<double> iota_doubles(std::size_t n, double start = 0.0)
{
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), start);
    return v;
}

template<typename F>
errc error_code_of(F &&f)
{
    try {
        f();
    } catch (const error &e) {
        return e.code();
    }
    ADD_FAILURE() << "expected abridge::error";
    return errc::io;
}

std::size_t count_occurrences(const std::string &hay, std::string_view needle)
{
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1))
        ++n;
    return n;
}

} // namespace

TEST(Container, CreateWritesExactEmptyLayout)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    { auto c = container::create(p); }
    const auto bytes = slurp(p);
    // 16-byte header, "{}", 8-byte length, end magic
    ASSERT_EQ(bytes.size(), 16u + 2u + 8u + 8u);
    EXPECT_EQ(bytes.substr(0, 8), "ABRG0001");
    EXPECT_EQ(bytes.substr(8, 8), std::string(8, '\0'));
    EXPECT_EQ(bytes.substr(16, 2), "{}");
    EXPECT_EQ(bytes.substr(18, 8), std::string("\x02\0\0\0\0\0\0\0", 8));
    EXPECT_EQ(bytes.substr(26, 8), "ABRGEND1");
}

TEST(Container, CreateRefusesExistingPathUnlessTruncating)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    { auto c = container::create(p); }
    EXPECT_EQ(error_code_of([&] { container::create(p); }), errc::already_exists);
    container_options opts;
    opts.truncate = true;
    EXPECT_NO_THROW(container::create(p, opts));
}

TEST(Container, FreshFileListsNothing)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    { auto c = container::create(p); c.commit(); }
    auto r = container::open(p, open_mode::read);
    EXPECT_TRUE(r.list_datasets().empty());
    EXPECT_TRUE(r.list_groups().empty());
}

TEST(Container, CorruptionErrorsAreDistinct)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    { auto c = container::create(p); }
    const auto good = slurp(p);
    auto write = [&](const std::string &s) { std::ofstream { p, std::ios::binary | std::ios::trunc } << s; };

    auto bad_end = good;
    bad_end[bad_end.size() - 1] = 'X';
    write(bad_end);
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::read); }), errc::bad_magic);

    write(good.substr(0, 20));
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::read); }), errc::truncated);

    auto bad_len = good;
    bad_len[18] = '\x7f';
    write(bad_len);
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::read); }), errc::truncated);

    auto bad_json = good;
    bad_json[16] = '[';
    write(bad_json);
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::read); }), errc::bad_metadata);

    auto bad_head = good;
    bad_head[0] = 'Z';
    write(bad_head);
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::read); }), errc::bad_magic);
}

TEST(Container, SingleWriterManyReaders)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    auto w = container::create(p);
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::write); }), errc::writer_busy);
    auto r1 = container::open(p, open_mode::read);
    auto r2 = container::open(p, open_mode::read);
    EXPECT_EQ(r1.list_datasets().size(), 0u);
    EXPECT_EQ(r2.list_datasets().size(), 0u);

    container_options opts;
    opts.lock_timeout = std::chrono::milliseconds { 50 };
    EXPECT_EQ(error_code_of([&] { container::open(p, open_mode::write, opts); }), errc::lock_timeout);

    w = container::create(dir / "b.abr"); // releases the first handle
    EXPECT_NO_THROW(container::open(p, open_mode::write));
}

TEST(Container, CommitMakesChunksVisible)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    const auto cells = iota_doubles(100, 1.0);
    {
        auto c = container::create(p);
        c.create_dataset("/val1", dtype::f64, { 1000 }, { 100 }, 0.0);
        c.write_chunk_as<double>("/val1", { 0 }, cells);
        c.commit();
    }
    auto r = container::open(p, open_mode::read);
    std::vector<double> out(100);
    r.read_chunk("/val1", { 0 }, std::as_writable_bytes(std::span { out }));
    EXPECT_EQ(out, cells);
}

TEST(Container, UncommittedWritesAreNotVisible)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    {
        auto c = container::create(p);
        c.create_dataset("/val1", dtype::f64, { 1000 }, { 100 }, 0.0);
        c.commit();
        const auto cells = iota_doubles(100, 1.0);
        c.write_chunk_as<double>("/val1", { 0 }, cells);
        // concurrent reader sees the committed footer while the writer is mid-session
        auto r = container::open(p, open_mode::read);
        EXPECT_TRUE(r.dataset("/val1").chunks.empty());
    }
    auto r = container::open(p, open_mode::read);
    EXPECT_TRUE(r.dataset("/val1").chunks.empty());
    EXPECT_EQ(r.read_region_as<double>("/val1", { { 0 }, { 100 } }), std::vector<double>(100, 0.0));
}

TEST(Container, SecondCommitWinsAndFileHasOneFooter)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    auto c = container::create(p);
    c.create_dataset("/a", dtype::f64, { 10 }, { 5 }, 0.0);
    c.commit();
    c.create_dataset("/b", dtype::i32, { 10 }, { 5 }, std::int64_t { 7 });
    c.commit();
    const auto bytes = slurp(p);
    EXPECT_EQ(count_occurrences(bytes, "ABRGEND1"), 1u);
    EXPECT_EQ(bytes.substr(bytes.size() - 8), "ABRGEND1");
    auto r = container::open(p, open_mode::read);
    EXPECT_EQ(r.list_datasets().size(), 2u);
    const auto meta = c.metadata_json();
    EXPECT_EQ(bytes.substr(16, meta.size()), meta);
}

TEST(Container, FreshDatasetReadsFill)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_dataset("/val1", dtype::f64, { 1000 }, { 100 }, 0.0);
    const auto &m = c.dataset("/val1");
    EXPECT_EQ(m.grid().chunk_count(), 10u);
    EXPECT_TRUE(m.chunks.empty());
    EXPECT_EQ(c.read_region_as<double>("/val1", hyperslab::whole({ 1000 })), std::vector<double>(1000, 0.0));

    c.create_dataset("/neg", dtype::i64, { 7 }, { 3 }, std::int64_t { -3 });
    EXPECT_EQ(c.read_region_as<std::int64_t>("/neg", hyperslab::whole({ 7 })), std::vector<std::int64_t>(7, -3));
}

TEST(Container, CreateDatasetValidation)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    EXPECT_EQ(error_code_of([&] { c.create_dataset("/x", dtype::f64, { 10, 10 }, { 5 }, 0.0); }), errc::invalid_argument);
    EXPECT_EQ(error_code_of([&] { c.create_dataset("/x", dtype::f64, { 10 }, { 0 }, 0.0); }), errc::invalid_argument);
    EXPECT_EQ(error_code_of([&] { c.create_dataset("x", dtype::f64, { 10 }, { 5 }, 0.0); }), errc::invalid_argument);
    c.create_dataset("/x", dtype::f64, { 10 }, { 5 }, 0.0);
    EXPECT_EQ(error_code_of([&] { c.create_dataset("/x", dtype::f64, { 10 }, { 5 }, 0.0); }), errc::already_exists);
    EXPECT_EQ(error_code_of([&] { c.create_dataset("/x/y", dtype::f64, { 10 }, { 5 }, 0.0); }), errc::already_exists);
}

TEST(Container, WriteChunkErrors)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_dataset("/val1", dtype::f64, { 1000 }, { 100 }, 0.0);
    const auto cells = iota_doubles(100);
    EXPECT_EQ(error_code_of([&] { c.write_chunk_as<double>("/val1", { 50 }, cells); }), errc::misaligned);
    EXPECT_EQ(error_code_of([&] { c.write_chunk_as<double>("/val1", { 1000 }, cells); }), errc::out_of_bounds);
    const auto short_cells = iota_doubles(99);
    EXPECT_EQ(error_code_of([&] { c.write_chunk_as<double>("/val1", { 0 }, short_cells); }), errc::invalid_argument);
    c.create_virtual_dataset("/v", dtype::f64, { 1000 }, 0.0, {});
    EXPECT_EQ(error_code_of([&] { c.write_chunk("/v", { 0 }, std::as_bytes(std::span { cells })); }), errc::wrong_kind);
}

TEST(Container, RewriteAppendsNewExtent)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    auto c = container::create(p);
    c.create_dataset("/val1", dtype::f64, { 1000 }, { 100 }, 0.0);
    const auto first = iota_doubles(100, 0.0);
    const auto second = iota_doubles(100, 500.0);
    c.write_chunk_as<double>("/val1", { 0 }, first);
    c.write_chunk_as<double>("/val1", { 0 }, second);
    c.commit();
    EXPECT_EQ(c.read_region_as<double>("/val1", { { 0 }, { 100 } }), second);
    // two 800-byte extents, then metadata and trailer
    const auto meta = c.metadata_json();
    EXPECT_EQ(std::filesystem::file_size(p), 16u + 2 * 800u + meta.size() + 16u);
    EXPECT_EQ(c.dataset("/val1").chunks.at({ 0 }).offset, 16u + 800u);
}

TEST(Container, ReadChunkFillAndBounds)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_dataset("/val1", dtype::f64, { 1000 }, { 100 }, 0.0);
    std::vector<double> out(100, 9.0);
    c.read_chunk("/val1", { 300 }, std::as_writable_bytes(std::span { out }));
    EXPECT_EQ(out, std::vector<double>(100, 0.0));
    EXPECT_EQ(error_code_of([&] { c.read_chunk("/val1", { 1000 }, std::as_writable_bytes(std::span { out })); }),
              errc::out_of_bounds);
    EXPECT_EQ(error_code_of([&] { c.read_chunk("/val1", { 10 }, std::as_writable_bytes(std::span { out })); }),
              errc::misaligned);
}

TEST(Container, EdgeChunksArePaddedAndClipped)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_dataset("/e", dtype::i32, { 5, 7 }, { 4, 4 }, std::int64_t { -1 });
    std::vector<std::int32_t> chunk(16);
    std::iota(chunk.begin(), chunk.end(), 0);
    c.write_chunk_as<std::int32_t>("/e", { 4, 4 }, chunk);
    const auto got = c.read_region_as<std::int32_t>("/e", { { 4, 4 }, { 1, 3 } });
    EXPECT_EQ(got, (std::vector<std::int32_t> { 0, 1, 2 }));
    EXPECT_EQ(c.read_region_as<std::int32_t>("/e", { { 3, 6 }, { 2, 1 } }), (std::vector<std::int32_t> { -1, 2 }));
}

TEST(Container, RegionMatchesSingleCellOracle)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    const extents shape { 9, 11, 5 };
    const extents chunk { 4, 3, 5 };
    c.create_dataset("/d", dtype::f64, shape, chunk, -1.0);
    const chunk_grid grid { shape, chunk };
    std::mt19937_64 rng { 42 };
    for (std::uint64_t i = 0; i < grid.chunk_count(); ++i) {
        if (rng() % 3 == 0)
            continue;
        std::vector<double> cells(product(chunk));
        for (auto &v : cells)
            v = static_cast<double>(rng() % 1000);
        c.write_chunk_as<double>("/d", grid.delinearize(i), cells);
    }
    for (int trial = 0; trial < 40; ++trial) {
        hyperslab region { extents(3), extents(3) };
        for (std::size_t d = 0; d < 3; ++d) {
            region.start[d] = rng() % shape[d];
            region.count[d] = 1 + rng() % (shape[d] - region.start[d]);
        }
        const auto got = c.read_region_as<double>("/d", region);
        std::size_t k = 0;
        for (auto i = region.start[0]; i < region.start[0] + region.count[0]; ++i)
            for (auto j = region.start[1]; j < region.start[1] + region.count[1]; ++j)
                for (auto l = region.start[2]; l < region.start[2] + region.count[2]; ++l) {
                    const auto cell = c.read_region_as<double>("/d", { { i, j, l }, { 1, 1, 1 } });
                    ASSERT_EQ(got[k++], cell[0]);
                }
    }
}

TEST(Container, VirtualStitchesTwoSources)
{
    temp_dir dir;
    const auto cells = iota_doubles(1000);
    {
        auto a = container::create(dir / "a.abr");
        a.create_dataset("/x", dtype::f64, { 500 }, { 100 }, 0.0);
        for (std::uint64_t i = 0; i < 5; ++i)
            a.write_chunk_as<double>("/x", { i * 100 }, std::span { cells }.subspan(i * 100, 100));
        a.commit();
        auto b = container::create(dir / "b.abr");
        b.create_dataset("/y", dtype::f64, { 500 }, { 250 }, 0.0);
        for (std::uint64_t i = 0; i < 2; ++i)
            b.write_chunk_as<double>("/y", { i * 250 }, std::span { cells }.subspan(500 + i * 250, 250));
        b.commit();
    }
    auto v = container::create(dir / "v.abr");
    v.create_virtual_dataset("/view", dtype::f64, { 1000 }, 0.0,
                             { { "a.abr", "/x", { { 0 }, { 500 } }, { { 0 }, { 500 } } },
                               { "b.abr", "/y", { { 0 }, { 500 } }, { { 500 }, { 500 } } } });
    EXPECT_EQ(v.read_region_as<double>("/view", hyperslab::whole({ 1000 })), cells);
    const auto mid = v.read_region_as<double>("/view", { { 450 }, { 100 } });
    EXPECT_EQ(mid, std::vector<double>(cells.begin() + 450, cells.begin() + 550));
}

TEST(Container, VirtualValidation)
{
    temp_dir dir;
    auto v = container::create(dir / "v.abr");
    EXPECT_EQ(error_code_of([&] {
                  v.create_virtual_dataset("/o", dtype::f64, { 1000 }, 0.0,
                                           { { "a.abr", "/x", { { 0 }, { 600 } }, { { 0 }, { 600 } } },
                                             { "b.abr", "/y", { { 0 }, { 500 } }, { { 500 }, { 500 } } } });
              }),
              errc::overlap);
    EXPECT_EQ(error_code_of([&] {
                  v.create_virtual_dataset("/o", dtype::f64, { 1000 }, 0.0,
                                           { { "a.abr", "/x", { { 0 }, { 600 } }, { { 500 }, { 600 } } } });
              }),
              errc::out_of_bounds);
    // late binding: sources are not checked at creation
    v.create_virtual_dataset("/late", dtype::f64, { 10 }, 0.0,
                             { { "nowhere.abr", "/x", { { 0 }, { 10 } }, { { 0 }, { 10 } } } });
    EXPECT_EQ(error_code_of([&] { v.read_region_as<double>("/late", hyperslab::whole({ 10 })); }),
              errc::missing_source);
    v.create_virtual_dataset("/empty", dtype::f64, { 10 }, 2.5, {});
    EXPECT_EQ(v.read_region_as<double>("/empty", hyperslab::whole({ 10 })), std::vector<double>(10, 2.5));
}

TEST(Container, RecreateReplacesMappingsAndCounts)
{
    temp_dir dir;
    auto v = container::create(dir / "v.abr");
    v.create_dataset("/s", dtype::f64, { 10 }, { 5 }, 0.0);
    const auto ones = std::vector<double>(5, 1.0);
    v.write_chunk_as<double>("/s", { 0 }, ones);
    v.write_chunk_as<double>("/s", { 5 }, ones);
    std::vector<mapping> maps { { ".", "/s", { { 0 }, { 5 } }, { { 0 }, { 5 } } } };
    v.create_virtual_dataset("/v", dtype::f64, { 10 }, 0.0, maps);
    EXPECT_EQ(v.mapping_writes(), 1u);
    maps.push_back({ ".", "/s", { { 5 }, { 5 } }, { { 5 }, { 5 } } });
    v.recreate_virtual_dataset("/v", maps);
    EXPECT_EQ(v.dataset("/v").mappings.size(), 2u);
    EXPECT_EQ(v.mapping_writes(), 3u);
    EXPECT_EQ(v.read_region_as<double>("/v", hyperslab::whole({ 10 })), std::vector<double>(10, 1.0));
    v.recreate_virtual_dataset("/v", {});
    EXPECT_EQ(v.read_region_as<double>("/v", hyperslab::whole({ 10 })), std::vector<double>(10, 0.0));
    EXPECT_EQ(error_code_of([&] { v.recreate_virtual_dataset("/s", {}); }), errc::wrong_kind);
    EXPECT_EQ(error_code_of([&] { v.recreate_virtual_dataset("/nope", {}); }), errc::not_found);
}

TEST(Container, RenameIsMetadataOnly)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    {
        auto c = container::create(p);
        c.create_dataset("/speed", dtype::f64, { 10 }, { 5 }, 0.0);
        c.write_chunk_as<double>("/speed", { 0 }, std::vector<double>(5, 3.0));
        c.commit();
        const auto before = c.data_bytes();
        c.rename_dataset("/speed", "/PreviousVersions/V1");
        EXPECT_EQ(c.data_bytes(), before);
        EXPECT_EQ(c.list_groups(), std::vector<std::string> { "/PreviousVersions" });
        EXPECT_EQ(c.read_region_as<double>("/PreviousVersions/V1", { { 0 }, { 5 } }), std::vector<double>(5, 3.0));
        EXPECT_EQ(error_code_of([&] { c.rename_dataset("/speed", "/x"); }), errc::not_found);
    }
    // not committed: the old name survives
    {
        auto r = container::open(p, open_mode::read);
        EXPECT_TRUE(r.contains("/speed"));
        EXPECT_FALSE(r.contains("/PreviousVersions/V1"));
    }
    auto c = container::open(p, open_mode::write);
    c.create_dataset("/other", dtype::f64, { 10 }, { 5 }, 0.0);
    EXPECT_EQ(error_code_of([&] { c.rename_dataset("/speed", "/other"); }), errc::already_exists);
    EXPECT_TRUE(c.contains("/speed"));
}

TEST(Container, ListDatasetsIsSortedWithKinds)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_dataset("/a", dtype::f64, { 4 }, { 2 }, 0.0);
    c.create_virtual_dataset("/PreviousVersions/V0", dtype::f64, { 4 }, 0.0, {});
    const auto l = c.list_datasets();
    ASSERT_EQ(l.size(), 2u);
    EXPECT_EQ(l[0].path, "/PreviousVersions/V0");
    EXPECT_EQ(l[0].kind, dataset_kind::virtual_view);
    EXPECT_EQ(l[1].path, "/a");
    EXPECT_EQ(l[1].kind, dataset_kind::stored);
}

// Round trip: aligned writes overlaid on a fill background.
TEST(ContainerProperty, RandomWritesMatchOverlayOracle)
{
    std::mt19937_64 rng { 7 };
    for (int trial = 0; trial < 25; ++trial) {
        temp_dir dir;
        const auto p = dir / "a.abr";
        const extents shape { 1 + rng() % 30, 1 + rng() % 30 };
        const extents chunk { 1 + rng() % 8, 1 + rng() % 8 };
        const chunk_grid grid { shape, chunk };
        std::vector<std::int64_t> oracle(product(shape), 42);
        {
            auto c = container::create(p);
            c.create_dataset("/d", dtype::i64, shape, chunk, std::int64_t { 42 });
            const int writes = static_cast<int>(rng() % 20);
            for (int w = 0; w < writes; ++w) {
                const auto coord = grid.delinearize(rng() % grid.chunk_count());
                std::vector<std::int64_t> cells(product(chunk));
                for (auto &v : cells)
                    v = static_cast<std::int64_t>(rng() % 100000);
                c.write_chunk_as<std::int64_t>("/d", coord, cells);
                for (std::uint64_t i = 0; i < chunk[0]; ++i)
                    for (std::uint64_t j = 0; j < chunk[1]; ++j)
                        if (coord[0] + i < shape[0] && coord[1] + j < shape[1])
                            oracle[(coord[0] + i) * shape[1] + coord[1] + j] = cells[i * chunk[1] + j];
            }
            c.commit();
        }
        auto r = container::open(p, open_mode::read);
        ASSERT_EQ(r.read_region_as<std::int64_t>("/d", hyperslab::whole(shape)), oracle) << "trial " << trial;
    }
}

TEST(ContainerProperty, FooterIsSelfContained)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    auto c = container::create(p);
    c.create_dataset("/d", dtype::f64, { 100 }, { 10 }, 0.0);
    for (std::uint64_t i = 0; i < 10; i += 3)
        c.write_chunk_as<double>("/d", { i * 10 }, iota_doubles(10, static_cast<double>(i)));
    c.create_virtual_dataset("/v", dtype::f64, { 100 }, 0.0, { { ".", "/d", { { 0 }, { 50 } }, { { 50 }, { 50 } } } });
    c.commit();
    const auto original = slurp(p);
    const auto meta_start = c.metadata_offset();
    const auto footer = original.substr(meta_start);
    std::filesystem::resize_file(p, meta_start);
    {
        std::ofstream out { p, std::ios::binary | std::ios::app };
        out << footer;
    }
    EXPECT_EQ(slurp(p), original);
    EXPECT_EQ(footer.substr(0, footer.size() - 16), c.metadata_json());
}

TEST(ContainerProperty, MappingOrderDoesNotMatter)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_dataset("/s", dtype::f64, { 12, 12 }, { 4, 4 }, 0.0);
    const chunk_grid grid { { 12, 12 }, { 4, 4 } };
    for (std::uint64_t i = 0; i < grid.chunk_count(); ++i)
        c.write_chunk_as<double>("/s", grid.delinearize(i), iota_doubles(16, static_cast<double>(i * 100)));
    // transpose the chunk layout through mappings, leave one block unmapped
    std::vector<mapping> maps;
    for (std::uint64_t i = 0; i < 3; ++i)
        for (std::uint64_t j = 0; j < 3; ++j)
            if (i + j != 4)
                maps.push_back({ ".", "/s", { { i * 4, j * 4 }, { 4, 4 } }, { { j * 4, i * 4 }, { 4, 4 } } });
    c.create_virtual_dataset("/v", dtype::f64, { 12, 12 }, -1.0, maps);
    const auto reference = c.read_region_as<double>("/v", hyperslab::whole({ 12, 12 }));
    std::mt19937_64 rng { 3 };
    for (int k = 0; k < 10; ++k) {
        std::shuffle(maps.begin(), maps.end(), rng);
        c.recreate_virtual_dataset("/v", maps);
        ASSERT_EQ(c.read_region_as<double>("/v", hyperslab::whole({ 12, 12 })), reference);
    }
    EXPECT_EQ(reference[8 * 12 + 8], -1.0);
}

TEST(ContainerProperty, ChainsResolveLikeFlattenedMappings)
{
    temp_dir dir;
    const auto data = iota_doubles(64, 1.0);
    {
        auto c = container::create(dir / "c.abr");
        c.create_dataset("/base", dtype::f64, { 64 }, { 8 }, 0.0);
        for (std::uint64_t i = 0; i < 8; ++i)
            c.write_chunk_as<double>("/base", { i * 8 }, std::span { data }.subspan(i * 8, 8));
        c.commit();
    }
    // each level shifts by 4 cells: level k maps [0, 64-4k) to source offset 4
    for (int k = 1; k <= 5; ++k) {
        auto c = container::create(dir / ("l" + std::to_string(k) + ".abr"));
        const auto src_file = k == 1 ? std::string { "c.abr" } : "l" + std::to_string(k - 1) + ".abr";
        const auto src_ds = k == 1 ? std::string { "/base" } : std::string { "/v" };
        const std::uint64_t n = 64 - 4 * static_cast<std::uint64_t>(k);
        c.create_virtual_dataset("/v", dtype::f64, { 64 }, 0.0, { { src_file, src_ds, { { 4 }, { n } }, { { 0 }, { n } } } });
        c.commit();
    }
    auto top = container::open(dir / "l5.abr", open_mode::read);
    const auto got = top.read_region_as<double>("/v", hyperslab::whole({ 64 }));
    // flattened: one mapping from /base [20, 64) to [0, 44)
    std::vector<double> flat(64, 0.0);
    for (std::size_t i = 0; i < 44; ++i)
        flat[i] = data[20 + i];
    EXPECT_EQ(got, flat);
}

TEST(ContainerProperty, CyclesAreReported)
{
    temp_dir dir;
    auto c = container::create(dir / "a.abr");
    c.create_virtual_dataset("/x", dtype::f64, { 4 }, 0.0, { { ".", "/y", { { 0 }, { 4 } }, { { 0 }, { 4 } } } });
    c.create_virtual_dataset("/y", dtype::f64, { 4 }, 0.0, { { ".", "/x", { { 0 }, { 4 } }, { { 0 }, { 4 } } } });
    EXPECT_EQ(error_code_of([&] { c.read_region_as<double>("/x", hyperslab::whole({ 4 })); }), errc::cyclic_reference);
}

TEST(ContainerConcurrency, ReadersNeverSeeTornFooter)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    auto w = container::create(p);
    w.create_dataset("/d", dtype::f64, { 4096 }, { 64 }, 0.0);
    w.commit();
    std::atomic<bool> done { false };
    std::atomic<int> failures { 0 };
    std::atomic<int> opens { 0 };
    std::thread reader([&] {
        while (!done) {
            try {
                auto r = container::open(p, open_mode::read);
                const auto &m = r.dataset("/d");
                // every committed chunk is complete
                for (const auto &[coord, ext] : m.chunks) {
                    std::vector<double> out(64);
                    r.read_chunk("/d", coord, std::as_writable_bytes(std::span { out }));
                    if (out[0] != static_cast<double>(coord[0]))
                        ++failures;
                }
            } catch (const std::exception &) {
                ++failures;
            }
            ++opens;
        }
    });
    for (std::uint64_t i = 0; i < 64; ++i) {
        w.write_chunk_as<double>("/d", { i * 64 }, iota_doubles(64, static_cast<double>(i * 64)));
        if (i % 4 == 3)
            w.commit();
    }
    while (opens < 50)
        std::this_thread::yield();
    done = true;
    reader.join();
    EXPECT_EQ(failures.load(), 0);
}

TEST(ContainerConcurrency, ReadersNeverSeeHalfCreatedFile)
{
    temp_dir dir;
    const auto p = dir / "a.abr";
    std::atomic<bool> done { false };
    std::atomic<int> failures { 0 };
    std::atomic<int> opens { 0 };
    std::thread reader([&] {
        while (!done) {
            try {
                (void)container::open(p, open_mode::read);
                ++opens;
            } catch (const error &e) {
                if (e.code() != errc::not_found)
                    ++failures;
            }
        }
    });
    container_options o;
    o.truncate = true;
    o.sync_on_commit = false;
    for (int i = 0; i < 300; ++i)
        (void)container::create(p, o);
    done = true;
    reader.join();
    EXPECT_EQ(failures.load(), 0);
    EXPECT_GT(opens.load(), 0);
    // the staging file never outlives create
    std::size_t entries = 0;
    for (const auto &e : std::filesystem::directory_iterator { dir.path() })
        entries += e.path().filename().string().find(".creating-") == std::string::npos ? 0 : 1;
    EXPECT_EQ(entries, 0u);
}
