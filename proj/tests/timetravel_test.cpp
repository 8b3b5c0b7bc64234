#include <abridge/timetravel.hpp>

#include <gtest/gtest.h>
#include <random>

#include "test_util.hpp"

using namespace abridge;
using abridge::test::temp_dir;

namespace {

dense_view view_of(const std::vector<double> &v, const extents &shape)
{
    return dense_view { dtype::f64, shape, std::as_bytes(std::span { v }) };
}

std::vector<double> as_doubles(const std::vector<std::byte> &b)
{
    std::vector<double> out(b.size() / 8);
    std::memcpy(out.data(), b.data(), b.size());
    return out;
}

std::vector<double> ramp(std::size_t n, double base)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = base + static_cast<double>(i);
    return v;
}

container fresh(const std::filesystem::path &p)
{
    return container::create(p, { .truncate = true, .lock_timeout = {}, .sync_on_commit = false });
}

} // namespace

TEST(Detect, FindsExactlyTheChangedChunks)
{
    temp_dir dir;
    auto c = fresh(dir / "t.abr");
    const auto v0 = ramp(1000, 0);
    save_version_full_copy(c, "speed", view_of(v0, { 1000 }), { 100 });
    EXPECT_TRUE(detect_changed_chunks(c, "/speed", view_of(v0, { 1000 })).empty());
    auto v1 = v0;
    v1[345] = -1;
    EXPECT_EQ(detect_changed_chunks(c, "/speed", view_of(v1, { 1000 })), std::vector<extents> { { 300 } });
    // bitwise: -0.0 differs from 0.0
    auto v2 = v0;
    v2[0] = -0.0;
    EXPECT_EQ(detect_changed_chunks(c, "/speed", view_of(v2, { 1000 })).size(), 1u);
    EXPECT_THROW(detect_changed_chunks(c, "/speed", view_of(v0, { 999 })), error);
}

TEST(Detect, UnwrittenChunksCompareAsFill)
{
    temp_dir dir;
    auto c = fresh(dir / "t.abr");
    c.create_dataset("/speed", dtype::f64, { 1000 }, { 100 }, 2.5);
    std::vector<double> v(1000, 2.5);
    v[999] = 0;
    EXPECT_EQ(detect_changed_chunks(c, "/speed", view_of(v, { 1000 })), std::vector<extents> { { 900 } });
}

TEST(DetectProperty, MatchesCellDiffOracle)
{
    std::mt19937_64 rng { 21 };
    temp_dir dir;
    for (int trial = 0; trial < 40; ++trial) {
        const extents shape { 1 + rng() % 30, 1 + rng() % 30 };
        const extents chunk { 1 + rng() % 8, 1 + rng() % 8 };
        auto c = fresh(dir / "t.abr");
        std::vector<double> a(product(shape));
        for (auto &x : a)
            x = static_cast<double>(rng() % 4);
        save_version_full_copy(c, "x", view_of(a, shape), chunk);
        auto b = a;
        for (int k = 0; k < 5; ++k)
            b[rng() % b.size()] = static_cast<double>(rng() % 4);
        std::vector<extents> oracle;
        const chunk_grid grid { shape, chunk };
        for (std::uint64_t l = 0; l < grid.chunk_count(); ++l) {
            const auto box = grid.clipped_box(grid.delinearize(l));
            bool diff = false;
            for (auto i = box.start[0]; i < box.start[0] + box.count[0]; ++i)
                for (auto j = box.start[1]; j < box.start[1] + box.count[1]; ++j)
                    diff = diff || a[i * shape[1] + j] != b[i * shape[1] + j];
            if (diff)
                oracle.push_back(box.start);
        }
        ASSERT_EQ(detect_changed_chunks(c, "/x", view_of(b, shape)), oracle);
    }
}

TEST(FullCopy, KeepsEveryVersionStored)
{
    temp_dir dir;
    auto c = fresh(dir / "t.abr");
    const auto v0 = ramp(1000, 0), v1 = ramp(1000, 5000), v2 = ramp(1000, 9000);
    EXPECT_EQ(save_version_full_copy(c, "speed", view_of(v0, { 1000 }), { 100 }), 0u);
    EXPECT_EQ(save_version_full_copy(c, "speed", view_of(v1, { 1000 }), { 100 }), 1u);
    EXPECT_EQ(c.dataset("/PreviousVersions/V0").kind, dataset_kind::stored);
    EXPECT_EQ(save_version_full_copy(c, "speed", view_of(v2, { 1000 }), { 100 }), 2u);
    EXPECT_EQ(c.data_bytes(), 3u * 8000u);
    EXPECT_EQ(as_doubles(read_version(c, "speed", 0)), v0);
    EXPECT_EQ(as_doubles(read_version(c, "speed", 1)), v1);
    EXPECT_EQ(as_doubles(read_version(c, "speed", 2)), v2);
    EXPECT_EQ(list_versions(c, "speed"), (std::vector<std::uint64_t> { 0, 1, 2 }));
    EXPECT_THROW(read_version(c, "speed", 3), error);
    EXPECT_THROW(list_versions(c, "nope"), error);
}

TEST(ChunkMosaic, ThreeVersionChainRepointsOlderMappings)
{
    temp_dir dir;
    auto c = fresh(dir / "t.abr");
    auto v = ramp(400, 0);
    save_version_chunk_mosaic(c, "speed", view_of(v, { 400 }), { 100 });
    v[150] = -1;
    save_version_chunk_mosaic(c, "speed", view_of(v, { 400 }), { 100 });
    v[320] = -2;
    EXPECT_EQ(save_version_chunk_mosaic(c, "speed", view_of(v, { 400 }), { 100 }), 2u);

    EXPECT_EQ(c.dataset("/VersionData/V1").chunks.size(), 1u);
    EXPECT_TRUE(c.dataset("/VersionData/V1").chunks.contains(extents { 300 }));
    const auto &v1 = c.dataset("/PreviousVersions/V1").mappings;
    ASSERT_EQ(v1.size(), 4u);
    std::size_t to_store = 0, to_latest = 0;
    for (const auto &m : v1) {
        to_store += m.source_dataset == "/VersionData/V1";
        to_latest += m.source_dataset == "/speed";
    }
    EXPECT_EQ(to_store, 1u);
    EXPECT_EQ(to_latest, 3u);
    for (const auto &m : c.dataset("/PreviousVersions/V0").mappings)
        EXPECT_NE(m.source_dataset, "/speed");
    EXPECT_EQ(c.dataset("/PreviousVersions/V0").mappings[3].source_dataset, "/PreviousVersions/V1");
    EXPECT_EQ(c.dataset("/PreviousVersions/V0").mappings[1].source_dataset, "/VersionData/V0");

    EXPECT_EQ(as_doubles(read_version(c, "speed", 0)), ramp(400, 0));
    auto expect1 = ramp(400, 0);
    expect1[150] = -1;
    EXPECT_EQ(as_doubles(read_version(c, "speed", 1)), expect1);
    EXPECT_EQ(as_doubles(read_version(c, "speed", 2)), v);
}

TEST(ChunkMosaic, NoChangeStoresNothing)
{
    temp_dir dir;
    auto c = fresh(dir / "t.abr");
    const auto v = ramp(400, 0);
    save_version_chunk_mosaic(c, "speed", view_of(v, { 400 }), { 100 });
    const auto before = c.data_bytes();
    save_version_chunk_mosaic(c, "speed", view_of(v, { 400 }), { 100 });
    EXPECT_EQ(c.data_bytes(), before);
    EXPECT_TRUE(c.dataset("/VersionData/V0").chunks.empty());
    for (const auto &m : c.dataset("/PreviousVersions/V0").mappings)
        EXPECT_EQ(m.source_dataset, "/speed");
}

TEST(ChunkMosaic, AddsOnlyChangedChunkBytes)
{
    temp_dir dir;
    auto c = fresh(dir / "t.abr");
    auto v = ramp(2000, 0);
    save_version_chunk_mosaic(c, "speed", view_of(v, { 2000 }), { 100 });
    for (std::size_t changed : { 0u, 1u, 7u, 20u }) {
        for (std::size_t k = 0; k < changed; ++k)
            v[k * 100 + 3] += 1;
        const auto before = c.data_bytes();
        save_version_chunk_mosaic(c, "speed", view_of(v, { 2000 }), { 100 });
        EXPECT_EQ(c.data_bytes() - before, changed * 800u);
    }
}

TEST(ChunkMosaic, ReopenedFileKeepsHistory)
{
    temp_dir dir;
    auto v = ramp(500, 0);
    {
        auto c = fresh(dir / "t.abr");
        save_version_chunk_mosaic(c, "speed", view_of(v, { 500 }), { 100 });
        v[0] = 99;
        save_version_chunk_mosaic(c, "speed", view_of(v, { 500 }), { 100 });
    }
    auto r = container::open(dir / "t.abr", open_mode::read);
    // ordinary region read of the historical dataset, no version logic
    EXPECT_EQ(r.read_region_as<double>("/PreviousVersions/V0", hyperslab::whole({ 500 })), ramp(500, 0));
    EXPECT_EQ(list_versions(r, "speed").size(), 2u);
}

// Retained copies are the oracle; both strategies (and any mix of them) must
// reproduce every version bit for bit.
TEST(VersionProperty, MosaicMixedAndFullCopyAgree)
{
    std::mt19937_64 rng { 1234 };
    temp_dir dir;
    for (int trial = 0; trial < 25; ++trial) {
        const extents shape { 1 + rng() % 20, 1 + rng() % 20 };
        const extents chunk { 1 + rng() % 6, 1 + rng() % 6 };
        const auto n = product(shape);
        auto full = fresh(dir / "full.abr");
        auto mosaic = fresh(dir / "mosaic.abr");
        auto mixed = fresh(dir / "mixed.abr");
        std::vector<std::vector<double>> history;
        std::vector<double> cur(n);
        for (auto &x : cur)
            x = static_cast<double>(rng() % 3);
        const int versions = 1 + static_cast<int>(rng() % 8);
        for (int k = 0; k < versions; ++k) {
            if (k > 0) {
                const auto edits = rng() % 6;
                for (std::uint64_t e = 0; e < edits; ++e)
                    cur[rng() % n] = static_cast<double>(rng() % 3);
            }
            history.push_back(cur);
            const auto v = view_of(cur, shape);
            save_version_full_copy(full, "a", v, chunk);
            save_version_chunk_mosaic(mosaic, "a", v, chunk);
            if (rng() % 2)
                save_version_full_copy(mixed, "a", v, chunk);
            else
                save_version_chunk_mosaic(mixed, "a", v, chunk);
        }
        for (std::size_t k = 0; k < history.size(); ++k) {
            ASSERT_EQ(as_doubles(read_version(full, "a", k)), history[k]);
            ASSERT_EQ(read_version(mosaic, "a", k), read_version(full, "a", k));
            ASSERT_EQ(read_version(mixed, "a", k), read_version(full, "a", k));
        }
        ASSERT_EQ(list_versions(mixed, "a").size(), history.size());
    }
}
