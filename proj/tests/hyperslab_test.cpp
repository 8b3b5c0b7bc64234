#include <abridge/hyperslab.hpp>

#include <gtest/gtest.h>
#include <numeric>
#include <random>
#include <set>

using namespace abridge;

TEST(ChunkGrid, LinearizeExamples)
{
    const chunk_grid g1 { { 1000 }, { 100 } };
    EXPECT_EQ(g1.linearize({ 300 }), 3u);
    EXPECT_EQ(g1.chunk_count(), 10u);
    const chunk_grid g2 { { 4, 4 }, { 2, 2 } };
    EXPECT_EQ(g2.linearize({ 2, 2 }), 3u);
    EXPECT_THROW(g1.linearize({ 50 }), std::exception);
    EXPECT_THROW(g1.linearize({ 1000 }), std::exception);
}

TEST(ChunkGrid, LinearizeRoundTripsExhaustively)
{
    const chunk_grid g { { 7, 5, 9 }, { 2, 5, 4 } };
    const auto n = g.chunk_count();
    EXPECT_EQ(n, 4u * 1u * 3u);
    std::set<extents> seen;
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto c = g.delinearize(i);
        EXPECT_TRUE(g.aligned(c));
        EXPECT_TRUE(g.in_bounds(c));
        EXPECT_EQ(g.linearize(c), i);
        seen.insert(c);
    }
    EXPECT_EQ(seen.size(), n);
}

TEST(ChunkGrid, IntersectingMatchesBruteForce)
{
    const chunk_grid g { { 10, 13 }, { 3, 4 } };
    std::mt19937_64 rng { 1 };
    for (int t = 0; t < 200; ++t) {
        hyperslab r { { rng() % 10, rng() % 13 }, { 1, 1 } };
        r.count[0] = 1 + rng() % (10 - r.start[0]);
        r.count[1] = 1 + rng() % (13 - r.start[1]);
        std::vector<std::uint64_t> expect;
        for (std::uint64_t i = 0; i < g.chunk_count(); ++i)
            if (overlaps(g.clipped_box(g.delinearize(i)), r))
                expect.push_back(i);
        ASSERT_EQ(g.intersecting(r), expect);
    }
}

TEST(Hyperslab, CopyRegionMatchesElementwise)
{
    const hyperslab src_box { { 0, 0, 0 }, { 4, 5, 6 } };
    const hyperslab dst_box { { 1, 1, 2 }, { 3, 4, 4 } };
    std::vector<int> src(src_box.cells());
    std::iota(src.begin(), src.end(), 0);
    std::vector<int> dst(dst_box.cells(), -1);
    const hyperslab region { { 1, 2, 2 }, { 3, 2, 4 } };
    copy_region(std::as_bytes(std::span { src }), src_box, std::as_writable_bytes(std::span { dst }), dst_box, region,
                sizeof(int));
    for (std::uint64_t i = 0; i < 3; ++i)
        for (std::uint64_t j = 0; j < 4; ++j)
            for (std::uint64_t k = 0; k < 4; ++k) {
                const extents p { 1 + i, 1 + j, 2 + k };
                const int got = dst[linear_offset(dst_box, p)];
                const int want = contains(region, p) ? src[linear_offset(src_box, p)] : -1;
                ASSERT_EQ(got, want);
            }
}

TEST(Hyperslab, Contiguity)
{
    const hyperslab outer { { 0, 0 }, { 4, 8 } };
    EXPECT_TRUE(contiguous_in({ { 1, 0 }, { 2, 8 } }, outer));
    EXPECT_TRUE(contiguous_in({ { 1, 3 }, { 1, 4 } }, outer));
    EXPECT_FALSE(contiguous_in({ { 1, 3 }, { 2, 4 } }, outer));
    EXPECT_TRUE(within({ { 1, 3 }, { 3, 5 } }, { 4, 8 }));
    EXPECT_FALSE(within({ { 1, 3 }, { 4, 5 } }, { 4, 8 }));
    EXPECT_FALSE(within({ { 1, 3 }, { 0, 5 } }, { 4, 8 }));
}
