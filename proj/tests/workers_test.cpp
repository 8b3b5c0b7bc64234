#include <abridge/array.hpp>
#include <abridge/error.hpp>
#include <abridge/workers.hpp>

#include <gtest/gtest.h>
#include <thread>
#include <unistd.h>

using namespace abridge;
using namespace std::chrono_literals;

namespace {

worker_options kind_only(worker_kind k)
{
    worker_options o;
    o.kind = k;
    return o;
}

} // namespace

class Workers : public ::testing::TestWithParam<worker_kind> {};

TEST_P(Workers, PayloadsComeBackInInstanceOrder)
{
    bool started = false;
    const auto out = run_workers(5, [](unsigned i) { return std::string(i + 1, static_cast<char>('a' + i)); },
                                 { GetParam(), std::nullopt, [&] { started = true; } });
    EXPECT_TRUE(started);
    EXPECT_EQ(out, (std::vector<std::string> { "a", "bb", "ccc", "dddd", "eeeee" }));
}

TEST_P(Workers, LargePayload)
{
    const auto out = run_workers(2, [](unsigned i) { return std::string(300000 + i, 'x'); }, kind_only(GetParam()));
    EXPECT_EQ(out[1].size(), 300001u);
}

TEST_P(Workers, ErrorsKeepTheirCode)
{
    try {
        run_workers(3, [](unsigned i) -> std::string {
            if (i == 2)
                throw error(errc::lock_timeout, "boom");
            return "";
        }, kind_only(GetParam()));
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::lock_timeout);
        EXPECT_NE(std::string { e.what() }.find("instance 2"), std::string::npos);
    }
}

TEST_P(Workers, DeadlineBecomesBarrierTimeout)
{
    try {
        run_workers(2, [](unsigned i) {
            if (i == 1)
                std::this_thread::sleep_for(400ms);
            return std::string {};
        }, { GetParam(), 50ms, {} });
        FAIL();
    } catch (const error &e) {
        EXPECT_EQ(e.code(), errc::barrier_timeout);
    }
}

TEST(Workers, ProcessesAreSeparate)
{
    const auto parent = ::getpid();
    const auto out = run_workers(3, [](unsigned) { return std::to_string(::getpid()); }, kind_only(worker_kind::processes));
    for (const auto &pid : out)
        EXPECT_NE(pid, std::to_string(parent));
    EXPECT_NE(out[0], out[1]);
}

INSTANTIATE_TEST_SUITE_P(Kinds, Workers, ::testing::Values(worker_kind::threads, worker_kind::processes));

TEST(Array, GatherPadsEdgeChunks)
{
    mem_array a { array_schema { "a", { 3, 5 }, { 2, 2 }, { { "v", dtype::i32 } } } };
    auto v = a.values<std::int32_t>(0);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = static_cast<std::int32_t>(i);
    std::vector<std::int32_t> out(4);
    gather_chunk(a.view(0), { 2, 2 }, { 2, 4 }, std::as_writable_bytes(std::span { out }), std::int64_t { -1 });
    EXPECT_EQ(out, (std::vector<std::int32_t> { 14, -1, -1, -1 }));
    gather_chunk(a.view(0), { 2, 2 }, { 0, 2 }, std::as_writable_bytes(std::span { out }), std::int64_t { -1 });
    EXPECT_EQ(out, (std::vector<std::int32_t> { 2, 3, 7, 8 }));
}

TEST(Array, GenerateIsSeeded)
{
    const array_schema s { "a", { 5000 }, { 100 }, { { "x", dtype::f64 }, { "n", dtype::i64 } } };
    const auto a = generate(s, 3);
    const auto b = generate(s, 3);
    const auto c = generate(s, 4);
    EXPECT_TRUE(std::ranges::equal(a.view(0).bytes, b.view(0).bytes));
    EXPECT_FALSE(std::ranges::equal(a.view(0).bytes, c.view(0).bytes));
    for (auto x : a.view(0).as<double>())
        ASSERT_TRUE(x >= 0.0 && x < 1.0);
    const auto r = generate(s, 3, synth_pattern::runs);
    const auto rv = r.view(1).as<std::int64_t>();
    std::size_t changes = 0;
    for (std::size_t i = 1; i < rv.size(); ++i)
        changes += rv[i] != rv[i - 1];
    EXPECT_LT(changes, 10u);
}
