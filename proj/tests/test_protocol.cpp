#include <doctest.h>

#include <sys/stat.h>

#include <bit>
#include <cmath>
#include <random>

#include "spmd/error.hpp"
#include "spmd/expr.hpp"
#include "spmd/protocol.hpp"
#include "test_support.hpp"

using namespace spmd;
using namespace spmd::protocol;
using spmd::test::same_bits;
using spmd::test::TempDir;
namespace fs = std::filesystem;

namespace {

WorkerSpec sample_spec() {
    WorkerSpec s;
    s.rank = 0;
    s.inf = 0.0;
    s.sup = 2500.0;
    s.step = 0.001;
    s.expr = std::string(expr::kBenchmarkWorkload);
    s.store = true;
    s.out_path = "out0.res";
    return s;
}

void check_same(const ResultRecord& a, const ResultRecord& b) {
    CHECK(a.rank == b.rank);
    CHECK(a.status == b.status);
    CHECK(same_bits(a.cpu_seconds, b.cpu_seconds));
    CHECK(a.count == b.count);
    CHECK(a.stored == b.stored);
    CHECK(a.message == b.message);
    REQUIRE(a.payload.size() == b.payload.size());
    for (std::size_t k = 0; k < a.payload.size(); ++k) REQUIRE(same_bits(a.payload[k], b.payload[k]));
}

}  // namespace

TEST_CASE("create_locks: zero-byte locks, stale files removed") {
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    test::write_text(dir.path() / "filelock5", "");
    test::write_text(dir.path() / "fileworker5.spec", "old");
    test::write_text(dir.path() / "out5.res", "old");
    test::write_text(dir.path() / "out1.res", "old");
    test::write_text(dir.path() / "fileworker1.spec", "kept until rewritten");
    test::write_text(dir.path() / "notes.txt", "unrelated");

    create_locks(layout, 3);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(fs::exists(layout.lock_path(i)));
        CHECK(fs::file_size(layout.lock_path(i)) == 0);
    }
    CHECK_FALSE(fs::exists(dir.path() / "filelock3"));
    CHECK_FALSE(fs::exists(dir.path() / "filelock5"));
    CHECK_FALSE(fs::exists(dir.path() / "fileworker5.spec"));
    CHECK_FALSE(fs::exists(dir.path() / "out5.res"));
    CHECK_FALSE(fs::exists(dir.path() / "out1.res"));
    CHECK(fs::exists(dir.path() / "fileworker1.spec"));
    CHECK(fs::exists(dir.path() / "notes.txt"));
}

TEST_CASE("create_locks: single rank and missing root") {
    TempDir dir;
    create_locks(WorkdirLayout(dir.path()), 1);
    CHECK(fs::exists(dir.path() / "filelock0"));
    CHECK_FALSE(fs::exists(dir.path() / "filelock1"));
    CHECK_THROWS_AS(create_locks(WorkdirLayout(dir.path() / "missing"), 1), IoError);
}

TEST_CASE("poll_once: examples") {
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    create_locks(layout, 3);
    CHECK(poll_once(layout, {0, 1, 2}) == std::set<int>{0, 1, 2});
    fs::remove(layout.lock_path(1));
    CHECK(poll_once(layout, {0, 1, 2}) == std::set<int>{0, 2});
    CHECK(poll_once(layout, {}).empty());
    CHECK(poll_once(layout, {0}) == std::set<int>{0});
}

TEST_CASE("poll_once: an existing but unreadable lock stays pending") {
    if (::geteuid() == 0) return;  // root can read anything
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    create_locks(layout, 1);
    ::chmod(layout.lock_path(0).c_str(), 0);
    CHECK(poll_once(layout, {0}) == std::set<int>{0});
}

TEST_CASE("release_lock: removes the lock and is idempotent") {
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    create_locks(layout, 3);
    release_lock(layout, 2);
    CHECK_FALSE(fs::exists(layout.lock_path(2)));
    CHECK_NOTHROW(release_lock(layout, 2));
    CHECK(fs::exists(layout.lock_path(1)));
}

TEST_CASE("spec: encoding starts with magic and rank") {
    const std::string text = encode_spec(sample_spec());
    CHECK(text.rfind("SPMDSPEC 1\nrank 0\n", 0) == 0);
    CHECK(text ==
          "SPMDSPEC 1\nrank 0\ninf 0\nsup 2500\nstep 0.001\nexpr y = 5432.060708*cos((sin(x^9.876))^-1.2345)\n"
          "store 1\nout out0.res\n");
}

TEST_CASE("spec: persist and load round-trip bit-exactly") {
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    WorkerSpec s = sample_spec();
    s.rank = 1;
    s.inf = 1 * (10000.0 / 4) + 0.001;
    s.sup = 5000.0;
    s.store = false;
    s.out_path = "out1.res";
    persist_spec(layout, s);
    const WorkerSpec back = load_spec(layout.spec_path(1));
    CHECK(back.version == 1);
    CHECK(back.rank == 1);
    CHECK(same_bits(back.inf, s.inf));
    CHECK(same_bits(back.inf, 2500.001));
    CHECK(same_bits(back.sup, s.sup));
    CHECK(same_bits(back.step, s.step));
    CHECK(back.expr == s.expr);
    CHECK(back.store == false);
    CHECK(back.out_path == "out1.res");
}

TEST_CASE("spec: malformed files") {
    const std::string good = encode_spec(sample_spec());
    const auto cut = good.find("sup ");
    CHECK_THROWS_WITH_AS(decode_spec(good.substr(0, cut)), "spec: missing field 'sup'", FormatError);
    CHECK_THROWS_AS(decode_spec("SPMDRES 1\n"), FormatError);
    CHECK_THROWS_AS(decode_spec("SPMDSPEC 2\nrank 0\n"), FormatError);
    CHECK_THROWS_AS(decode_spec(""), FormatError);

    std::string bad_real = good;
    bad_real.replace(bad_real.find("step 0.001"), 10, "step 0.0x1");
    CHECK_THROWS_AS(decode_spec(bad_real), FormatError);

    std::string bad_expr = good;
    bad_expr.replace(bad_expr.find("expr "), 5, "expr (");
    CHECK_THROWS_AS(decode_spec(bad_expr), FormatError);

    std::string reordered = good;
    reordered.replace(reordered.find("rank 0"), 6, "rnak 0");
    CHECK_THROWS_AS(decode_spec(reordered), FormatError);

    CHECK_THROWS_AS(decode_spec(good + "extra\n"), FormatError);
}

TEST_CASE("result: NaN bit patterns survive") {
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    ResultRecord rec;
    rec.rank = 1;
    rec.cpu_seconds = 2.5;
    rec.count = 4;
    rec.stored = true;
    rec.payload = {1.0, std::numeric_limits<double>::quiet_NaN(), std::bit_cast<double>(0xfff0000000000123ULL),
                   -std::numeric_limits<double>::infinity()};
    persist_result(layout, rec);
    check_same(load_result(layout.result_path(1)), rec);
}

TEST_CASE("result: unstored runs end after the header") {
    TempDir dir;
    const WorkdirLayout layout(dir.path());
    ResultRecord rec;
    rec.rank = 0;
    rec.cpu_seconds = 0.125;
    rec.count = 2500001;
    rec.stored = false;
    persist_result(layout, rec);
    const std::string text = test::slurp(layout.result_path(0));
    CHECK(text == "SPMDRES 1\nrank 0\nstatus ok\ncpu_seconds 0.125\ncount 2500001\nstored 0\n");
    check_same(load_result(layout.result_path(0)), rec);
}

TEST_CASE("result: error records keep their message on one line") {
    ResultRecord rec;
    rec.rank = 3;
    rec.status = Status::Error;
    rec.message = "unknown variable q\nsecond line";
    const ResultRecord back = decode_result(encode_result(rec));
    CHECK(back.status == Status::Error);
    CHECK(back.message == "unknown variable q second line");
    CHECK(back.payload.empty());
}

TEST_CASE("result: 10^5 random bit patterns round-trip") {
    std::mt19937_64 rng(2003);
    ResultRecord rec;
    rec.rank = 7;
    rec.cpu_seconds = std::bit_cast<double>(0x3fb999999999999aULL);
    rec.stored = true;
    rec.payload.resize(100000);
    for (auto& v : rec.payload) v = std::bit_cast<double>(rng());
    rec.count = rec.payload.size();
    check_same(decode_result(encode_result(rec)), rec);
}

TEST_CASE("result: malformed files") {
    ResultRecord rec;
    rec.count = 2;
    rec.stored = true;
    rec.payload = {1.0, 2.0};
    const std::string good = encode_result(rec);
    CHECK_THROWS_AS(decode_result(good.substr(0, good.size() - 3)), FormatError);
    CHECK_THROWS_AS(decode_result(good + "x"), FormatError);
    CHECK_THROWS_AS(decode_result("SPMDSPEC 1\n"), FormatError);
    std::string huge = good;
    huge.replace(huge.find("count 2"), 7, "count 99999999999999999");
    CHECK_THROWS_AS(decode_result(huge), FormatError);
    std::string negative = good;
    negative.replace(negative.find("cpu_seconds 0"), 13, "cpu_seconds -1");
    CHECK_THROWS_AS(decode_result(negative), FormatError);

    rec.count = 3;
    CHECK_THROWS_AS(encode_result(rec), InvalidParams);
}

TEST_CASE("write_file_atomic: journal shows write, fsync, rename in order") {
    TempDir dir;
    std::vector<std::string> events;
    const WorkdirLayout layout(dir.path(), [&](std::string_view e, const fs::path&) { events.emplace_back(e); });
    write_file_atomic(layout, dir.path() / "f", "hello");
    CHECK(events == std::vector<std::string>{"write", "fsync", "rename", "fsync-dir"});
    CHECK(test::slurp(dir.path() / "f") == "hello");
    // No temporary files left behind.
    CHECK(std::distance(fs::directory_iterator(dir.path()), fs::directory_iterator()) == 1);
}

TEST_CASE("property: header reals round-trip through shortest decimal form") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100000; ++i) {
        const double v = std::bit_cast<double>(rng());
        if (std::isnan(v)) continue;
        REQUIRE(same_bits(parse_real(format_real(v)), v));
    }
    CHECK(format_real(2500.001) == "2500.001");
    CHECK(format_real(0.001) == "0.001");
}
