#include <doctest.h>

#include <sys/wait.h>

#include <sstream>

#include "spmd/cli.hpp"
#include "spmd/runtime.hpp"
#include "test_support.hpp"

using namespace spmd;
using spmd::test::ScopedEnv;
using spmd::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "spmd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

std::vector<std::string> master_args(const TempDir& dir, std::initializer_list<std::string> extra) {
    std::vector<std::string> args{"master", "--workdir", dir.path().string(), "--worker-exe", SPMD_CLI_PATH,
                                  "--poll-ms", "10"};
    args.insert(args.end(), extra);
    return args;
}

}  // namespace

TEST_CASE("eval prints the value in shortest form") {
    const Outcome o = run({"eval", "--compute", "y = x/2", "--x", "5"});
    CHECK(o.code == cli::kOk);
    CHECK(o.out == "2.5\n");
    CHECK(run({"eval", "--x", "0"}).out.find("nan") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
    CHECK(run({}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({"eval", "--x", "1", "--bogus"}).code == cli::kUsage);
    TempDir dir;
    const Outcome o = run(master_args(dir, {"--nproc", "0"}));
    CHECK(o.code == cli::kUsage);
    CHECK(o.err.find("nproc") != std::string::npos);
    CHECK(run(master_args(dir, {"--nproc", "2", "--step", "0"})).code == cli::kUsage);
    CHECK(run({"master", "--maxvalue", "10"}).code == cli::kUsage);
    CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("master prints the three timings") {
    TempDir dir;
    const Outcome o = run(master_args(dir, {"--nproc", "2", "--maxvalue", "10", "--step", "0.001"}));
    CHECK(o.code == cli::kOk);
    const auto lines = lines_of(o.out);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0].rfind("elapsedtime ", 0) == 0);
    CHECK(lines[1].rfind("totaltime ", 0) == 0);
    CHECK(lines[2].rfind("executiontime ", 0) == 0);
    CHECK(o.err.empty());

    const Outcome v = run(master_args(dir, {"--nproc", "2", "--maxvalue", "10", "--verbose"}));
    CHECK(v.code == cli::kOk);
    const auto vl = lines_of(v.out);
    REQUIRE(vl.size() == 6);
    CHECK(vl[3].rfind("worker_cpu 0 ", 0) == 0);
    CHECK(vl[5] == "result_count 10001");
}

TEST_CASE("master: parse, worker and timeout failures") {
    TempDir dir;
    const Outcome bad = run(master_args(dir, {"--nproc", "2", "--maxvalue", "10", "--compute", "y = (x"}));
    CHECK(bad.code == cli::kParseError);
    CHECK(bad.err.find("syntax error") != std::string::npos);

    const Outcome fail = run(master_args(dir, {"--nproc", "2", "--maxvalue", "10", "--compute", "y = q"}));
    CHECK(fail.code == cli::kWorkerFailure);
    CHECK(fail.err.find("unknown variable q") != std::string::npos);

    {
        const ScopedEnv delay(runtime::kDelayEnv, "1:5000");
        const Outcome slow = run(master_args(dir, {"--nproc", "2", "--maxvalue", "10", "--timeout-s", "0.5"}));
        CHECK(slow.code == cli::kTimeout);
        CHECK(slow.err.find("rank 1") != std::string::npos);
    }

    const Outcome warn = run(master_args(dir, {"--nproc", "3", "--maxvalue", "10", "--step", "1"}));
    CHECK(warn.code == cli::kOk);
    CHECK(warn.err.find("warning:") != std::string::npos);

    const Outcome missing = run({"master", "--workdir", dir.path().string(), "--nproc", "1", "--worker-exe",
                                 (dir.path() / "nope").string()});
    CHECK(missing.code == cli::kWorkerFailure);
}

TEST_CASE("workdir comes from the environment") {
    TempDir dir;
    const ScopedEnv env("SPMD_WORKDIR", dir.path().string());
    const Outcome o = run({"master", "--nproc", "1", "--maxvalue", "2", "--step", "1", "--worker-exe", SPMD_CLI_PATH,
                           "--poll-ms", "10"});
    CHECK(o.code == cli::kOk);
    CHECK(fs::exists(dir.path() / "out0.res"));
}

TEST_CASE("worker subcommand") {
    TempDir dir;
    REQUIRE(run(master_args(dir, {"--nproc", "2", "--maxvalue", "4", "--step", "1", "--compute", "y = x"})).code == 0);
    const std::string spec = (dir.path() / "fileworker1.spec").string();
    CHECK(run({"worker", "--spec", spec}).code == runtime::kWorkerOk);
    test::write_text(spec, "SPMDSPEC 1\nrank one\n");
    CHECK(run({"worker", "--spec", spec}).code == runtime::kWorkerSpecError);
    CHECK(run({"worker"}).code == cli::kUsage);
}

TEST_CASE("bench and report") {
    TempDir dir;
    const fs::path csv1 = dir.path() / "a.csv";
    const fs::path csv2 = dir.path() / "b.csv";
    for (const auto& csv : {csv1, csv2}) {
        const Outcome o = run({"bench", "--workdir", dir.path().string(), "--worker-exe", SPMD_CLI_PATH, "--poll-ms",
                               "10", "--m-list", "1,2", "--nproc-list", "1,2", "--reps", "1", "--base-maxvalue", "2",
                               "--step", "0.5", "--compute", "y = x", "--csv", csv.string()});
        REQUIRE(o.code == cli::kOk);
        CHECK(o.out.empty());
        CHECK(o.err.find("m=2 nproc=2 rep 1/1") != std::string::npos);
    }
    auto strip_means = [](const std::string& text) {
        std::string out;
        for (const auto& line : lines_of(text)) {
            std::vector<std::string> f;
            std::istringstream in(line);
            for (std::string field; std::getline(in, field, ',');) f.push_back(field);
            REQUIRE(f.size() == 6);
            out += f[0] + ',' + f[1] + ',' + f[2] + ',' + f[3] + ',' + f[5] + '\n';
        }
        return out;
    };
    const std::string a = test::slurp(csv1);
    CHECK(lines_of(a).size() == 1 + 3 * 4);
    CHECK(strip_means(a) == strip_means(test::slurp(csv2)));

    const Outcome rep = run({"report", "--csv", csv1.string()});
    CHECK(rep.code == cli::kOk);
    CHECK(rep.out.find("m | 1 2\n1 | ") != std::string::npos);
    CHECK(rep.out.find("speedup m=1: best nproc=") != std::string::npos);

    test::write_text(dir.path() / "bad.csv", "nonsense\n");
    CHECK(run({"report", "--csv", (dir.path() / "bad.csv").string()}).code == cli::kParseError);
    CHECK(run({"report", "--csv", (dir.path() / "missing.csv").string()}).code == cli::kWorkerFailure);
}

TEST_CASE("the executable propagates exit codes") {
    const std::string cmd = std::string("'") + SPMD_CLI_PATH + "' eval --x 1 --compute 'y = (' >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == cli::kParseError);
}
