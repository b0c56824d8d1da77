#include "spmd/runtime.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <time.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "spmd/error.hpp"
#include "spmd/expr.hpp"
#include "spmd/metrics.hpp"
#include "spmd/partition.hpp"

extern char** environ;

namespace fs = std::filesystem;

namespace spmd::runtime {

using protocol::ResultRecord;
using protocol::Status;
using protocol::WorkdirLayout;
using protocol::WorkerSpec;

double process_cpu_seconds() {
    timespec ts{};
    ::clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + static_cast<double>(ts.tv_nsec) * 1e-9;
}

// --- WorkerProcess ------------------------------------------------------------

WorkerProcess::WorkerProcess(WorkerProcess&& other) noexcept
    : rank_(other.rank_), pid_(std::exchange(other.pid_, -1)), status_(other.status_) {}

WorkerProcess& WorkerProcess::operator=(WorkerProcess&& other) noexcept {
    if (this != &other) {
        if (pid_ > 0 && !status_) {
            ::kill(pid_, SIGKILL);
            reap(true);
        }
        rank_ = other.rank_;
        pid_ = std::exchange(other.pid_, -1);
        status_ = other.status_;
    }
    return *this;
}

WorkerProcess::~WorkerProcess() {
    if (pid_ > 0 && !status_) {
        reap(false);
        if (!status_) {
            ::kill(pid_, SIGKILL);
            reap(true);
        }
    }
}

void WorkerProcess::reap(bool block) {
    if (pid_ <= 0 || status_) return;
    int st = 0;
    for (;;) {
        const pid_t r = ::waitpid(pid_, &st, block ? 0 : WNOHANG);
        if (r == pid_) {
            status_ = st;
            return;
        }
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) status_ = -1;  // not our child any more
        return;
    }
}

bool WorkerProcess::running() {
    reap(false);
    return pid_ > 0 && !status_;
}

std::string WorkerProcess::describe() {
    if (running()) return "running";
    if (!status_ || *status_ < 0) return "status unknown";
    if (WIFEXITED(*status_)) return "exited with status " + std::to_string(WEXITSTATUS(*status_));
    if (WIFSIGNALED(*status_)) return "killed by signal " + std::to_string(WTERMSIG(*status_));
    return "stopped";
}

void WorkerProcess::kill() {
    if (running()) ::kill(pid_, SIGKILL);
    reap(true);
}

int WorkerProcess::wait() {
    reap(true);
    return status_.value_or(-1);
}

// --- worker -----------------------------------------------------------------

namespace {

std::chrono::milliseconds injected_delay(int rank) {
    const char* env = std::getenv(kDelayEnv);
    if (env == nullptr || *env == '\0') return std::chrono::milliseconds{0};
    auto parse_ms = [](std::string_view t) -> long {
        long v = 0;
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        return ec == std::errc{} && p == t.data() + t.size() ? v : 0;
    };
    const std::string text(env);
    if (text.find(':') == std::string::npos) return std::chrono::milliseconds{parse_ms(text)};
    std::istringstream items(text);
    std::string item;
    while (std::getline(items, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) continue;
        if (parse_ms(std::string_view(item).substr(0, colon)) == rank)
            return std::chrono::milliseconds{parse_ms(std::string_view(item).substr(colon + 1))};
    }
    return std::chrono::milliseconds{0};
}

}  // namespace

int run_worker(const fs::path& spec_path, const protocol::Journal& journal) {
    WorkerSpec spec;
    try {
        spec = protocol::load_spec(spec_path);
    } catch (const std::exception& e) {
        std::cerr << "worker: cannot load " << spec_path << ": " << e.what() << '\n';
        return kWorkerSpecError;
    }

    const WorkdirLayout layout(spec_path.has_parent_path() ? spec_path.parent_path() : fs::path("."), journal);
    const fs::path target = layout.root() / spec.out_path;
    try {
        const auto delay = injected_delay(spec.rank);
        if (delay.count() > 0) std::this_thread::sleep_for(delay);

        const expr::ComputeSpec compute = expr::parse(spec.expr);
        const std::vector<double> xs = partition::expand_colon({spec.rank, spec.inf, spec.sup, spec.step});

        ResultRecord rec;
        rec.rank = spec.rank;
        rec.count = xs.size();
        rec.stored = spec.store;
        const double t1 = process_cpu_seconds();
        if (spec.store) {
            rec.payload = expr::evaluate_range(compute, xs);
        } else {
            std::vector<double> scratch(std::min<std::size_t>(xs.size(), 1 << 16));
            for (std::size_t begin = 0; begin < xs.size(); begin += scratch.size()) {
                const std::size_t n = std::min(scratch.size(), xs.size() - begin);
                expr::evaluate_range_into(compute, std::span(xs).subspan(begin, n), std::span(scratch).first(n));
            }
        }
        rec.cpu_seconds = process_cpu_seconds() - t1;
        protocol::persist_result(layout, rec, target);
    } catch (const std::exception& e) {
        ResultRecord err;
        err.rank = spec.rank;
        err.status = Status::Error;
        err.message = e.what();
        try {
            protocol::persist_result(layout, err, target);
        } catch (const std::exception& inner) {
            std::cerr << "worker " << spec.rank << ": cannot persist error record: " << inner.what() << '\n';
        }
        try {
            protocol::release_lock(layout, spec.rank);
        } catch (const std::exception&) {
        }
        return kWorkerComputeError;
    }

    try {
        protocol::release_lock(layout, spec.rank);
    } catch (const std::exception& e) {
        std::cerr << "worker " << spec.rank << ": " << e.what() << '\n';
        return kWorkerComputeError;
    }
    return kWorkerOk;
}

// --- master -----------------------------------------------------------------

namespace {

void remove_locks(const WorkdirLayout& layout, int nproc) {
    for (int i = 0; i < nproc; ++i) {
        std::error_code ec;
        fs::remove(layout.lock_path(i), ec);
    }
}

fs::path resolve_worker_exe(const RunConfig& config) {
    if (!config.worker_exe.empty()) return config.worker_exe;
    std::error_code ec;
    fs::path self = fs::read_symlink("/proc/self/exe", ec);
    if (ec) throw SpawnError("cannot determine own executable: " + ec.message());
    return self;
}

class SpawnAttrs {
public:
    SpawnAttrs() {
        ::posix_spawn_file_actions_init(&actions_);
        ::posix_spawnattr_init(&attr_);
        for (int fd = 0; fd <= 2; ++fd)
            ::posix_spawn_file_actions_addopen(&actions_, fd, "/dev/null", fd == 0 ? O_RDONLY : O_WRONLY, 0);
        sigset_t none;
        sigemptyset(&none);
        ::posix_spawnattr_setsigmask(&attr_, &none);
        ::posix_spawnattr_setpgroup(&attr_, 0);
        ::posix_spawnattr_setflags(&attr_, POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETPGROUP);
    }
    SpawnAttrs(const SpawnAttrs&) = delete;
    SpawnAttrs& operator=(const SpawnAttrs&) = delete;
    ~SpawnAttrs() {
        ::posix_spawn_file_actions_destroy(&actions_);
        ::posix_spawnattr_destroy(&attr_);
    }

    const posix_spawn_file_actions_t* actions() const { return &actions_; }
    const posix_spawnattr_t* attr() const { return &attr_; }

private:
    posix_spawn_file_actions_t actions_{};
    posix_spawnattr_t attr_{};
};

}  // namespace

std::vector<WorkerProcess> spawn_workers(const RunConfig& config, const WorkdirLayout& layout,
                                         std::span<const WorkerSpec> specs) {
    std::vector<WorkerProcess> procs;
    try {
        const fs::path exe = resolve_worker_exe(config);
        if (::access(exe.c_str(), X_OK) != 0) throw SpawnError("worker executable " + exe.string() + " not found");

        const SpawnAttrs attrs;
        procs.reserve(specs.size());
        for (const WorkerSpec& spec : specs) {
            std::string arg0 = exe.string();
            std::string arg1 = "worker";
            std::string arg2 = "--spec";
            std::string arg3 = layout.spec_path(spec.rank).string();
            char* argv[] = {arg0.data(), arg1.data(), arg2.data(), arg3.data(), nullptr};
            pid_t pid = -1;
            const int rc = ::posix_spawn(&pid, exe.c_str(), attrs.actions(), attrs.attr(), argv, environ);
            if (rc != 0) throw SpawnError("cannot start worker " + std::to_string(spec.rank) + ": " + std::strerror(rc));
            procs.emplace_back(spec.rank, pid);
        }
    } catch (...) {
        for (auto& p : procs) p.kill();
        remove_locks(layout, config.nproc);
        throw;
    }
    return procs;
}

Gathered gather_results(const WorkdirLayout& layout, int nproc, bool store) {
    Gathered out;
    std::vector<RankFailure> failures;
    std::vector<double> merged;
    for (int i = 0; i < nproc; ++i) {
        ResultRecord rec;
        try {
            rec = protocol::load_result(layout.result_path(i));
        } catch (const Error& e) {
            failures.push_back({i, e.what()});
            continue;
        }
        if (rec.status == Status::Error) {
            failures.push_back({i, rec.message});
            continue;
        }
        if (rec.rank != i) {
            failures.push_back({i, "result file carries rank " + std::to_string(rec.rank)});
            continue;
        }
        if (store && !rec.stored) {
            failures.push_back({i, "result has no payload"});
            continue;
        }
        out.worker_cpu.push_back(rec.cpu_seconds);
        out.count += rec.count;
        if (store) merged.insert(merged.end(), rec.payload.begin(), rec.payload.end());
    }
    if (!failures.empty()) {
        std::ostringstream msg;
        msg << "worker failure:";
        for (const auto& f : failures) msg << " [rank " << f.rank << ": " << f.message << "]";
        throw WorkerError(msg.str(), std::move(failures));
    }
    if (store) out.payload = std::move(merged);
    return out;
}

RunReport run_master(const RunConfig& config, const MasterHooks& hooks) {
    const partition::PartitionParams params{config.nproc, config.maxvalue, config.step};
    partition::validate(params);
    (void)expr::parse(config.compute);
    if (config.poll_interval.count() <= 0) throw InvalidParams("poll interval must be positive");
    if (config.timeout.count() <= 0) throw InvalidParams("timeout must be positive");
    if (config.compute.find_first_of("\r\n") != std::string::npos) throw InvalidParams("expression must be a single line");

    RunReport report;
    report.config = config;
    if (!partition::check_divisible(params)) {
        report.warnings.push_back("maxvalue/nproc is not a whole number of steps; boundary points may differ from the "
                                  "sequential range");
    }

    const WorkdirLayout layout(config.workdir);
    protocol::create_locks(layout, config.nproc);

    std::vector<WorkerSpec> specs;
    try {
        for (const auto& sr : partition::make_partition(params)) {
            WorkerSpec s;
            s.rank = sr.rank;
            s.inf = sr.inf;
            s.sup = sr.sup;
            s.step = sr.step;
            s.expr = config.compute;
            s.store = config.store;
            s.out_path = WorkdirLayout::result_name(sr.rank);
            protocol::persist_spec(layout, s);
            specs.push_back(std::move(s));
        }
    } catch (...) {
        remove_locks(layout, config.nproc);
        throw;
    }

    const double cpu_mark = process_cpu_seconds();
    const auto wall_mark = std::chrono::steady_clock::now();

    std::vector<WorkerProcess> procs = spawn_workers(config, layout, specs);
    if (hooks.on_spawn) hooks.on_spawn(procs);

    std::set<int> pending;
    for (int i = 0; i < config.nproc; ++i) pending.insert(i);
    while (!pending.empty()) {
        std::this_thread::sleep_for(config.poll_interval);
        pending = protocol::poll_once(layout, pending);
        if (pending.empty()) break;
        if (std::chrono::steady_clock::now() - wall_mark >= config.timeout) {
            std::ostringstream msg;
            msg << "timed out after " << std::chrono::duration<double>(config.timeout).count() << " s waiting for rank";
            if (pending.size() > 1) msg << 's';
            std::vector<int> ranks(pending.begin(), pending.end());
            for (int r : ranks) msg << ' ' << r << " (" << procs[static_cast<std::size_t>(r)].describe() << ')';
            for (auto& p : procs) p.kill();
            remove_locks(layout, config.nproc);
            throw TimeoutError(msg.str(), std::move(ranks));
        }
    }

    Gathered gathered = gather_results(layout, config.nproc, config.store);
    report.elapsedtime = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_mark).count();
    report.totaltime = process_cpu_seconds() - cpu_mark;

    for (auto& p : procs) p.wait();

    report.worker_cpu = std::move(gathered.worker_cpu);
    report.executiontime = metrics::mean_worker_cpu(report.worker_cpu);
    report.result_count = gathered.count;
    report.results = std::move(gathered.payload);
    return report;
}

}  // namespace spmd::runtime
