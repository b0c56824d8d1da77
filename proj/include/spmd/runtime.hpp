#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spmd/protocol.hpp"

namespace spmd::runtime {

/// Exit statuses of `<exe> worker --spec <path>`.
enum WorkerExit : int { kWorkerOk = 0, kWorkerSpecError = 2, kWorkerComputeError = 3 };

/// Test hook read by workers: "<ms>" delays every rank, "<rank>:<ms>[,...]"
/// delays the listed ranks. The delay happens before the CPU clock starts.
inline constexpr const char* kDelayEnv = "SPMD_WORKER_DELAY_MS";

struct RunConfig {
    int nproc = 1;
    double maxvalue = 10000.0;
    double step = 0.001;
    std::string compute;
    bool store = true;
    std::filesystem::path workdir = ".";
    std::chrono::milliseconds poll_interval{100};
    std::chrono::milliseconds timeout{600'000};
    /// Executable started in worker mode; empty means this process's image.
    std::filesystem::path worker_exe;
};

struct RunReport {
    RunConfig config;
    double elapsedtime = 0.0;    ///< wall-clock seconds, spawn to gather
    double totaltime = 0.0;      ///< master CPU seconds over the same span
    double executiontime = 0.0;  ///< sum(worker_cpu) / nproc
    std::vector<double> worker_cpu;
    std::uint64_t result_count = 0;
    std::optional<std::vector<double>> results;
    std::vector<std::string> warnings;
};

/// CPU seconds (user + system) consumed so far by the calling process.
double process_cpu_seconds();

/// Handle on a spawned worker. Only used for liveness and diagnostics; the
/// lock files decide completion. Reaps (killing if needed) on destruction.
class WorkerProcess {
public:
    WorkerProcess(int rank, pid_t pid) noexcept : rank_(rank), pid_(pid) {}
    WorkerProcess(WorkerProcess&& other) noexcept;
    WorkerProcess& operator=(WorkerProcess&& other) noexcept;
    WorkerProcess(const WorkerProcess&) = delete;
    WorkerProcess& operator=(const WorkerProcess&) = delete;
    ~WorkerProcess();

    int rank() const noexcept { return rank_; }
    pid_t pid() const noexcept { return pid_; }

    bool running();
    /// "running", "exited with status N" or "killed by signal N".
    std::string describe();
    void kill();
    /// Blocks until the process has exited; returns the raw wait status.
    int wait();

private:
    void reap(bool block);

    int rank_ = -1;
    pid_t pid_ = -1;
    std::optional<int> status_;
};

/// Entry point of worker mode. Never throws; returns a WorkerExit value.
/// `journal` observes the worker's filesystem side effects.
int run_worker(const std::filesystem::path& spec_path, const protocol::Journal& journal = {});

/// Starts one background worker per spec. On failure the already started
/// workers are killed, the locks removed, and SpawnError thrown.
std::vector<WorkerProcess> spawn_workers(const RunConfig& config, const protocol::WorkdirLayout& layout,
                                         std::span<const protocol::WorkerSpec> specs);

struct Gathered {
    std::optional<std::vector<double>> payload;
    std::vector<double> worker_cpu;
    std::uint64_t count = 0;
};

/// Loads out0..out<nproc-1> in rank order. Missing, malformed or error
/// records raise WorkerError listing every failing rank.
Gathered gather_results(const protocol::WorkdirLayout& layout, int nproc, bool store);

struct MasterHooks {
    /// Called once right after all workers were started.
    std::function<void(std::vector<WorkerProcess>&)> on_spawn;
};

/// create locks -> write specs -> start clocks -> spawn -> poll until no lock
/// remains -> gather -> stop clocks.
///
/// Throws SyntaxError/UnknownFunction for a bad expression, InvalidParams for
/// a bad configuration, TimeoutError when locks outlive `timeout`, WorkerError
/// when any worker reported a failure. Locks are removed on every error path.
RunReport run_master(const RunConfig& config, const MasterHooks& hooks = {});

}  // namespace spmd::runtime
