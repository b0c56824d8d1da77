#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spmd/runtime.hpp"

namespace spmd::metrics {

enum class Metric { WorkerCpuMean, MasterTotal, Elapsed };

std::string_view metric_name(Metric m) noexcept;
Metric parse_metric(std::string_view name);

/// Row m -> column nproc -> mean seconds. An empty optional is a cell whose
/// runs failed.
using GridRows = std::map<int, std::map<int, std::optional<double>>>;

struct BenchGrid {
    Metric metric = Metric::WorkerCpuMean;
    bool store = true;
    GridRows rows;
    int reps = 4;
    friend bool operator==(const BenchGrid&, const BenchGrid&) = default;
};

struct SpeedupReport {
    double baseline = 0.0;
    std::map<int, double> per_nproc;
    int best_nproc = 1;
    double best_ratio = 1.0;
};

/// Sum over length. Throws EmptyInput on an empty sequence.
double mean_worker_cpu(std::span<const double> t2s);

/// t_base / t_p. Throws NonPositiveTime unless both are > 0.
double speedup(double t_base, double t_p);

/// Speedups of one grid row against its nproc=1 cell. Failed cells are
/// skipped; ties for the best ratio go to the smaller nproc. Throws
/// InvalidParams if the row has no usable nproc=1 cell.
SpeedupReport speedup_row(const std::map<int, std::optional<double>>& row);

struct BenchPlan {
    std::vector<int> m_list{1, 2, 3};
    std::vector<int> nproc_list{1, 2, 3, 4, 5, 6, 7, 8};
    int reps = 4;
    double base_maxvalue = 10000.0;
    /// nproc and maxvalue are overwritten per run; the rest is used as given.
    runtime::RunConfig base;
};

struct BenchResult {
    /// worker_cpu_mean, master_total, elapsed, in that order.
    std::vector<BenchGrid> grids;
    std::vector<std::string> notes;
};

using BenchProgress = std::function<void(int m, int nproc, int rep, const runtime::RunReport*)>;

/// Runs every (m, nproc, rep) strictly one after another with
/// maxvalue = m * base_maxvalue. A failed run leaves its cell empty and adds
/// a note.
BenchResult bench_sweep(const BenchPlan& plan, const BenchProgress& progress = {});

enum class TableFormat { Grid, Csv };

/// Grid format: a header "m | <nproc...>" then one row per m with cells
/// rounded half away from zero to two decimals ("—" for failed cells).
/// Csv format: long form under kCsvHeader with round-trip precision.
std::string render_table(const BenchGrid& grid, TableFormat format);

/// CSV of several grids under one header.
std::string render_csv(std::span<const BenchGrid> grids);

/// Inverse of render_csv. Grids come back in first-appearance order.
std::vector<BenchGrid> parse_csv(std::string_view text);

/// Two-decimal text of v, rounding half away from zero on the shortest
/// decimal form of v (so 2.675 gives "2.68").
std::string round2(double v);

inline constexpr std::string_view kCsvHeader = "metric,store,m,nproc,mean_seconds,reps";

}  // namespace spmd::metrics
