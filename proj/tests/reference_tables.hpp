#pragma once

#include <array>

#include "spmd/metrics.hpp"

// Published timing grids (seconds) for the benchmark workload, m = 1..3 by
// nproc = 1..8.
namespace spmd::test {

using TimingRows = std::array<std::array<double, 8>, 3>;

// Mean worker CPU time, no data storage.
inline constexpr TimingRows kWorkerCpuNoStore = {{
    {39.32, 20.89, 14.60, 11.49, 11.86, 8.73, 9.15, 7.29},
    {77.56, 40.83, 29.20, 23.41, 22.31, 23.19, 17.93, 19.02},
    {137.75, 69.70, 51.67, 35.28, 34.91, 36.98, 32.46, 34.86},
}};

// Master total CPU time, with data storage.
inline constexpr TimingRows kMasterTotalStore = {{
    {49.55, 28.70, 26.69, 27.26, 17.98, 18.92, 17.78, 17.76},
    {131.66, 68.50, 54.33, 40.53, 38.00, 38.37, 36.76, 40.69},
    {201.65, 102.90, 75.03, 58.94, 60.97, 66.52, 67.92, 67.83},
}};

inline metrics::BenchGrid to_grid(const TimingRows& rows, metrics::Metric metric, bool store) {
    metrics::BenchGrid g{metric, store, {}, 4};
    for (int m = 1; m <= 3; ++m) {
        for (int p = 1; p <= 8; ++p) g.rows[m][p] = rows[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(p - 1)];
    }
    return g;
}

}  // namespace spmd::test
