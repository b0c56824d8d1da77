#pragma once

#include <vector>

namespace spmd::partition {

/// Global range is 0:step:maxvalue split over `nproc` workers.
struct PartitionParams {
    int nproc = 1;
    double maxvalue = 0.0;
    double step = 0.0;
};

struct Subrange {
    int rank = 0;
    double inf = 0.0;
    double sup = 0.0;
    double step = 0.0;
    friend bool operator==(const Subrange&, const Subrange&) = default;
};

/// Throws InvalidParams unless nproc >= 1, step > 0, maxvalue >= step (all
/// finite) and maxvalue/nproc >= step.
void validate(const PartitionParams& params);

/// Rank i covers [i*(maxvalue/nproc) + (i ? step : 0), (i+1)*(maxvalue/nproc)].
/// Every rank but the first skips one step so neighbours never share the
/// boundary point.
std::vector<Subrange> make_partition(const PartitionParams& params);

/// Number of points in inf:step:sup. The endpoint counts when it lies within
/// 4 ulp of a whole number of steps.
std::size_t colon_count(const Subrange& sr);

/// Expands inf:step:sup.
///
/// Points are produced in multiplication form, never by repeated addition.
/// When inf sits on the global step grid (inf ~= a*step for integral a,
/// within 4 ulp) the k-th point is (a + k)*step, so every rank of a divisible
/// partition reproduces the exact bits of the global range. Otherwise the
/// k-th point is inf + k*step.
std::vector<double> expand_colon(const Subrange& sr);

/// True iff maxvalue/nproc is an integral number of steps (within 4 ulp), in
/// which case the concatenated rank expansions equal the global range.
bool check_divisible(const PartitionParams& params);

}  // namespace spmd::partition
