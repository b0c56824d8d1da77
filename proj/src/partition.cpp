#include "spmd/partition.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "spmd/error.hpp"

namespace spmd::partition {

namespace {

double ulp(double v) {
    v = std::fabs(v);
    return std::nextafter(v, std::numeric_limits<double>::infinity()) - v;
}

// Integral multiple of `step` closest to `v`, if within 4 ulp of v.
bool on_grid(double v, double step, double& index) {
    const double n = std::round(v / step);
    if (std::fabs(n * step - v) <= 4.0 * ulp(v)) {
        index = n;
        return true;
    }
    return false;
}

}  // namespace

void validate(const PartitionParams& p) {
    if (p.nproc < 1) throw InvalidParams("nproc must be >= 1, got " + std::to_string(p.nproc));
    if (!std::isfinite(p.step) || p.step <= 0.0) throw InvalidParams("step must be a finite value > 0");
    if (!std::isfinite(p.maxvalue) || p.maxvalue < p.step) throw InvalidParams("maxvalue must be finite and >= step");
    if (p.maxvalue / p.nproc < p.step) throw InvalidParams("maxvalue/nproc must be >= step so every rank gets a point");
}

std::vector<Subrange> make_partition(const PartitionParams& params) {
    validate(params);
    std::vector<Subrange> out;
    out.reserve(static_cast<std::size_t>(params.nproc));
    const double share = params.maxvalue / params.nproc;
    for (int i = 0; i < params.nproc; ++i) {
        const double middlestep = i == 0 ? 0.0 : 1.0;
        Subrange sr;
        sr.rank = i;
        sr.inf = i * share + middlestep * params.step;
        sr.sup = (i + 1) * share;
        sr.step = params.step;
        if (sr.inf > sr.sup) throw InvalidParams("rank " + std::to_string(i) + " would have an empty range");
        out.push_back(sr);
    }
    return out;
}

std::size_t colon_count(const Subrange& sr) {
    if (!(sr.step > 0.0) || !(sr.inf <= sr.sup)) return 0;
    const double span = sr.sup - sr.inf;
    double n = 0.0;
    if (!on_grid(span, sr.step, n)) n = std::floor(span / sr.step);
    return static_cast<std::size_t>(n) + 1;
}

std::vector<double> expand_colon(const Subrange& sr) {
    const std::size_t count = colon_count(sr);
    std::vector<double> out(count);
    double anchor = 0.0;
    if (on_grid(sr.inf, sr.step, anchor)) {
        for (std::size_t k = 0; k < count; ++k) out[k] = (anchor + static_cast<double>(k)) * sr.step;
    } else {
        for (std::size_t k = 0; k < count; ++k) out[k] = sr.inf + static_cast<double>(k) * sr.step;
    }
    return out;
}

bool check_divisible(const PartitionParams& params) {
    validate(params);
    if (params.nproc == 1) return true;
    double n = 0.0;
    return on_grid(params.maxvalue / params.nproc, params.step, n);
}

}  // namespace spmd::partition
