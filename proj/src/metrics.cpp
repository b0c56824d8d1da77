#include "spmd/metrics.hpp"

#include <array>
#include <charconv>
#include <set>
#include <sstream>

#include "spmd/error.hpp"
#include "spmd/protocol.hpp"

namespace spmd::metrics {

std::string_view metric_name(Metric m) noexcept {
    switch (m) {
        case Metric::WorkerCpuMean: return "worker_cpu_mean";
        case Metric::MasterTotal: return "master_total";
        case Metric::Elapsed: return "elapsed";
    }
    return "?";
}

Metric parse_metric(std::string_view name) {
    for (Metric m : {Metric::WorkerCpuMean, Metric::MasterTotal, Metric::Elapsed}) {
        if (metric_name(m) == name) return m;
    }
    throw FormatError("unknown metric '" + std::string(name) + "'");
}

double mean_worker_cpu(std::span<const double> t2s) {
    if (t2s.empty()) throw EmptyInput("mean of an empty sequence");
    double sum = 0.0;
    for (double t : t2s) sum += t;
    return sum / static_cast<double>(t2s.size());
}

double speedup(double t_base, double t_p) {
    if (!(t_base > 0.0) || !(t_p > 0.0)) throw NonPositiveTime("speedup needs positive times");
    return t_base / t_p;
}

SpeedupReport speedup_row(const std::map<int, std::optional<double>>& row) {
    const auto base = row.find(1);
    if (base == row.end() || !base->second) throw InvalidParams("row has no nproc=1 baseline");
    SpeedupReport rep;
    rep.baseline = *base->second;
    for (const auto& [nproc, cell] : row) {
        if (!cell) continue;
        const double r = speedup(rep.baseline, *cell);
        rep.per_nproc[nproc] = r;
        if (r > rep.best_ratio) {
            rep.best_ratio = r;
            rep.best_nproc = nproc;
        }
    }
    return rep;
}

BenchResult bench_sweep(const BenchPlan& plan, const BenchProgress& progress) {
    if (plan.reps < 1) throw InvalidParams("reps must be >= 1");
    constexpr std::array<Metric, 3> kMetrics = {Metric::WorkerCpuMean, Metric::MasterTotal, Metric::Elapsed};

    BenchResult out;
    for (Metric m : kMetrics) out.grids.push_back(BenchGrid{m, plan.base.store, {}, plan.reps});

    for (int m : plan.m_list) {
        for (int nproc : plan.nproc_list) {
            std::array<double, 3> sums{};
            bool failed = false;
            for (int rep = 0; rep < plan.reps && !failed; ++rep) {
                runtime::RunConfig cfg = plan.base;
                cfg.nproc = nproc;
                cfg.maxvalue = m * plan.base_maxvalue;
                try {
                    const runtime::RunReport r = runtime::run_master(cfg);
                    sums[0] += r.executiontime;
                    sums[1] += r.totaltime;
                    sums[2] += r.elapsedtime;
                    if (progress) progress(m, nproc, rep, &r);
                } catch (const Error& e) {
                    failed = true;
                    out.notes.push_back("m=" + std::to_string(m) + " nproc=" + std::to_string(nproc) + " rep " +
                                        std::to_string(rep + 1) + ": " + e.what());
                    if (progress) progress(m, nproc, rep, nullptr);
                }
            }
            for (std::size_t k = 0; k < kMetrics.size(); ++k) {
                auto& cell = out.grids[k].rows[m][nproc];
                if (!failed) cell = sums[k] / plan.reps;
            }
        }
    }
    return out;
}

std::string round2(double v) {
    std::array<char, 512> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed);
    std::string text(buf.data(), res.ptr);
    if (res.ec != std::errc{} || text == "nan" || text == "-nan" || text == "inf" || text == "-inf")
        return text;

    const bool negative = !text.empty() && text[0] == '-';
    if (negative) text.erase(0, 1);
    const auto dot = text.find('.');
    std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
    std::string frac = dot == std::string::npos ? std::string() : text.substr(dot + 1);
    const bool round_up = frac.size() > 2 && frac[2] >= '5';
    frac.resize(2, '0');

    std::string digits = whole + frac;
    if (round_up) {
        int i = static_cast<int>(digits.size()) - 1;
        while (i >= 0 && digits[static_cast<std::size_t>(i)] == '9') digits[static_cast<std::size_t>(i--)] = '0';
        if (i < 0) {
            digits.insert(digits.begin(), '1');
        } else {
            ++digits[static_cast<std::size_t>(i)];
        }
    }
    std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
    const bool zero = out.find_first_not_of("0.") == std::string::npos;
    return (negative && !zero ? "-" : "") + out;
}

namespace {

std::set<int> columns_of(const GridRows& rows) {
    std::set<int> cols;
    for (const auto& [m, row] : rows) {
        for (const auto& [nproc, cell] : row) cols.insert(nproc);
    }
    return cols;
}

void csv_rows(std::ostringstream& os, const BenchGrid& grid) {
    for (const auto& [m, row] : grid.rows) {
        for (const auto& [nproc, cell] : row) {
            os << metric_name(grid.metric) << ',' << (grid.store ? "true" : "false") << ',' << m << ',' << nproc << ','
               << (cell ? protocol::format_real(*cell) : std::string()) << ',' << grid.reps << '\n';
        }
    }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    for (;;) {
        const auto p = line.find(sep);
        out.push_back(line.substr(0, p));
        if (p == std::string_view::npos) return out;
        line.remove_prefix(p + 1);
    }
}

int parse_csv_int(std::string_view t, const char* what) {
    int v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
        throw FormatError(std::string("csv: bad ") + what + " '" + std::string(t) + "'");
    return v;
}

}  // namespace

std::string render_table(const BenchGrid& grid, TableFormat format) {
    std::ostringstream os;
    if (format == TableFormat::Csv) {
        os << kCsvHeader << '\n';
        csv_rows(os, grid);
        return os.str();
    }
    const std::set<int> cols = columns_of(grid.rows);
    os << "m |";
    for (int c : cols) os << ' ' << c;
    os << '\n';
    for (const auto& [m, row] : grid.rows) {
        os << m << " |";
        for (int c : cols) {
            const auto it = row.find(c);
            os << ' ' << (it != row.end() && it->second ? round2(*it->second) : "—");
        }
        os << '\n';
    }
    return os.str();
}

std::string render_csv(std::span<const BenchGrid> grids) {
    std::ostringstream os;
    os << kCsvHeader << '\n';
    for (const auto& g : grids) csv_rows(os, g);
    return os.str();
}

std::vector<BenchGrid> parse_csv(std::string_view text) {
    std::vector<BenchGrid> grids;
    bool header_seen = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kCsvHeader) throw FormatError("csv: expected header '" + std::string(kCsvHeader) + "'");
            header_seen = true;
            continue;
        }
        const auto f = split(line, ',');
        if (f.size() != 6) throw FormatError("csv: line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields");
        const Metric metric = parse_metric(f[0]);
        bool store = false;
        if (f[1] == "true") {
            store = true;
        } else if (f[1] != "false") {
            throw FormatError("csv: bad store flag '" + std::string(f[1]) + "'");
        }
        const int m = parse_csv_int(f[2], "m");
        const int nproc = parse_csv_int(f[3], "nproc");
        std::optional<double> mean;
        if (!f[4].empty()) mean = protocol::parse_real(f[4]);
        const int reps = parse_csv_int(f[5], "reps");

        BenchGrid* grid = nullptr;
        for (auto& g : grids) {
            if (g.metric == metric && g.store == store) grid = &g;
        }
        if (grid == nullptr) {
            grids.push_back(BenchGrid{metric, store, {}, reps});
            grid = &grids.back();
        }
        if (grid->reps != reps) throw FormatError("csv: inconsistent reps within one grid");
        grid->rows[m][nproc] = mean;
    }
    if (!header_seen) throw FormatError("csv: empty input");
    return grids;
}

}  // namespace spmd::metrics
