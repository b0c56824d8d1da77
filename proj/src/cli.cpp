#include "spmd/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "spmd/error.hpp"
#include "spmd/expr.hpp"
#include "spmd/metrics.hpp"
#include "spmd/partition.hpp"
#include "spmd/protocol.hpp"
#include "spmd/runtime.hpp"

namespace spmd::cli {

namespace {

using protocol::format_real;

struct RunFlags {
    double step = 0.001;
    std::string compute{expr::kBenchmarkWorkload};
    std::string workdir = ".";
    bool no_store = false;
    int poll_ms = 100;
    double timeout_s = 600.0;
    std::string worker_exe;

    void attach(CLI::App& app) {
        app.add_option("--step", step, "Spacing of the data range")->capture_default_str();
        app.add_option("--compute", compute, "Expression y = f(x) evaluated by every worker")->capture_default_str();
        app.add_option("--workdir", workdir, "Directory for lock, spec and result files")
            ->envname("SPMD_WORKDIR")
            ->capture_default_str();
        app.add_flag("--no-store", no_store, "Workers report timings only, no computed values");
        app.add_option("--poll-ms", poll_ms, "Pause between lock polls, milliseconds")->capture_default_str();
        app.add_option("--timeout-s", timeout_s, "Give up on workers after this many seconds")->capture_default_str();
        app.add_option("--worker-exe", worker_exe, "Executable started in worker mode (default: this one)");
    }

    runtime::RunConfig config() const {
        runtime::RunConfig cfg;
        cfg.step = step;
        cfg.compute = compute;
        cfg.workdir = workdir;
        cfg.store = !no_store;
        cfg.poll_interval = std::chrono::milliseconds{poll_ms};
        cfg.timeout = std::chrono::milliseconds{static_cast<long long>(timeout_s * 1000.0)};
        cfg.worker_exe = worker_exe;
        return cfg;
    }
};

std::string table_title(const metrics::BenchGrid& g) {
    return std::string(metrics::metric_name(g.metric)) + (g.store ? ", with data storage" : ", no data storage");
}

void print_tables(std::ostream& out, std::span<const metrics::BenchGrid> grids) {
    for (const auto& g : grids) {
        out << table_title(g) << '\n' << metrics::render_table(g, metrics::TableFormat::Grid);
        for (const auto& [m, row] : g.rows) {
            try {
                const auto sp = metrics::speedup_row(row);
                out << "speedup m=" << m << ": best nproc=" << sp.best_nproc << " ratio=" << metrics::round2(sp.best_ratio)
                    << '\n';
            } catch (const Error&) {
            }
        }
        out << '\n';
    }
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"File-coordinated SPMD process pool"};
    app.name("spmd");
    app.require_subcommand(1);

    RunFlags master_flags;
    int nproc = 0;
    double maxvalue = 10000.0;
    bool verbose = false;
    auto* master = app.add_subcommand("master", "Partition the range, run workers, print timings");
    master->add_option("--nproc", nproc, "Number of worker processes")->required();
    master->add_option("--maxvalue", maxvalue, "Upper end of the range 0:step:maxvalue")->capture_default_str();
    master->add_flag("--verbose", verbose, "Also print per-worker CPU times and the result count");
    master_flags.attach(*master);

    std::string spec_path;
    auto* worker = app.add_subcommand("worker", "Run one worker from its spec file");
    worker->add_option("--spec", spec_path, "Worker spec file")->required();

    RunFlags bench_flags;
    std::vector<int> m_list{1, 2, 3};
    std::vector<int> nproc_list{1, 2, 3, 4, 5, 6, 7, 8};
    int reps = 4;
    double base_maxvalue = 10000.0;
    std::string csv_path;
    bool tables = false;
    auto* bench = app.add_subcommand("bench", "Sweep m x nproc and report mean timings");
    bench->add_option("--m-list", m_list, "Range multipliers m (maxvalue = m * base)")->delimiter(',')->capture_default_str();
    bench->add_option("--nproc-list", nproc_list, "Worker counts")->delimiter(',')->capture_default_str();
    bench->add_option("--reps", reps, "Runs averaged per cell")->capture_default_str();
    bench->add_option("--base-maxvalue", base_maxvalue, "maxvalue for m = 1")->capture_default_str();
    bench->add_option("--csv", csv_path, "Write the CSV here instead of standard output");
    bench->add_flag("--tables", tables, "Also print fixed-width tables");
    bench_flags.attach(*bench);

    std::string eval_compute{expr::kBenchmarkWorkload};
    double eval_x = 0.0;
    auto* eval = app.add_subcommand("eval", "Evaluate the expression at one point");
    eval->add_option("--compute", eval_compute, "Expression y = f(x)")->capture_default_str();
    eval->add_option("--x", eval_x, "Value bound to x")->required();

    std::string report_csv;
    auto* report = app.add_subcommand("report", "Render a bench CSV as fixed-width tables");
    report->add_option("--csv", report_csv, "CSV written by bench")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    auto usage = [&](const CLI::App& sub, const std::string& message) {
        err << "error: " << message << "\n\n" << sub.help();
        return kUsage;
    };

    try {
        if (*worker) return runtime::run_worker(spec_path);

        if (*eval) {
            out << format_real(expr::evaluate_scalar(expr::parse(eval_compute), eval_x)) << '\n';
            return kOk;
        }

        if (*master) {
            runtime::RunConfig cfg = master_flags.config();
            cfg.nproc = nproc;
            cfg.maxvalue = maxvalue;
            if (master_flags.poll_ms <= 0 || master_flags.timeout_s <= 0) return usage(*master, "--poll-ms and --timeout-s must be positive");
            try {
                partition::validate({cfg.nproc, cfg.maxvalue, cfg.step});
            } catch (const InvalidParams& e) {
                return usage(*master, e.what());
            }
            const runtime::RunReport r = runtime::run_master(cfg);
            for (const auto& w : r.warnings) err << "warning: " << w << '\n';
            out << "elapsedtime " << format_real(r.elapsedtime) << '\n';
            out << "totaltime " << format_real(r.totaltime) << '\n';
            out << "executiontime " << format_real(r.executiontime) << '\n';
            if (verbose) {
                for (std::size_t i = 0; i < r.worker_cpu.size(); ++i)
                    out << "worker_cpu " << i << ' ' << format_real(r.worker_cpu[i]) << '\n';
                out << "result_count " << r.result_count << '\n';
            }
            return kOk;
        }

        if (*bench) {
            metrics::BenchPlan plan;
            plan.m_list = m_list;
            plan.nproc_list = nproc_list;
            plan.reps = reps;
            plan.base_maxvalue = base_maxvalue;
            plan.base = bench_flags.config();
            if (reps < 1 || m_list.empty() || nproc_list.empty()) return usage(*bench, "--reps, --m-list and --nproc-list must be non-empty");
            for (int m : m_list) {
                for (int p : nproc_list) {
                    try {
                        partition::validate({p, m * base_maxvalue, plan.base.step});
                    } catch (const InvalidParams& e) {
                        return usage(*bench, e.what());
                    }
                }
            }
            (void)expr::parse(plan.base.compute);

            const auto result = metrics::bench_sweep(plan, [&](int m, int p, int rep, const runtime::RunReport* r) {
                err << "m=" << m << " nproc=" << p << " rep " << rep + 1 << '/' << reps
                    << (r ? " elapsed " + format_real(r->elapsedtime) + " s" : std::string(" failed")) << '\n';
            });
            for (const auto& note : result.notes) err << "note: " << note << '\n';

            const std::string csv = metrics::render_csv(result.grids);
            if (csv_path.empty()) {
                out << csv;
                if (tables) out << '\n';
            } else {
                std::ofstream f(csv_path, std::ios::binary);
                if (!(f << csv)) throw IoError("cannot write " + csv_path);
            }
            if (tables) print_tables(out, result.grids);
            return result.notes.empty() ? kOk : kWorkerFailure;
        }

        if (*report) {
            const auto grids = metrics::parse_csv(read_text(report_csv));
            print_tables(out, grids);
            return kOk;
        }
    } catch (const TimeoutError& e) {
        err << "error: " << e.what() << '\n';
        return kTimeout;
    } catch (const WorkerError& e) {
        err << "error: " << e.what() << '\n';
        return kWorkerFailure;
    } catch (const SyntaxError& e) {
        err << "error: " << e.what() << '\n';
        return kParseError;
    } catch (const UnknownFunction& e) {
        err << "error: " << e.what() << '\n';
        return kParseError;
    } catch (const UnknownVariable& e) {
        err << "error: " << e.what() << '\n';
        return kParseError;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kParseError;
    } catch (const InvalidParams& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kWorkerFailure;
    }
    return kUsage;
}

}  // namespace spmd::cli
