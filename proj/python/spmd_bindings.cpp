#include <pybind11/chrono.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spmd/error.hpp"
#include "spmd/expr.hpp"
#include "spmd/metrics.hpp"
#include "spmd/partition.hpp"
#include "spmd/protocol.hpp"
#include "spmd/runtime.hpp"

namespace py = pybind11;
using namespace spmd;

namespace {

py::array_t<double> to_array(std::vector<double> v) {
    auto* heap = new std::vector<double>(std::move(v));
    py::capsule owner(heap, [](void* p) { delete static_cast<std::vector<double>*>(p); });
    return py::array_t<double>(static_cast<py::ssize_t>(heap->size()), heap->data(), owner);
}

std::span<const double> as_span(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw py::value_error("expected a one-dimensional array");
    return {a.data(), static_cast<std::size_t>(a.size())};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "File-coordinated SPMD process pool: expression workload, range partitioning, "
              "lock-file protocol, master/worker runtime and speedup tables.";

    auto base = py::register_exception<Error>(m, "SpmdError", PyExc_RuntimeError);
    py::register_exception<SyntaxError>(m, "ExpressionSyntaxError", base.ptr());
    py::register_exception<UnknownFunction>(m, "UnknownFunction", base.ptr());
    py::register_exception<UnknownVariable>(m, "UnknownVariable", base.ptr());
    py::register_exception<InvalidParams>(m, "InvalidParams", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<SpawnError>(m, "SpawnError", base.ptr());
    py::register_exception<TimeoutError>(m, "WorkerTimeoutError", base.ptr());
    py::register_exception<WorkerError>(m, "WorkerError", base.ptr());
    py::register_exception<EmptyInput>(m, "EmptyInput", base.ptr());
    py::register_exception<NonPositiveTime>(m, "NonPositiveTime", base.ptr());

    // expr
    py::class_<expr::ComputeSpec>(m, "ComputeSpec")
        .def_readonly("target", &expr::ComputeSpec::target)
        .def("__eq__", [](const expr::ComputeSpec& a, const expr::ComputeSpec& b) { return a == b; });
    m.attr("BENCHMARK_WORKLOAD") = std::string(expr::kBenchmarkWorkload);
    m.def("parse", &expr::parse, py::arg("source"));
    m.def("evaluate_scalar", &expr::evaluate_scalar, py::arg("spec"), py::arg("x"));
    m.def(
        "evaluate_range",
        [](const expr::ComputeSpec& spec, const py::array_t<double, py::array::c_style | py::array::forcecast>& xs) {
            const auto in = as_span(xs);
            std::vector<double> out;
            {
                py::gil_scoped_release nogil;
                out = expr::evaluate_range(spec, in);
            }
            return to_array(std::move(out));
        },
        py::arg("spec"), py::arg("xs"));

    // partition
    py::class_<partition::Subrange>(m, "Subrange")
        .def(py::init([](int rank, double inf, double sup, double step) { return partition::Subrange{rank, inf, sup, step}; }),
             py::arg("rank"), py::arg("inf"), py::arg("sup"), py::arg("step"))
        .def_readonly("rank", &partition::Subrange::rank)
        .def_readonly("inf", &partition::Subrange::inf)
        .def_readonly("sup", &partition::Subrange::sup)
        .def_readonly("step", &partition::Subrange::step)
        .def("__repr__", [](const partition::Subrange& s) {
            return "Subrange(rank=" + std::to_string(s.rank) + ", inf=" + protocol::format_real(s.inf) +
                   ", sup=" + protocol::format_real(s.sup) + ", step=" + protocol::format_real(s.step) + ")";
        });
    m.def("make_partition", [](int nproc, double maxvalue, double step) {
        return partition::make_partition({nproc, maxvalue, step});
    }, py::arg("nproc"), py::arg("maxvalue"), py::arg("step"));
    m.def("expand_colon", [](const partition::Subrange& s) { return to_array(partition::expand_colon(s)); }, py::arg("subrange"));
    m.def("check_divisible", [](int nproc, double maxvalue, double step) {
        return partition::check_divisible({nproc, maxvalue, step});
    }, py::arg("nproc"), py::arg("maxvalue"), py::arg("step"));

    // protocol
    m.def("load_result", [](const std::filesystem::path& path) {
        const auto rec = protocol::load_result(path);
        py::dict d;
        d["rank"] = rec.rank;
        d["status"] = rec.status == protocol::Status::Ok ? "ok" : "error";
        d["cpu_seconds"] = rec.cpu_seconds;
        d["count"] = rec.count;
        d["payload"] = rec.stored ? py::object(to_array(rec.payload)) : py::none();
        d["message"] = rec.message;
        return d;
    }, py::arg("path"));

    // runtime
    py::class_<runtime::RunReport>(m, "RunReport")
        .def_readonly("elapsedtime", &runtime::RunReport::elapsedtime)
        .def_readonly("totaltime", &runtime::RunReport::totaltime)
        .def_readonly("executiontime", &runtime::RunReport::executiontime)
        .def_readonly("worker_cpu", &runtime::RunReport::worker_cpu)
        .def_readonly("result_count", &runtime::RunReport::result_count)
        .def_readonly("warnings", &runtime::RunReport::warnings)
        .def_property_readonly("results", [](const runtime::RunReport& r) -> py::object {
            if (!r.results) return py::none();
            return to_array(*r.results);
        });
    m.def(
        "run_master",
        [](int nproc, double maxvalue, double step, const std::string& compute, bool store,
           const std::filesystem::path& workdir, int poll_ms, double timeout_s, const std::filesystem::path& worker_exe) {
            runtime::RunConfig cfg;
            cfg.nproc = nproc;
            cfg.maxvalue = maxvalue;
            cfg.step = step;
            cfg.compute = compute;
            cfg.store = store;
            cfg.workdir = workdir;
            cfg.poll_interval = std::chrono::milliseconds{poll_ms};
            cfg.timeout = std::chrono::milliseconds{static_cast<long long>(timeout_s * 1000.0)};
            cfg.worker_exe = worker_exe;
            py::gil_scoped_release nogil;
            return runtime::run_master(cfg);
        },
        py::arg("nproc"), py::arg("maxvalue"), py::arg("step"), py::arg("compute"), py::arg("store") = true,
        py::arg("workdir") = ".", py::arg("poll_ms") = 100, py::arg("timeout_s") = 600.0, py::arg("worker_exe"));

    // metrics
    m.def("mean_worker_cpu", [](const std::vector<double>& t) { return metrics::mean_worker_cpu(t); }, py::arg("t2s"));
    m.def("speedup", &metrics::speedup, py::arg("t_base"), py::arg("t_p"));
    m.def("round2", &metrics::round2, py::arg("value"));
    m.def("best_speedup", [](const std::map<int, double>& row) {
        std::map<int, std::optional<double>> cells(row.begin(), row.end());
        const auto r = metrics::speedup_row(cells);
        return py::make_tuple(r.best_nproc, r.best_ratio);
    }, py::arg("row"), "(best_nproc, best_ratio) of a {nproc: seconds} row against its nproc=1 cell.");
    m.def("render_tables", [](const std::string& csv) {
        std::string out;
        for (const auto& g : metrics::parse_csv(csv)) {
            out += std::string(metrics::metric_name(g.metric)) + (g.store ? ", with data storage\n" : ", no data storage\n");
            out += metrics::render_table(g, metrics::TableFormat::Grid);
        }
        return out;
    }, py::arg("csv"));
}
