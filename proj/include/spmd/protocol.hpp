#pragma once

// On-disk contract between the master and its workers.
//
// Workdir layout (all names relative to the root):
//   filelock<i>        zero-byte lock; its presence means worker i is running
//   fileworker<i>.spec worker description written by the master
//   out<i>.res         result written by worker i
//
// Spec file (LF line endings, fixed key order):
//   SPMDSPEC 1
//   rank <int>
//   inf <real>
//   sup <real>
//   step <real>
//   expr <text to end of line>
//   store <0|1>
//   out <relative path>
//
// Result file:
//   SPMDRES 1
//   rank <int>
//   status <ok|error>
//   cpu_seconds <real>
//   count <int>
//   stored <0|1>
//   message <text>      only when status is error
//   data                only when stored is 1, followed by count
//                       little-endian IEEE-754 binary64 values
//
// Reals are written in the shortest decimal form that reads back to the
// identical binary64.
//
// A worker persists its result (fsync + rename) BEFORE deleting its lock, so
// an absent lock always implies a complete result file.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace spmd::protocol {

inline constexpr int kFormatVersion = 1;

/// Observer for filesystem side effects, in the order they happen. Events:
/// "lock-create", "write", "fsync", "rename", "fsync-dir", "unlink".
using Journal = std::function<void(std::string_view event, const std::filesystem::path& path)>;

class WorkdirLayout {
public:
    explicit WorkdirLayout(std::filesystem::path root, Journal journal = {})
        : root_(std::move(root)), journal_(std::move(journal)) {}

    const std::filesystem::path& root() const noexcept { return root_; }

    static std::string lock_name(int rank) { return "filelock" + std::to_string(rank); }
    static std::string spec_name(int rank) { return "fileworker" + std::to_string(rank) + ".spec"; }
    static std::string result_name(int rank) { return "out" + std::to_string(rank) + ".res"; }

    std::filesystem::path lock_path(int rank) const { return root_ / lock_name(rank); }
    std::filesystem::path spec_path(int rank) const { return root_ / spec_name(rank); }
    std::filesystem::path result_path(int rank) const { return root_ / result_name(rank); }

    void note(std::string_view event, const std::filesystem::path& path) const {
        if (journal_) journal_(event, path);
    }

private:
    std::filesystem::path root_;
    Journal journal_;
};

struct WorkerSpec {
    int version = kFormatVersion;
    int rank = 0;
    double inf = 0.0;
    double sup = 0.0;
    double step = 0.0;
    std::string expr;
    bool store = true;
    std::string out_path;
};

enum class Status { Ok, Error };

struct ResultRecord {
    int rank = 0;
    Status status = Status::Ok;
    double cpu_seconds = 0.0;
    std::uint64_t count = 0;
    bool stored = false;
    std::vector<double> payload;
    std::string message;
};

// --- lock lifecycle ---------------------------------------------------------

/// Creates zero-byte filelock0..filelock<nproc-1>. Leftovers from earlier
/// runs are removed: every file of a rank >= nproc and every result file.
void create_locks(const WorkdirLayout& layout, int nproc);

/// Ranks of `pending` whose lock still exists (open-for-read succeeds or
/// fails for a reason other than absence).
std::set<int> poll_once(const WorkdirLayout& layout, const std::set<int>& pending);

/// Deletes filelock<rank>. Already absent counts as success.
void release_lock(const WorkdirLayout& layout, int rank);

// --- spec files -------------------------------------------------------------

std::string encode_spec(const WorkerSpec& spec);
WorkerSpec decode_spec(std::string_view text);
void persist_spec(const WorkdirLayout& layout, const WorkerSpec& spec);
WorkerSpec load_spec(const std::filesystem::path& path);

// --- result files -----------------------------------------------------------

std::string encode_result(const ResultRecord& rec);
ResultRecord decode_result(std::string_view bytes);
/// Writes to a temporary file in the root, fsyncs it, renames it onto
/// result_name(rank) (or `target`, when given) and fsyncs the directory.
void persist_result(const WorkdirLayout& layout, const ResultRecord& rec, const std::filesystem::path& target = {});
ResultRecord load_result(const std::filesystem::path& path);

// --- helpers ----------------------------------------------------------------

std::string format_real(double v);
double parse_real(std::string_view text);

/// Durable replace of `target` (temp file + fsync + rename + directory fsync).
void write_file_atomic(const WorkdirLayout& layout, const std::filesystem::path& target, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

}  // namespace spmd::protocol
