#include "spmd/protocol.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <optional>
#include <regex>

#include "spmd/error.hpp"
#include "spmd/expr.hpp"

namespace fs = std::filesystem;

namespace spmd::protocol {

namespace {

class UniqueFd {
public:
    explicit UniqueFd(int fd) noexcept : fd_(fd) {}
    UniqueFd(const UniqueFd&) = delete;
    UniqueFd& operator=(const UniqueFd&) = delete;
    ~UniqueFd() {
        if (fd_ >= 0) ::close(fd_);
    }
    int get() const noexcept { return fd_; }
    int release() noexcept { return std::exchange(fd_, -1); }

private:
    int fd_;
};

[[noreturn]] void throw_errno(const std::string& what, const fs::path& path, int err = errno) {
    throw IoError(what + " " + path.string() + ": " + std::strerror(err));
}

void write_all(int fd, std::string_view bytes, const fs::path& path) {
    while (!bytes.empty()) {
        const ssize_t n = ::write(fd, bytes.data(), bytes.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("write", path);
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

void fsync_dir(const fs::path& dir) {
    UniqueFd fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC));
    if (fd.get() < 0) throw_errno("open directory", dir);
    if (::fsync(fd.get()) != 0 && errno != EINVAL) throw_errno("fsync directory", dir);
}

std::string single_line(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return out;
}

// Sequential reader over `key value` header lines.
class HeaderReader {
public:
    HeaderReader(std::string_view bytes, const char* kind) : rest_(bytes), kind_(kind) {}

    std::optional<std::string_view> next_line() {
        const auto nl = rest_.find('\n');
        if (nl == std::string_view::npos) return std::nullopt;
        std::string_view line = rest_.substr(0, nl);
        rest_.remove_prefix(nl + 1);
        return line;
    }

    void magic(std::string_view expected_magic) {
        const auto line = next_line();
        if (!line) throw FormatError(std::string(kind_) + ": missing header line");
        const auto sp = line->find(' ');
        if (sp == std::string_view::npos || line->substr(0, sp) != expected_magic)
            throw FormatError(std::string(kind_) + ": bad magic, expected " + std::string(expected_magic));
        const std::string_view ver = line->substr(sp + 1);
        if (ver != std::to_string(kFormatVersion))
            throw FormatError(std::string(kind_) + ": unsupported version " + std::string(ver));
    }

    std::string_view field(std::string_view key) {
        const auto line = next_line();
        if (!line) throw FormatError(std::string(kind_) + ": missing field '" + std::string(key) + "'");
        if (*line == key) return {};
        if (line->size() <= key.size() || line->substr(0, key.size()) != key || (*line)[key.size()] != ' ')
            throw FormatError(std::string(kind_) + ": expected field '" + std::string(key) + "', got '" +
                              std::string(line->substr(0, 40)) + "'");
        return line->substr(key.size() + 1);
    }

    std::string_view rest() const noexcept { return rest_; }

private:
    std::string_view rest_;
    const char* kind_;
};

template <class Int>
Int parse_int(std::string_view text, const char* kind, const char* key) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw FormatError(std::string(kind) + ": bad integer for '" + key + "'");
    return v;
}

double parse_real_field(std::string_view text, const char* kind, const char* key) {
    try {
        return parse_real(text);
    } catch (const FormatError&) {
        throw FormatError(std::string(kind) + ": bad real for '" + key + "'");
    }
}

bool parse_flag(std::string_view text, const char* kind, const char* key) {
    if (text == "1") return true;
    if (text == "0") return false;
    throw FormatError(std::string(kind) + ": bad flag for '" + key + "'");
}

void append_le(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

double read_le(const char* p) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return std::bit_cast<double>(bits);
}

void remove_quietly(const fs::path& p) {
    std::error_code ec;
    fs::remove(p, ec);
}

}  // namespace

std::string format_real(double v) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

double parse_real(std::string_view text) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw FormatError("bad real '" + std::string(text) + "'");
    return v;
}

std::string read_file(const fs::path& path) {
    UniqueFd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
    if (fd.get() < 0) throw_errno("open", path);
    std::string out;
    std::array<char, 1 << 16> buf{};
    for (;;) {
        const ssize_t n = ::read(fd.get(), buf.data(), buf.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("read", path);
        }
        if (n == 0) break;
        out.append(buf.data(), static_cast<std::size_t>(n));
    }
    return out;
}

void write_file_atomic(const WorkdirLayout& layout, const fs::path& target, std::string_view bytes) {
    const fs::path dir = target.has_parent_path() ? target.parent_path() : layout.root();
    const fs::path tmp = dir / ("." + target.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        UniqueFd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
        if (fd.get() < 0) throw_errno("create", tmp);
        try {
            layout.note("write", tmp);
            write_all(fd.get(), bytes, tmp);
            layout.note("fsync", tmp);
            if (::fsync(fd.get()) != 0) throw_errno("fsync", tmp);
        } catch (...) {
            remove_quietly(tmp);
            throw;
        }
        if (::close(fd.release()) != 0) {
            remove_quietly(tmp);
            throw_errno("close", tmp);
        }
    }
    layout.note("rename", target);
    if (::rename(tmp.c_str(), target.c_str()) != 0) {
        const int err = errno;
        remove_quietly(tmp);
        throw_errno("rename onto", target, err);
    }
    layout.note("fsync-dir", dir);
    fsync_dir(dir);
}

// --- locks ------------------------------------------------------------------

void create_locks(const WorkdirLayout& layout, int nproc) {
    std::error_code ec;
    if (!fs::is_directory(layout.root(), ec)) throw IoError("work directory " + layout.root().string() + " does not exist");

    static const std::regex managed(R"((filelock|fileworker|out)(0|[1-9][0-9]*)(\.spec|\.res)?)");
    for (const auto& entry : fs::directory_iterator(layout.root(), ec)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, managed)) continue;
        const std::string prefix = m[1].str();
        const std::string suffix = m[3].str();
        const bool well_formed = (prefix == "filelock" && suffix.empty()) || (prefix == "fileworker" && suffix == ".spec") ||
                                 (prefix == "out" && suffix == ".res");
        if (!well_formed) continue;
        const long rank = std::stol(m[2].str());
        if (rank >= nproc || prefix == "out") {
            if (!fs::remove(entry.path(), ec) && ec) throw IoError("cannot remove stale " + entry.path().string());
        }
    }
    if (ec) throw IoError("cannot scan " + layout.root().string() + ": " + ec.message());

    for (int i = 0; i < nproc; ++i) {
        const fs::path p = layout.lock_path(i);
        UniqueFd fd(::open(p.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
        if (fd.get() < 0) throw_errno("create lock", p);
        layout.note("lock-create", p);
    }
}

std::set<int> poll_once(const WorkdirLayout& layout, const std::set<int>& pending) {
    std::set<int> still;
    for (int rank : pending) {
        const fs::path p = layout.lock_path(rank);
        const int fd = ::open(p.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd >= 0) {
            ::close(fd);
            still.insert(rank);
        } else if (errno != ENOENT) {
            still.insert(rank);
        }
    }
    return still;
}

void release_lock(const WorkdirLayout& layout, int rank) {
    const fs::path p = layout.lock_path(rank);
    layout.note("unlink", p);
    if (::unlink(p.c_str()) != 0 && errno != ENOENT) throw_errno("delete lock", p);
}

// --- spec files -------------------------------------------------------------

std::string encode_spec(const WorkerSpec& s) {
    if (s.expr.find_first_of("\r\n") != std::string::npos) throw InvalidParams("expression must be a single line");
    std::string out = "SPMDSPEC " + std::to_string(s.version) + "\n";
    out += "rank " + std::to_string(s.rank) + "\n";
    out += "inf " + format_real(s.inf) + "\n";
    out += "sup " + format_real(s.sup) + "\n";
    out += "step " + format_real(s.step) + "\n";
    out += "expr " + s.expr + "\n";
    out += std::string("store ") + (s.store ? "1" : "0") + "\n";
    out += "out " + s.out_path + "\n";
    return out;
}

WorkerSpec decode_spec(std::string_view text) {
    constexpr const char* kind = "spec";
    HeaderReader r(text, kind);
    r.magic("SPMDSPEC");
    WorkerSpec s;
    s.rank = parse_int<int>(r.field("rank"), kind, "rank");
    s.inf = parse_real_field(r.field("inf"), kind, "inf");
    s.sup = parse_real_field(r.field("sup"), kind, "sup");
    s.step = parse_real_field(r.field("step"), kind, "step");
    s.expr = std::string(r.field("expr"));
    s.store = parse_flag(r.field("store"), kind, "store");
    s.out_path = std::string(r.field("out"));
    if (!r.rest().empty()) throw FormatError("spec: trailing data after 'out'");

    if (s.rank < 0) throw FormatError("spec: rank must be >= 0");
    if (!(s.step > 0.0)) throw FormatError("spec: step must be > 0");
    if (!(s.inf <= s.sup)) throw FormatError("spec: inf must not exceed sup");
    if (s.out_path.empty() || fs::path(s.out_path).is_absolute()) throw FormatError("spec: out must be a relative path");
    try {
        (void)expr::parse(s.expr);
    } catch (const Error& e) {
        throw FormatError(std::string("spec: expr does not parse: ") + e.what());
    }
    return s;
}

void persist_spec(const WorkdirLayout& layout, const WorkerSpec& spec) {
    write_file_atomic(layout, layout.spec_path(spec.rank), encode_spec(spec));
}

WorkerSpec load_spec(const fs::path& path) { return decode_spec(read_file(path)); }

// --- result files -----------------------------------------------------------

std::string encode_result(const ResultRecord& rec) {
    if (rec.stored && rec.payload.size() != rec.count) throw InvalidParams("result count does not match payload length");
    if (!rec.stored && !rec.payload.empty()) throw InvalidParams("payload present on an unstored result");
    if (rec.status == Status::Error && rec.stored) throw InvalidParams("error results carry no payload");

    std::string out = "SPMDRES " + std::to_string(kFormatVersion) + "\n";
    out += "rank " + std::to_string(rec.rank) + "\n";
    out += std::string("status ") + (rec.status == Status::Ok ? "ok" : "error") + "\n";
    out += "cpu_seconds " + format_real(rec.cpu_seconds) + "\n";
    out += "count " + std::to_string(rec.count) + "\n";
    out += std::string("stored ") + (rec.stored ? "1" : "0") + "\n";
    if (rec.status == Status::Error) out += "message " + single_line(rec.message) + "\n";
    if (rec.stored) {
        out += "data\n";
        out.reserve(out.size() + 8 * rec.payload.size());
        for (double v : rec.payload) append_le(out, v);
    }
    return out;
}

ResultRecord decode_result(std::string_view bytes) {
    constexpr const char* kind = "result";
    HeaderReader r(bytes, kind);
    r.magic("SPMDRES");
    ResultRecord rec;
    rec.rank = parse_int<int>(r.field("rank"), kind, "rank");
    const std::string_view status = r.field("status");
    if (status == "ok") {
        rec.status = Status::Ok;
    } else if (status == "error") {
        rec.status = Status::Error;
    } else {
        throw FormatError("result: bad status '" + std::string(status) + "'");
    }
    rec.cpu_seconds = parse_real_field(r.field("cpu_seconds"), kind, "cpu_seconds");
    if (!(rec.cpu_seconds >= 0.0)) throw FormatError("result: cpu_seconds must be >= 0");
    rec.count = parse_int<std::uint64_t>(r.field("count"), kind, "count");
    rec.stored = parse_flag(r.field("stored"), kind, "stored");
    if (rec.status == Status::Error) rec.message = std::string(r.field("message"));

    if (rec.stored) {
        if (!r.field("data").empty()) throw FormatError("result: malformed 'data' line");
        const std::string_view data = r.rest();
        if (rec.count > data.size() / 8 || data.size() != rec.count * 8)
            throw FormatError("result: payload holds " + std::to_string(data.size()) + " bytes, count " +
                              std::to_string(rec.count) + " needs " + std::to_string(rec.count * 8));
        rec.payload.resize(rec.count);
        for (std::size_t k = 0; k < rec.count; ++k) rec.payload[k] = read_le(data.data() + 8 * k);
    } else if (!r.rest().empty()) {
        throw FormatError("result: trailing data after header");
    }
    return rec;
}

void persist_result(const WorkdirLayout& layout, const ResultRecord& rec, const fs::path& target) {
    write_file_atomic(layout, target.empty() ? layout.result_path(rec.rank) : target, encode_result(rec));
}

ResultRecord load_result(const fs::path& path) { return decode_result(read_file(path)); }

}  // namespace spmd::protocol
