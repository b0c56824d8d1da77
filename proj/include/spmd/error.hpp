#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spmd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t offset, std::string expected)
        : Error("syntax error at offset " + std::to_string(offset) + ": expected " + expected),
          offset_(offset), expected_(std::move(expected)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& expected() const noexcept { return expected_; }

private:
    std::size_t offset_;
    std::string expected_;
};

class UnknownFunction : public Error {
public:
    UnknownFunction(std::size_t offset, const std::string& name)
        : Error("unknown function " + name + " at offset " + std::to_string(offset)), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class UnknownVariable : public Error {
public:
    explicit UnknownVariable(const std::string& name)
        : Error("unknown variable " + name), name_(name) {}
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class InvalidParams : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class SpawnError : public Error {
public:
    using Error::Error;
};

class TimeoutError : public Error {
public:
    TimeoutError(const std::string& what, std::vector<int> ranks)
        : Error(what), ranks_(std::move(ranks)) {}
    const std::vector<int>& ranks() const noexcept { return ranks_; }

private:
    std::vector<int> ranks_;
};

struct RankFailure {
    int rank;
    std::string message;
};

class WorkerError : public Error {
public:
    WorkerError(const std::string& what, std::vector<RankFailure> failures)
        : Error(what), failures_(std::move(failures)) {}
    const std::vector<RankFailure>& failures() const noexcept { return failures_; }

private:
    std::vector<RankFailure> failures_;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

class NonPositiveTime : public Error {
public:
    using Error::Error;
};

}  // namespace spmd
