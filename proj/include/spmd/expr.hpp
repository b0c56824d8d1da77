#pragma once

// Workload expression language.
//
//   spec   := [ident '='] expr
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' ['-' | '+'] atom)*
//   atom   := number | ident '(' expr ')' | ident | '(' expr ')'
//
// NOTE: '^' is LEFT-associative and binds tighter than unary minus, so
// 2^3^2 == 64 and -x^2 == -(x^2). The exponent may carry its own sign:
// x^-1.2345 parses as x^(-1.2345).

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace spmd::expr {

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div, Pow };
enum class Function : std::uint8_t { Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

std::string_view function_name(Function f) noexcept;
char operator_symbol(BinaryOp op) noexcept;

/// Owning pointer with value semantics (deep copy, deep compare).
template <class T>
class Box {
public:
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}  // NOLINT(implicit)
    Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other) {
        if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;
    ~Box() = default;

    const T& operator*() const noexcept { return *ptr_; }
    const T* operator->() const noexcept { return ptr_.get(); }

    friend bool operator==(const Box& a, const Box& b) { return *a == *b; }

private:
    std::unique_ptr<T> ptr_;
};

struct Node;

struct Number {
    double value;
    friend bool operator==(const Number&, const Number&) = default;
};

struct Variable {
    std::string name;
    friend bool operator==(const Variable&, const Variable&) = default;
};

struct Negate {
    Box<Node> operand;
    friend bool operator==(const Negate&, const Negate&) = default;
};

struct Binary {
    BinaryOp op;
    Box<Node> left;
    Box<Node> right;
    friend bool operator==(const Binary&, const Binary&) = default;
};

struct Call {
    Function func;
    Box<Node> arg;
    friend bool operator==(const Call&, const Call&) = default;
};

struct Node {
    std::variant<Number, Variable, Negate, Binary, Call> kind;
    friend bool operator==(const Node&, const Node&) = default;
};

/// Parsed `target = body`.
struct ComputeSpec {
    std::string target;
    Node body;
    friend bool operator==(const ComputeSpec&, const ComputeSpec&) = default;
};

/// Throws SyntaxError or UnknownFunction. Unknown variables are accepted here
/// and rejected at evaluation time.
ComputeSpec parse(std::string_view source);

/// Binds the free variable `x`. Throws UnknownVariable for any other name.
double evaluate_scalar(const ComputeSpec& spec, double x);

/// Element-wise evaluate_scalar; out[k] depends only on xs[k] and is
/// bit-identical to evaluate_scalar(spec, xs[k]).
std::vector<double> evaluate_range(const ComputeSpec& spec, std::span<const double> xs);

/// Same, writing into a caller-provided buffer of xs.size() elements.
void evaluate_range_into(const ComputeSpec& spec, std::span<const double> xs, std::span<double> out);

/// The benchmark workload.
inline constexpr std::string_view kBenchmarkWorkload = "y = 5432.060708*cos((sin(x^9.876))^-1.2345)";

}  // namespace spmd::expr
