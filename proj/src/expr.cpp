#include "spmd/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>

#include "spmd/error.hpp"

namespace spmd::expr {

std::string_view function_name(Function f) noexcept {
    switch (f) {
        case Function::Sin: return "sin";
        case Function::Cos: return "cos";
        case Function::Tan: return "tan";
        case Function::Exp: return "exp";
        case Function::Log: return "log";
        case Function::Sqrt: return "sqrt";
        case Function::Abs: return "abs";
    }
    return "?";
}

char operator_symbol(BinaryOp op) noexcept {
    switch (op) {
        case BinaryOp::Add: return '+';
        case BinaryOp::Sub: return '-';
        case BinaryOp::Mul: return '*';
        case BinaryOp::Div: return '/';
        case BinaryOp::Pow: return '^';
    }
    return '?';
}

namespace {

constexpr std::array<Function, 7> kFunctions = {Function::Sin, Function::Cos, Function::Tan, Function::Exp,
                                                Function::Log, Function::Sqrt, Function::Abs};

std::optional<Function> lookup_function(std::string_view name) {
    for (Function f : kFunctions) {
        if (function_name(f) == name) return f;
    }
    return std::nullopt;
}

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Equals, End };

struct Token {
    Tok kind = Tok::End;
    std::size_t offset = 0;
    std::string_view text;
    double number = 0.0;
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r' || src_[pos_] == '\n'))
            ++pos_;
        Token t;
        t.offset = pos_;
        if (pos_ >= src_.size()) return t;

        const char c = src_[pos_];
        if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() && is_digit(src_[pos_ + 1]))) return number();
        if (is_ident_start(c)) {
            std::size_t end = pos_ + 1;
            while (end < src_.size() && is_ident_char(src_[end])) ++end;
            t.kind = Tok::Ident;
            t.text = src_.substr(pos_, end - pos_);
            pos_ = end;
            return t;
        }
        switch (c) {
            case '+': t.kind = Tok::Plus; break;
            case '-': t.kind = Tok::Minus; break;
            case '*': t.kind = Tok::Star; break;
            case '/': t.kind = Tok::Slash; break;
            case '^': t.kind = Tok::Caret; break;
            case '(': t.kind = Tok::LParen; break;
            case ')': t.kind = Tok::RParen; break;
            case '=': t.kind = Tok::Equals; break;
            default: throw SyntaxError(pos_, "expression");
        }
        t.text = src_.substr(pos_, 1);
        ++pos_;
        return t;
    }

private:
    Token number() {
        const std::size_t start = pos_;
        std::size_t end = pos_;
        while (end < src_.size() && is_digit(src_[end])) ++end;
        if (end < src_.size() && src_[end] == '.') {
            ++end;
            while (end < src_.size() && is_digit(src_[end])) ++end;
        }
        if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
            std::size_t exp = end + 1;
            if (exp < src_.size() && (src_[exp] == '+' || src_[exp] == '-')) ++exp;
            if (exp >= src_.size() || !is_digit(src_[exp])) throw SyntaxError(exp, "exponent digits");
            while (exp < src_.size() && is_digit(src_[exp])) ++exp;
            end = exp;
        }
        Token t;
        t.kind = Tok::Number;
        t.offset = start;
        t.text = src_.substr(start, end - start);
        const auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        if (ec != std::errc{} || ptr != t.text.data() + t.text.size() || !std::isfinite(t.number))
            throw SyntaxError(start, "finite number literal");
        pos_ = end;
        return t;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
};

Node make_binary(BinaryOp op, Node l, Node r) { return Node{Binary{op, std::move(l), std::move(r)}}; }

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { advance(); }

    ComputeSpec parse_spec() {
        ComputeSpec spec{"y", Node{Number{0.0}}};
        if (cur_.kind == Tok::Ident) {
            // Assignment needs one token of lookahead past the identifier.
            Lexer saved = lexer_;
            const Token ident = cur_;
            advance();
            if (cur_.kind == Tok::Equals) {
                spec.target = std::string(ident.text);
                advance();
            } else {
                lexer_ = saved;
                cur_ = ident;
            }
        }
        spec.body = expression();
        if (cur_.kind != Tok::End) throw SyntaxError(cur_.offset, "operator or end of input");
        return spec;
    }

private:
    void advance() { cur_ = lexer_.next(); }

    void expect(Tok kind, const char* what) {
        if (cur_.kind != kind) throw SyntaxError(cur_.offset, what);
        advance();
    }

    Node expression() {
        Node lhs = term();
        while (cur_.kind == Tok::Plus || cur_.kind == Tok::Minus) {
            const BinaryOp op = cur_.kind == Tok::Plus ? BinaryOp::Add : BinaryOp::Sub;
            advance();
            lhs = make_binary(op, std::move(lhs), term());
        }
        return lhs;
    }

    Node term() {
        Node lhs = unary();
        while (cur_.kind == Tok::Star || cur_.kind == Tok::Slash) {
            const BinaryOp op = cur_.kind == Tok::Star ? BinaryOp::Mul : BinaryOp::Div;
            advance();
            lhs = make_binary(op, std::move(lhs), unary());
        }
        return lhs;
    }

    Node unary() {
        if (cur_.kind == Tok::Minus) {
            advance();
            return Node{Negate{unary()}};
        }
        return power();
    }

    Node power() {
        Node base = atom();
        while (cur_.kind == Tok::Caret) {
            advance();
            Node exponent = signed_atom();
            base = make_binary(BinaryOp::Pow, std::move(base), std::move(exponent));
        }
        return base;
    }

    Node signed_atom() {
        if (cur_.kind == Tok::Minus) {
            advance();
            return Node{Negate{atom()}};
        }
        if (cur_.kind == Tok::Plus) advance();
        return atom();
    }

    Node atom() {
        switch (cur_.kind) {
            case Tok::Number: {
                const double v = cur_.number;
                advance();
                return Node{Number{v}};
            }
            case Tok::Ident: {
                const Token ident = cur_;
                advance();
                if (cur_.kind != Tok::LParen) return Node{Variable{std::string(ident.text)}};
                const auto func = lookup_function(ident.text);
                if (!func) throw UnknownFunction(ident.offset, std::string(ident.text));
                advance();
                Node arg = expression();
                expect(Tok::RParen, "')'");
                return Node{Call{*func, std::move(arg)}};
            }
            case Tok::LParen: {
                advance();
                Node inner = expression();
                expect(Tok::RParen, "')'");
                return inner;
            }
            default:
                throw SyntaxError(cur_.offset, "operand");
        }
    }

    Lexer lexer_;
    Token cur_;
};

// Postfix program evaluated column-wise over chunks of the input.
enum class OpCode : std::uint8_t { Const, LoadX, Neg, Add, Sub, Mul, Div, Pow, Call };

struct Instr {
    OpCode code;
    Function func = Function::Sin;
    double value = 0.0;
};

struct Program {
    std::vector<Instr> code;
    std::size_t max_depth = 0;
};

struct Compiler {
    Program prog;
    std::size_t depth = 0;

    void push(Instr i, int delta) {
        prog.code.push_back(i);
        depth = static_cast<std::size_t>(static_cast<long>(depth) + delta);
        prog.max_depth = std::max(prog.max_depth, depth);
    }

    void emit(const Node& n) {
        std::visit(
            [this](const auto& k) {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, Number>) {
                    push({OpCode::Const, Function::Sin, k.value}, +1);
                } else if constexpr (std::is_same_v<K, Variable>) {
                    if (k.name != "x") throw UnknownVariable(k.name);
                    push({OpCode::LoadX}, +1);
                } else if constexpr (std::is_same_v<K, Negate>) {
                    emit(*k.operand);
                    push({OpCode::Neg}, 0);
                } else if constexpr (std::is_same_v<K, Binary>) {
                    emit(*k.left);
                    emit(*k.right);
                    static constexpr OpCode map[] = {OpCode::Add, OpCode::Sub, OpCode::Mul, OpCode::Div, OpCode::Pow};
                    push({map[static_cast<int>(k.op)]}, -1);
                } else {
                    emit(*k.arg);
                    push({OpCode::Call, k.func}, 0);
                }
            },
            n.kind);
    }
};

Program compile(const ComputeSpec& spec) {
    Compiler c;
    c.emit(spec.body);
    return std::move(c.prog);
}

double apply(Function f, double v) {
    switch (f) {
        case Function::Sin: return std::sin(v);
        case Function::Cos: return std::cos(v);
        case Function::Tan: return std::tan(v);
        case Function::Exp: return std::exp(v);
        case Function::Log: return std::log(v);
        case Function::Sqrt: return std::sqrt(v);
        case Function::Abs: return std::fabs(v);
    }
    return v;
}

constexpr std::size_t kChunk = 1024;

// Runs `prog` over one chunk of at most kChunk inputs. `stack` holds
// max_depth columns of kChunk doubles.
void run_chunk(const Program& prog, const double* xs, std::size_t n, double* out, std::vector<double>& stack) {
    std::size_t sp = 0;
    auto col = [&](std::size_t i) { return stack.data() + i * kChunk; };
    for (const Instr& ins : prog.code) {
        switch (ins.code) {
            case OpCode::Const: std::fill_n(col(sp++), n, ins.value); break;
            case OpCode::LoadX: std::copy_n(xs, n, col(sp++)); break;
            case OpCode::Neg: {
                double* a = col(sp - 1);
                for (std::size_t k = 0; k < n; ++k) a[k] = -a[k];
                break;
            }
            case OpCode::Call: {
                double* a = col(sp - 1);
                for (std::size_t k = 0; k < n; ++k) a[k] = apply(ins.func, a[k]);
                break;
            }
            default: {
                double* a = col(sp - 2);
                const double* b = col(sp - 1);
                switch (ins.code) {
                    case OpCode::Add: for (std::size_t k = 0; k < n; ++k) a[k] = a[k] + b[k]; break;
                    case OpCode::Sub: for (std::size_t k = 0; k < n; ++k) a[k] = a[k] - b[k]; break;
                    case OpCode::Mul: for (std::size_t k = 0; k < n; ++k) a[k] = a[k] * b[k]; break;
                    case OpCode::Div: for (std::size_t k = 0; k < n; ++k) a[k] = a[k] / b[k]; break;
                    case OpCode::Pow: for (std::size_t k = 0; k < n; ++k) a[k] = std::pow(a[k], b[k]); break;
                    default: break;
                }
                --sp;
                break;
            }
        }
    }
    std::copy_n(col(0), n, out);
}

}  // namespace

ComputeSpec parse(std::string_view source) { return Parser(source).parse_spec(); }

double evaluate_scalar(const ComputeSpec& spec, double x) {
    double out = 0.0;
    evaluate_range_into(spec, std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return out;
}

std::vector<double> evaluate_range(const ComputeSpec& spec, std::span<const double> xs) {
    std::vector<double> out(xs.size());
    evaluate_range_into(spec, xs, out);
    return out;
}

void evaluate_range_into(const ComputeSpec& spec, std::span<const double> xs, std::span<double> out) {
    if (out.size() != xs.size()) throw InvalidParams("output buffer size does not match input");
    const Program prog = compile(spec);
    std::vector<double> stack(prog.max_depth * kChunk);
    for (std::size_t begin = 0; begin < xs.size(); begin += kChunk) {
        const std::size_t n = std::min(kChunk, xs.size() - begin);
        run_chunk(prog, xs.data() + begin, n, out.data() + begin, stack);
    }
}

}  // namespace spmd::expr
