#include "sfpe/expr.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace sfpe {

namespace {

enum class TokKind { kNumber, kIdent, kPlus, kMinus, kStar, kSlash, kCaret, kLParen, kRParen, kComma, kEnd };

struct Token {
    TokKind kind;
    double number = 0.0;
    std::string ident;
    std::size_t column = 0;  // 1-based
};

struct FunctionInfo {
    const char* name;
    Expression::Op op;
    int arity;
};

constexpr std::array<FunctionInfo, 10> kFunctions = {{
    {"exp", Expression::Op::kExp, 1},
    {"log", Expression::Op::kLog, 1},
    {"sin", Expression::Op::kSin, 1},
    {"cos", Expression::Op::kCos, 1},
    {"tanh", Expression::Op::kTanh, 1},
    {"sqrt", Expression::Op::kSqrt, 1},
    {"abs", Expression::Op::kAbs, 1},
    {"min", Expression::Op::kMin, 2},
    {"max", Expression::Op::kMax, 2},
    {"clip", Expression::Op::kClip, 3},
}};

const FunctionInfo* find_function(std::string_view name) {
    for (const auto& f : kFunctions) {
        if (name == f.name) return &f;
    }
    return nullptr;
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return current_; }

    Token take() {
        Token t = current_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        current_.column = pos_ + 1;
        if (pos_ >= src_.size()) {
            current_.kind = TokKind::kEnd;
            return;
        }
        char c = src_[pos_];
        switch (c) {
            case '+': current_.kind = TokKind::kPlus; ++pos_; return;
            case '-': current_.kind = TokKind::kMinus; ++pos_; return;
            case '*': current_.kind = TokKind::kStar; ++pos_; return;
            case '/': current_.kind = TokKind::kSlash; ++pos_; return;
            case '^': current_.kind = TokKind::kCaret; ++pos_; return;
            case '(': current_.kind = TokKind::kLParen; ++pos_; return;
            case ')': current_.kind = TokKind::kRParen; ++pos_; return;
            case ',': current_.kind = TokKind::kComma; ++pos_; return;
            default: break;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            lex_number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                ++pos_;
            }
            current_.kind = TokKind::kIdent;
            current_.ident.assign(src_.substr(start, pos_ - start));
            return;
        }
        throw SyntaxError("unexpected character '" + std::string(1, c) + "' at column " +
                              std::to_string(current_.column),
                          current_.column, "number, identifier, operator, or parenthesis");
    }

    void lex_number() {
        std::size_t start = pos_;
        bool any_digit = false;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
            any_digit = true;
        }
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
                any_digit = true;
            }
        }
        if (!any_digit) {
            throw SyntaxError("malformed number at column " + std::to_string(start + 1), start + 1,
                              "digit");
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            } else {
                pos_ = mark;  // bare 'e' belongs to the next token
            }
        }
        current_.kind = TokKind::kNumber;
        current_.number = std::strtod(std::string(src_.substr(start, pos_ - start)).c_str(), nullptr);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    Token current_;
};

}  // namespace

class ExprParser {
public:
    ExprParser(std::string_view src, int dimension, bool allow_v)
        : lex_(src), dimension_(dimension), allow_v_(allow_v) {}

    Expression run(std::string_view src) {
        Expression e;
        e.source_.assign(src);
        e.dimension_ = dimension_;
        parse_sum();
        expect_end();
        e.code_ = std::move(code_);
        e.uses_t_ = uses_t_;
        e.uses_v_ = uses_v_;
        e.uses_x_ = uses_x_;
        e.max_stack_ = max_stack_;
        fold_pow(e);
        return e;
    }

private:
    // sum := term (('+'|'-') term)*
    void parse_sum() {
        parse_term();
        while (true) {
            TokKind k = lex_.peek().kind;
            if (k == TokKind::kPlus || k == TokKind::kMinus) {
                Token op = lex_.take();
                parse_term();
                emit({k == TokKind::kPlus ? Expression::Op::kAdd : Expression::Op::kSub, 0, 0.0,
                      static_cast<std::uint32_t>(op.column)},
                     -1);
            } else {
                break;
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    void parse_term() {
        parse_unary();
        while (true) {
            TokKind k = lex_.peek().kind;
            if (k == TokKind::kStar || k == TokKind::kSlash) {
                Token op = lex_.take();
                parse_unary();
                emit({k == TokKind::kStar ? Expression::Op::kMul : Expression::Op::kDiv, 0, 0.0,
                      static_cast<std::uint32_t>(op.column)},
                     -1);
            } else {
                break;
            }
        }
    }

    // unary := '-' unary | power      (so ^ binds tighter than unary minus)
    void parse_unary() {
        if (lex_.peek().kind == TokKind::kMinus) {
            Token op = lex_.take();
            parse_unary();
            emit({Expression::Op::kNeg, 0, 0.0, static_cast<std::uint32_t>(op.column)}, 0);
            return;
        }
        parse_power();
    }

    // power := atom ('^' unary)?      (right-associative, exponent may carry unary minus)
    void parse_power() {
        parse_atom();
        if (lex_.peek().kind == TokKind::kCaret) {
            Token op = lex_.take();
            parse_unary();
            emit({Expression::Op::kPow, 0, 0.0, static_cast<std::uint32_t>(op.column)}, -1);
        }
    }

    void parse_atom() {
        const Token& t = lex_.peek();
        switch (t.kind) {
            case TokKind::kNumber: {
                Token tok = lex_.take();
                emit({Expression::Op::kConst, 0, tok.number, static_cast<std::uint32_t>(tok.column)}, 1);
                return;
            }
            case TokKind::kLParen: {
                lex_.take();
                parse_sum();
                expect(TokKind::kRParen, "')'");
                return;
            }
            case TokKind::kIdent: {
                Token tok = lex_.take();
                if (lex_.peek().kind == TokKind::kLParen) {
                    parse_call(tok);
                } else {
                    emit_variable(tok);
                }
                return;
            }
            default:
                throw SyntaxError("expected an operand at column " + std::to_string(t.column),
                                  t.column, "number, identifier, '-', or '('");
        }
    }

    void parse_call(const Token& name) {
        const FunctionInfo* fn = find_function(name.ident);
        if (fn == nullptr) {
            throw UnknownIdentifier("unknown function '" + name.ident + "' at column " +
                                    std::to_string(name.column));
        }
        lex_.take();  // '('
        int argc = 0;
        if (lex_.peek().kind != TokKind::kRParen) {
            parse_sum();
            ++argc;
            while (lex_.peek().kind == TokKind::kComma) {
                lex_.take();
                parse_sum();
                ++argc;
            }
        }
        expect(TokKind::kRParen, "')'");
        if (argc != fn->arity) {
            throw ArityError("function '" + name.ident + "' takes " + std::to_string(fn->arity) +
                             " argument(s), got " + std::to_string(argc));
        }
        emit({fn->op, 0, 0.0, static_cast<std::uint32_t>(name.column)}, 1 - fn->arity);
    }

    void emit_variable(const Token& tok) {
        const std::string& id = tok.ident;
        auto col = static_cast<std::uint32_t>(tok.column);
        if (id == "t") {
            uses_t_ = true;
            emit({Expression::Op::kVarT, 0, 0.0, col}, 1);
            return;
        }
        if (id == "v") {
            if (!allow_v_) {
                throw UnknownIdentifier("'v' is not available in this expression (column " +
                                        std::to_string(tok.column) + ")");
            }
            uses_v_ = true;
            emit({Expression::Op::kVarV, 0, 0.0, col}, 1);
            return;
        }
        if (id.size() >= 2 && id[0] == 'x') {
            bool digits = true;
            for (std::size_t i = 1; i < id.size(); ++i) {
                if (!std::isdigit(static_cast<unsigned char>(id[i]))) {
                    digits = false;
                    break;
                }
            }
            if (digits) {
                long k = std::strtol(id.c_str() + 1, nullptr, 10);
                if (k < 1 || k > dimension_) {
                    throw UnknownIdentifier("'" + id + "' exceeds the declared dimension " +
                                            std::to_string(dimension_) + " (column " +
                                            std::to_string(tok.column) + ")");
                }
                uses_x_ = true;
                emit({Expression::Op::kVarX, static_cast<std::int32_t>(k - 1), 0.0, col}, 1);
                return;
            }
        }
        throw UnknownIdentifier("unknown identifier '" + id + "' at column " +
                                std::to_string(tok.column));
    }

    void expect(TokKind k, const char* what) {
        if (lex_.peek().kind != k) {
            throw SyntaxError("expected " + std::string(what) + " at column " +
                                  std::to_string(lex_.peek().column),
                              lex_.peek().column, what);
        }
        lex_.take();
    }

    void expect_end() {
        if (lex_.peek().kind != TokKind::kEnd) {
            throw SyntaxError("unexpected trailing input at column " +
                                  std::to_string(lex_.peek().column),
                              lex_.peek().column, "end of expression or operator");
        }
    }

    void emit(Expression::Instr instr, int stack_delta) {
        code_.push_back(instr);
        depth_ += stack_delta;
        if (depth_ > max_stack_) max_stack_ = depth_;
    }

    // x ^ n with a small positive integer literal exponent is rewritten to
    // repeated multiplication; pow() dominates the Monte-Carlo inner loop otherwise.
    static void fold_pow(Expression& e) {
        for (std::size_t i = 1; i < e.code_.size(); ++i) {
            if (e.code_[i].op != Expression::Op::kPow) continue;
            Expression::Instr& exponent = e.code_[i - 1];
            if (exponent.op != Expression::Op::kConst) continue;
            double n = exponent.value;
            if (n != std::floor(n) || n < 2.0 || n > 16.0) continue;
            e.code_[i].op = n == 2.0 ? Expression::Op::kSqr : Expression::Op::kPowInt;
            e.code_[i].arg = static_cast<std::int32_t>(n);
            e.code_.erase(e.code_.begin() + static_cast<std::ptrdiff_t>(i) - 1);
            --i;
        }
    }

    Lexer lex_;
    int dimension_;
    bool allow_v_;
    std::vector<Expression::Instr> code_;
    int depth_ = 0;
    int max_stack_ = 0;
    bool uses_t_ = false;
    bool uses_v_ = false;
    bool uses_x_ = false;
};

Expression Expression::parse(std::string_view source, int dimension, bool allow_v) {
    if (source.empty()) {
        throw SyntaxError("empty expression", 1, "expression");
    }
    if (dimension < 1) {
        throw Error("expression dimension must be >= 1");
    }
    ExprParser p(source, dimension, allow_v);
    return p.run(source);
}

namespace {

[[noreturn]] void domain_fail(const char* what, std::uint32_t column) {
    throw DomainError(std::string(what) + " at column " + std::to_string(column), column);
}

inline double pow_int(double base, int n) {
    double acc = 1.0;
    double b = base;
    int e = n;
    while (e > 0) {
        if (e & 1) acc *= b;
        b *= b;
        e >>= 1;
    }
    return acc;
}

}  // namespace

double Expression::evaluate(const Bindings& b) const {
    if (code_.empty()) throw Error("evaluating an empty expression");
    if (uses_x_ && static_cast<int>(b.x.size()) != dimension_) {
        throw Error("bindings carry " + std::to_string(b.x.size()) + " states, expression needs " +
                    std::to_string(dimension_));
    }
    double fixed[32];
    std::vector<double> heap;
    double* stack = fixed;
    if (max_stack_ > 32) {
        heap.resize(static_cast<std::size_t>(max_stack_));
        stack = heap.data();
    }
    int sp = 0;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::kConst: stack[sp++] = in.value; break;
            case Op::kVarT: stack[sp++] = b.t; break;
            case Op::kVarX: stack[sp++] = b.x[static_cast<std::size_t>(in.arg)]; break;
            case Op::kVarV: stack[sp++] = b.v; break;
            case Op::kAdd: --sp; stack[sp - 1] += stack[sp]; break;
            case Op::kSub: --sp; stack[sp - 1] -= stack[sp]; break;
            case Op::kMul: --sp; stack[sp - 1] *= stack[sp]; break;
            case Op::kDiv:
                --sp;
                if (stack[sp] == 0.0) domain_fail("division by zero", in.column);
                stack[sp - 1] /= stack[sp];
                break;
            case Op::kPow: {
                --sp;
                double r = std::pow(stack[sp - 1], stack[sp]);
                if (!std::isfinite(r)) domain_fail("'^' outside its domain", in.column);
                stack[sp - 1] = r;
                break;
            }
            case Op::kPowInt: stack[sp - 1] = pow_int(stack[sp - 1], in.arg); break;
            case Op::kSqr: stack[sp - 1] *= stack[sp - 1]; break;
            case Op::kNeg: stack[sp - 1] = -stack[sp - 1]; break;
            case Op::kExp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
            case Op::kLog:
                if (stack[sp - 1] <= 0.0) domain_fail("log of a nonpositive value", in.column);
                stack[sp - 1] = std::log(stack[sp - 1]);
                break;
            case Op::kSin: stack[sp - 1] = std::sin(stack[sp - 1]); break;
            case Op::kCos: stack[sp - 1] = std::cos(stack[sp - 1]); break;
            case Op::kTanh: stack[sp - 1] = std::tanh(stack[sp - 1]); break;
            case Op::kSqrt:
                if (stack[sp - 1] < 0.0) domain_fail("sqrt of a negative value", in.column);
                stack[sp - 1] = std::sqrt(stack[sp - 1]);
                break;
            case Op::kAbs: stack[sp - 1] = std::fabs(stack[sp - 1]); break;
            case Op::kMin: --sp; stack[sp - 1] = std::fmin(stack[sp - 1], stack[sp]); break;
            case Op::kMax: --sp; stack[sp - 1] = std::fmax(stack[sp - 1], stack[sp]); break;
            case Op::kClip: {
                sp -= 2;
                double lo = stack[sp];
                double hi = stack[sp + 1];
                stack[sp - 1] = std::fmin(std::fmax(stack[sp - 1], lo), hi);
                break;
            }
        }
    }
    double result = stack[0];
    if (!std::isfinite(result)) {
        throw DomainError("expression produced a non-finite value");
    }
    return result;
}

std::vector<double> Expression::gradient_fd(const Bindings& b, double step) const {
    if (step <= 0.0) throw Error("finite-difference step must be > 0");
    std::vector<double> grad(static_cast<std::size_t>(dimension_), 0.0);
    if (!uses_x_) return grad;
    std::vector<double> x(b.x.begin(), b.x.end());
    Bindings local = b;
    local.x = x;
    for (int i = 0; i < dimension_; ++i) {
        const double saved = x[static_cast<std::size_t>(i)];
        x[static_cast<std::size_t>(i)] = saved + step;
        const double up = evaluate(local);
        x[static_cast<std::size_t>(i)] = saved - step;
        const double down = evaluate(local);
        x[static_cast<std::size_t>(i)] = saved;
        grad[static_cast<std::size_t>(i)] = (up - down) / (2.0 * step);
    }
    return grad;
}

bool Expression::is_zero() const { return is_constant() && constant_value() == 0.0; }

double Expression::constant_value() const {
    if (!is_constant()) throw Error("expression is not constant");
    return evaluate(Bindings{});
}

bool Expression::structurally_equal(const Expression& other) const noexcept {
    if (code_.size() != other.code_.size()) return false;
    for (std::size_t i = 0; i < code_.size(); ++i) {
        const Instr& a = code_[i];
        const Instr& b = other.code_[i];
        if (a.op != b.op || a.arg != b.arg) return false;
        if (a.op == Op::kConst && a.value != b.value) return false;
    }
    return true;
}

namespace {

struct PrettyFrame {
    std::string text;
    int precedence;  // 0 atom/call, 1 add, 2 mul, 3 unary minus, 4 pow
};

std::string number_to_string(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string wrap(const PrettyFrame& f, int context_precedence) {
    if (f.precedence != 0 && f.precedence < context_precedence) return "(" + f.text + ")";
    return f.text;
}

}  // namespace

std::string Expression::pretty() const {
    std::vector<PrettyFrame> stack;
    auto binary = [&stack](const char* sym, int prec) {
        PrettyFrame rhs = std::move(stack.back());
        stack.pop_back();
        PrettyFrame lhs = std::move(stack.back());
        stack.pop_back();
        // The right operand must bind strictly tighter so that right-nested
        // trees (from explicit parentheses) round-trip structurally.
        std::string text = wrap(lhs, prec) + " " + sym + " " + wrap(rhs, prec + 1);
        stack.push_back({std::move(text), prec});
    };
    auto call = [&stack](const char* name, int argc) {
        std::string args;
        for (int i = argc; i > 0; --i) {
            args += stack[stack.size() - static_cast<std::size_t>(i)].text;
            if (i > 1) args += ", ";
        }
        stack.resize(stack.size() - static_cast<std::size_t>(argc));
        stack.push_back({std::string(name) + "(" + args + ")", 0});
    };
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::kConst: stack.push_back({number_to_string(in.value), 0}); break;
            case Op::kVarT: stack.push_back({"t", 0}); break;
            case Op::kVarX: stack.push_back({"x" + std::to_string(in.arg + 1), 0}); break;
            case Op::kVarV: stack.push_back({"v", 0}); break;
            case Op::kAdd: binary("+", 1); break;
            case Op::kSub: binary("-", 1); break;
            case Op::kMul: binary("*", 2); break;
            case Op::kDiv: binary("/", 2); break;
            case Op::kPow: {
                PrettyFrame rhs = std::move(stack.back());
                stack.pop_back();
                PrettyFrame lhs = std::move(stack.back());
                stack.pop_back();
                // '^' is right-associative and binds tighter than unary minus.
                std::string text = wrap(lhs, 5) + "^" + wrap(rhs, 4);
                stack.push_back({std::move(text), 4});
                break;
            }
            case Op::kPowInt:
            case Op::kSqr: {
                PrettyFrame lhs = std::move(stack.back());
                stack.pop_back();
                std::string text = wrap(lhs, 5) + "^" + std::to_string(in.op == Op::kSqr ? 2 : in.arg);
                stack.push_back({std::move(text), 4});
                break;
            }
            case Op::kNeg: {
                PrettyFrame operand = std::move(stack.back());
                stack.pop_back();
                stack.push_back({"-" + wrap(operand, 4), 3});
                break;
            }
            case Op::kExp: call("exp", 1); break;
            case Op::kLog: call("log", 1); break;
            case Op::kSin: call("sin", 1); break;
            case Op::kCos: call("cos", 1); break;
            case Op::kTanh: call("tanh", 1); break;
            case Op::kSqrt: call("sqrt", 1); break;
            case Op::kAbs: call("abs", 1); break;
            case Op::kMin: call("min", 2); break;
            case Op::kMax: call("max", 2); break;
            case Op::kClip: call("clip", 3); break;
        }
    }
    return stack.back().text;
}

}  // namespace sfpe
