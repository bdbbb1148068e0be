#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfpe/errors.hpp"

namespace sfpe {

/// Values bound to the free variables of an Expression during evaluation.
/// `x` must have exactly the expression's declared dimension; `v` is read
/// only by expressions parsed with allow_v = true.
struct Bindings {
    double t = 0.0;
    std::span<const double> x{};
    double v = 0.0;

    Bindings() = default;
    Bindings(double t_, std::span<const double> x_) : t(t_), x(x_) {}
    Bindings(double t_, std::span<const double> x_, double v_) : t(t_), x(x_), v(v_) {}
};

/// A parsed scalar arithmetic expression over (t, x1..xd, v).
///
/// Grammar: conventional precedence ^ > unary- > * / > + -, right-associative
/// `^`, parentheses, calls exp/log/sin/cos/tanh/sqrt/abs (1 arg),
/// min/max (2 args), clip (3 args); decimal literals with optional exponent.
/// No implicit multiplication.
///
/// Immutable after parse; evaluation is pure and thread-safe. NaN/Inf results
/// raise DomainError, they are never returned.
class Expression {
public:
    enum class Op : std::uint8_t {
        kConst,
        kVarT,
        kVarX,   // arg = 0-based component index
        kVarV,
        kAdd,
        kSub,
        kMul,
        kDiv,
        kPow,
        kPowInt, // arg = small positive integer exponent
        kSqr,
        kNeg,
        kExp,
        kLog,
        kSin,
        kCos,
        kTanh,
        kSqrt,
        kAbs,
        kMin,
        kMax,
        kClip,
    };

    struct Instr {
        Op op;
        std::int32_t arg = 0;
        double value = 0.0;
        std::uint32_t column = 0;  // 1-based source column, for diagnostics
    };

    /// An empty expression; evaluating it is an error. Exists so containing
    /// structs stay default-constructible.
    Expression() = default;

    /// Parses `source` against dimension `d`. References to `v` are rejected
    /// unless `allow_v`; `xk` with k > d raises UnknownIdentifier.
    static Expression parse(std::string_view source, int dimension, bool allow_v);

    double evaluate(const Bindings& b) const;

    /// Central finite-difference gradient in x with the given step.
    std::vector<double> gradient_fd(const Bindings& b, double step) const;

    int dimension() const noexcept { return dimension_; }
    bool uses_t() const noexcept { return uses_t_; }
    bool uses_v() const noexcept { return uses_v_; }
    bool uses_x() const noexcept { return uses_x_; }

    /// True when the expression references no variable at all.
    bool is_constant() const noexcept { return !uses_t_ && !uses_v_ && !uses_x_; }
    /// True when the expression is constant and evaluates to exactly zero.
    bool is_zero() const;
    /// Value of a constant expression (is_constant() required).
    double constant_value() const;

    /// Source form that re-parses to a structurally identical expression.
    std::string pretty() const;
    const std::string& source() const noexcept { return source_; }

    bool structurally_equal(const Expression& other) const noexcept;

    const std::vector<Instr>& code() const noexcept { return code_; }

private:
    std::vector<Instr> code_;   // postfix program
    std::string source_;
    int dimension_ = 0;
    int max_stack_ = 0;
    bool uses_t_ = false;
    bool uses_v_ = false;
    bool uses_x_ = false;

    friend class ExprParser;
};

}  // namespace sfpe
