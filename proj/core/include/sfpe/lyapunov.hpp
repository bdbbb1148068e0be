#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sfpe/expr.hpp"
#include "sfpe/rng.hpp"
#include "sfpe/sde.hpp"

namespace sfpe {

enum class LyapunovFamily { polynomial, heat_kernel, user_expression };

/// A Lyapunov candidate V: the polynomial family V_q(x) = (1+|x|^2)^{q/2},
/// the time-shifted backward heat kernel
/// V(t,x) = (2 pi (alpha t + eps))^{-d/2} exp(|x|^2 / (2 (alpha t + eps))),
/// or a user expression in (t, x). `rho` is the declared supersolution rate:
/// generator V <= rho * V is what check_supersolution audits.
struct LyapunovSpec {
    LyapunovFamily family = LyapunovFamily::polynomial;
    double q = 2.0;
    double alpha = 0.0;
    double epsilon = 1.0;
    std::optional<Expression> expr;
    double rho = 0.0;

    static LyapunovSpec polynomial(double q, double rho = 0.0);
    static LyapunovSpec heat_kernel(double alpha, double epsilon, double rho = 0.0);
    static LyapunovSpec user(Expression e, double rho = 0.0);

    void validate() const;
};

/// V(t, x) > 0. Raises OverflowError when the closed form exceeds the double
/// range instead of returning Inf.
double v_value(const LyapunovSpec& spec, double t, std::span<const double> x);

/// The parabolic generator applied to V:
/// dV/dt + 1/2 Tr(sigma sigma^T Hess_x V) + <mu, grad_x V>.
/// Closed-form partials for the two built-in families; central finite
/// differences with step 1e-4 (1+|x|) for user expressions.
double generator_apply(const LyapunovSpec& spec, const SdeCoefficients& c, double t,
                       std::span<const double> x);

/// Finite-difference route over any scalar field, used to cross-check the
/// closed forms and to handle user expressions.
double generator_apply_fd(const std::function<double(double, std::span<const double>)>& v,
                          const SdeCoefficients& c, double t, std::span<const double> x,
                          double step);

struct GeneratorReport {
    std::size_t points_checked = 0;
    double max_violation = 0.0;  // max of (generator - rho V) / max(1, V)
    SamplePoint argmax;
    double tol = 0.0;
    bool pass = false;
};

/// Checks generator V <= rho V on the grid; pass iff the worst violation is
/// <= tol. Violations are scaled by max(1, V) so the margin stays meaningful
/// where V is exponentially large.
GeneratorReport check_supersolution(const LyapunovSpec& spec, const SdeCoefficients& c,
                                    std::span<const SamplePoint> grid, double tol = 1e-8);

/// Smallest rate supported by the grid: max over grid of generator/V,
/// the search the polynomial family needs because no closed-form rho exists.
double fit_rho(const LyapunovSpec& spec, const SdeCoefficients& c,
               std::span<const SamplePoint> grid);

/// Shell-sampled audit of the vanishing growth-ratio hypothesis
/// inf_r sup_{|x|>r} (|f(t,x,0)|/V(t,x) + |g(x)|/V(T,x)) = 0.
/// V overflowing on a shell contributes ratio 0 (V -> infinity dominates).
struct GrowthRatioReport {
    std::vector<double> radii;
    std::vector<double> shell_sup;
    bool tail_nonincreasing = false;
    double last_sup = 0.0;
    double tol = 0.0;
    bool pass = false;
};

GrowthRatioReport check_growth_ratio(const Expression& f, const Expression& g,
                                     const LyapunovSpec& spec, double horizon,
                                     std::span<const double> radii, int samples_per_shell,
                                     const RngStream& stream, double tol = 1e-2);

/// Strict horizon condition c < 1/(2 a T) for Gaussian-growth data.
bool admissible_heat_type(double a, double c, double T);

/// Largest horizon passing admissible_heat_type for given (a, c).
double max_admissible_horizon(double a, double c);

/// Sampled difference-quotient audit of |f(t,x,v) - f(t,x,w)| <= L |v - w|.
struct LipschitzProbePoint {
    double t = 0.0;
    std::vector<double> x;
    double v = 0.0;
    double w = 0.0;
};

struct LipschitzReport {
    double max_quotient = 0.0;
    LipschitzProbePoint worst;
    double declared_L = 0.0;
    double tol = 0.0;
    bool pass = false;
};

LipschitzReport lipschitz_probe(const Expression& f, double L,
                                std::span<const LipschitzProbePoint> sample, double tol = 1e-9);

/// Largest eigenvalue of B B^T for the constant diffusion matrix of `c`
/// (power iteration): the constant `c` of the heat-type admissibility rule.
double constant_sigma_spectral_bound(const SdeCoefficients& c);

/// Localization rule for PathPlan: freeze the path once V(t, x) reaches `level`.
StopRule v_threshold_stop(const LyapunovSpec& spec, double level);

}  // namespace sfpe
