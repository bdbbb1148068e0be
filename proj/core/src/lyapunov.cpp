#include "sfpe/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sfpe {

namespace {

constexpr double kLogDoubleMax = 709.0;

double norm_sq(std::span<const double> x) {
    double acc = 0.0;
    for (double xi : x) acc += xi * xi;
    return acc;
}

// sigma sigma^T, d x d row-major.
std::vector<double> diffusion_gram(const SdeCoefficients& c, double t, std::span<const double> x) {
    const int d = c.d;
    const int m = c.m;
    std::vector<double> sigma(static_cast<std::size_t>(d) * m);
    c.eval_sigma(t, x, sigma);
    std::vector<double> A(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            double acc = 0.0;
            const double* ri = sigma.data() + static_cast<std::size_t>(i) * m;
            const double* rj = sigma.data() + static_cast<std::size_t>(j) * m;
            for (int k = 0; k < m; ++k) acc += ri[k] * rj[k];
            A[static_cast<std::size_t>(i) * d + j] = acc;
            A[static_cast<std::size_t>(j) * d + i] = acc;
        }
    }
    return A;
}

}  // namespace

LyapunovSpec LyapunovSpec::polynomial(double q, double rho) {
    LyapunovSpec s;
    s.family = LyapunovFamily::polynomial;
    s.q = q;
    s.rho = rho;
    s.validate();
    return s;
}

LyapunovSpec LyapunovSpec::heat_kernel(double alpha, double epsilon, double rho) {
    LyapunovSpec s;
    s.family = LyapunovFamily::heat_kernel;
    s.alpha = alpha;
    s.epsilon = epsilon;
    s.rho = rho;
    s.validate();
    return s;
}

LyapunovSpec LyapunovSpec::user(Expression e, double rho) {
    LyapunovSpec s;
    s.family = LyapunovFamily::user_expression;
    s.expr = std::move(e);
    s.rho = rho;
    s.validate();
    return s;
}

void LyapunovSpec::validate() const {
    if (rho < 0.0) throw Error("Lyapunov rho must be >= 0");
    switch (family) {
        case LyapunovFamily::polynomial:
            if (!(q > 0.0)) throw Error("polynomial Lyapunov family requires q > 0");
            break;
        case LyapunovFamily::heat_kernel:
            if (!(epsilon > 0.0)) throw Error("heat-kernel Lyapunov family requires epsilon > 0");
            if (alpha < 0.0) throw Error("heat-kernel Lyapunov family requires alpha >= 0");
            break;
        case LyapunovFamily::user_expression:
            if (!expr) throw Error("user Lyapunov family requires an expression");
            if (expr->uses_v()) throw Error("Lyapunov expressions may not reference v");
            break;
    }
}

double v_value(const LyapunovSpec& spec, double t, std::span<const double> x) {
    switch (spec.family) {
        case LyapunovFamily::polynomial: {
            const double log_v = 0.5 * spec.q * std::log1p(norm_sq(x));
            if (log_v > kLogDoubleMax) {
                throw OverflowError("polynomial Lyapunov value exceeds double range");
            }
            return std::exp(log_v);
        }
        case LyapunovFamily::heat_kernel: {
            const double s = spec.alpha * t + spec.epsilon;
            const double d = static_cast<double>(x.size());
            const double exponent = norm_sq(x) / (2.0 * s) - 0.5 * d * std::log(2.0 * M_PI * s);
            if (exponent > kLogDoubleMax) {
                throw OverflowError("heat-kernel Lyapunov value exceeds double range");
            }
            return std::exp(exponent);
        }
        case LyapunovFamily::user_expression: {
            const double value = spec.expr->evaluate(Bindings(t, x));
            if (value <= 0.0) throw Error("user Lyapunov expression must be positive");
            return value;
        }
    }
    throw Error("unreachable Lyapunov family");
}

double generator_apply_fd(const std::function<double(double, std::span<const double>)>& v,
                          const SdeCoefficients& c, double t, std::span<const double> x,
                          double step) {
    const int d = c.d;
    std::vector<double> y(x.begin(), x.end());

    const double vt = (v(t + step, y) - v(t - step, y)) / (2.0 * step);

    std::vector<double> mu(static_cast<std::size_t>(d));
    c.eval_mu(t, x, mu);
    const std::vector<double> A = diffusion_gram(c, t, x);

    double drift_term = 0.0;
    double trace_term = 0.0;
    const double center = v(t, y);
    for (int i = 0; i < d; ++i) {
        const double xi = y[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(i)] = xi + step;
        const double up = v(t, y);
        y[static_cast<std::size_t>(i)] = xi - step;
        const double down = v(t, y);
        y[static_cast<std::size_t>(i)] = xi;
        drift_term += mu[static_cast<std::size_t>(i)] * (up - down) / (2.0 * step);
        trace_term +=
            A[static_cast<std::size_t>(i) * d + i] * (up - 2.0 * center + down) / (step * step);
        for (int j = i + 1; j < d; ++j) {
            const double xj = y[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = xi + step;
            y[static_cast<std::size_t>(j)] = xj + step;
            const double pp = v(t, y);
            y[static_cast<std::size_t>(j)] = xj - step;
            const double pm = v(t, y);
            y[static_cast<std::size_t>(i)] = xi - step;
            const double mm = v(t, y);
            y[static_cast<std::size_t>(j)] = xj + step;
            const double mp = v(t, y);
            y[static_cast<std::size_t>(i)] = xi;
            y[static_cast<std::size_t>(j)] = xj;
            const double hij = (pp - pm - mp + mm) / (4.0 * step * step);
            trace_term += 2.0 * A[static_cast<std::size_t>(i) * d + j] * hij;
        }
    }
    return vt + 0.5 * trace_term + drift_term;
}

double generator_apply(const LyapunovSpec& spec, const SdeCoefficients& c, double t,
                       std::span<const double> x) {
    const int d = c.d;
    if (static_cast<int>(x.size()) != d) throw Error("generator_apply: dimension mismatch");

    switch (spec.family) {
        case LyapunovFamily::polynomial: {
            // grad V = q x u^{q/2-1}, Hess V = q u^{q/2-1} I + q(q-2) u^{q/2-2} x x^T,
            // with u = 1 + |x|^2.
            const double q = spec.q;
            const double u = 1.0 + norm_sq(x);
            const double u_pow1 = std::pow(u, 0.5 * q - 1.0);
            const double u_pow2 = std::pow(u, 0.5 * q - 2.0);
            std::vector<double> mu(static_cast<std::size_t>(d));
            c.eval_mu(t, x, mu);
            const std::vector<double> A = diffusion_gram(c, t, x);
            double trace_A = 0.0;
            double xAx = 0.0;
            double mu_dot_x = 0.0;
            for (int i = 0; i < d; ++i) {
                trace_A += A[static_cast<std::size_t>(i) * d + i];
                double Ax_i = 0.0;
                for (int j = 0; j < d; ++j) {
                    Ax_i += A[static_cast<std::size_t>(i) * d + j] * x[static_cast<std::size_t>(j)];
                }
                xAx += x[static_cast<std::size_t>(i)] * Ax_i;
                mu_dot_x += mu[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
            }
            const double trace_term =
                0.5 * (q * u_pow1 * trace_A + q * (q - 2.0) * u_pow2 * xAx);
            const double drift_term = q * u_pow1 * mu_dot_x;
            return trace_term + drift_term;
        }
        case LyapunovFamily::heat_kernel: {
            // Partials of the time-shifted backward heat kernel:
            // dV/dt    = alpha [ -d/(2s) - |x|^2/(2s^2) ] V,
            // dV/dx_i  = x_i V / s,
            // d2V/dx_i dx_j = [ x_i x_j / s^2 + delta_ij / s ] V,   s = alpha t + eps.
            // The coefficient of V is accumulated first so that the c = alpha
            // cancellation happens before the (possibly huge) V multiplies in.
            const double s = spec.alpha * t + spec.epsilon;
            const double r2 = norm_sq(x);
            const double V = v_value(spec, t, x);
            std::vector<double> mu(static_cast<std::size_t>(d));
            c.eval_mu(t, x, mu);
            const std::vector<double> A = diffusion_gram(c, t, x);
            double trace_A = 0.0;
            double xAx = 0.0;
            double mu_dot_x = 0.0;
            for (int i = 0; i < d; ++i) {
                trace_A += A[static_cast<std::size_t>(i) * d + i];
                double Ax_i = 0.0;
                for (int j = 0; j < d; ++j) {
                    Ax_i += A[static_cast<std::size_t>(i) * d + j] * x[static_cast<std::size_t>(j)];
                }
                xAx += x[static_cast<std::size_t>(i)] * Ax_i;
                mu_dot_x += mu[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
            }
            const double dd = static_cast<double>(d);
            const double coef_time = -spec.alpha * (dd / (2.0 * s) + r2 / (2.0 * s * s));
            const double coef_diffusion = xAx / (2.0 * s * s) + trace_A / (2.0 * s);
            const double coef_drift = mu_dot_x / s;
            return (coef_time + coef_diffusion + coef_drift) * V;
        }
        case LyapunovFamily::user_expression: {
            const double step = 1e-4 * (1.0 + std::sqrt(norm_sq(x)));
            const Expression& e = *spec.expr;
            auto v = [&e](double tt, std::span<const double> xx) {
                return e.evaluate(Bindings(tt, xx));
            };
            return generator_apply_fd(v, c, t, x, step);
        }
    }
    throw Error("unreachable Lyapunov family");
}

GeneratorReport check_supersolution(const LyapunovSpec& spec, const SdeCoefficients& c,
                                    std::span<const SamplePoint> grid, double tol) {
    if (grid.empty()) throw Error("check_supersolution requires a non-empty grid");
    GeneratorReport report;
    report.tol = tol;
    report.max_violation = -std::numeric_limits<double>::infinity();
    for (const SamplePoint& p : grid) {
        const double gen = generator_apply(spec, c, p.t, p.x);
        const double V = v_value(spec, p.t, p.x);
        // Scaled by V: an absolute margin is meaningless where V is
        // exponentially large and the generator is coefficient * V.
        const double violation = (gen - spec.rho * V) / std::max(1.0, V);
        if (violation > report.max_violation) {
            report.max_violation = violation;
            report.argmax = p;
        }
        ++report.points_checked;
    }
    report.pass = report.max_violation <= tol;
    return report;
}

double fit_rho(const LyapunovSpec& spec, const SdeCoefficients& c,
               std::span<const SamplePoint> grid) {
    if (grid.empty()) throw Error("fit_rho requires a non-empty grid");
    double rho = 0.0;
    for (const SamplePoint& p : grid) {
        const double gen = generator_apply(spec, c, p.t, p.x);
        rho = std::max(rho, gen / v_value(spec, p.t, p.x));
    }
    return rho;
}

GrowthRatioReport check_growth_ratio(const Expression& f, const Expression& g,
                                     const LyapunovSpec& spec, double horizon,
                                     std::span<const double> radii, int samples_per_shell,
                                     const RngStream& stream, double tol) {
    if (radii.size() < 2) throw Error("check_growth_ratio requires at least two radii");
    for (std::size_t i = 1; i < radii.size(); ++i) {
        if (!(radii[i] > radii[i - 1])) throw Error("radii must be strictly increasing");
    }
    if (samples_per_shell < 8) throw Error("samples_per_shell must be >= 8");
    const int d = std::max(f.dimension(), g.dimension());

    GrowthRatioReport report;
    report.tol = tol;
    report.radii.assign(radii.begin(), radii.end());

    std::vector<double> direction(static_cast<std::size_t>(d));
    std::vector<double> point(static_cast<std::size_t>(d));
    for (std::size_t shell = 0; shell < radii.size(); ++shell) {
        double sup = 0.0;
        RngStream shell_stream = stream.branch(shell);
        for (int k = 0; k < samples_per_shell; ++k) {
            RngStream point_stream = shell_stream.path(static_cast<std::uint64_t>(k));
            // Normalized Gaussian direction: uniform on the sphere in any d.
            point_stream.fill_normals(0, direction);
            double norm = std::sqrt(norm_sq(direction));
            if (norm == 0.0) norm = 1.0;
            for (int i = 0; i < d; ++i) {
                point[static_cast<std::size_t>(i)] =
                    radii[shell] * direction[static_cast<std::size_t>(i)] / norm;
            }
            const double t = horizon * point_stream.uniform(0);

            double ratio = 0.0;
            try {
                const double vf = v_value(spec, t, point);
                Bindings bf(t, point, 0.0);
                ratio += std::fabs(f.evaluate(bf)) / vf;
            } catch (const OverflowError&) {
                // V -> infinity dominates: the f contribution vanishes.
            } catch (const DomainError&) {
                ratio = std::numeric_limits<double>::infinity();
            }
            try {
                const double vg = v_value(spec, horizon, point);
                ratio += std::fabs(g.evaluate(Bindings(horizon, point))) / vg;
            } catch (const OverflowError&) {
            } catch (const DomainError&) {
                ratio = std::numeric_limits<double>::infinity();
            }
            sup = std::max(sup, ratio);
        }
        report.shell_sup.push_back(sup);
    }

    report.tail_nonincreasing = true;
    for (std::size_t i = 2; i < report.shell_sup.size(); ++i) {
        const double slack = 1e-12 + 0.01 * report.shell_sup[i - 1];
        if (report.shell_sup[i] > report.shell_sup[i - 1] + slack) {
            report.tail_nonincreasing = false;
            break;
        }
    }
    report.last_sup = report.shell_sup.back();
    report.pass = report.tail_nonincreasing && report.last_sup <= tol;
    return report;
}

bool admissible_heat_type(double a, double c, double T) {
    if (!(a > 0.0)) throw Error("admissible_heat_type requires a > 0");
    if (c < 0.0) throw Error("admissible_heat_type requires c >= 0");
    if (!(T > 0.0)) throw Error("admissible_heat_type requires T > 0");
    return c < 1.0 / (2.0 * a * T);
}

double max_admissible_horizon(double a, double c) {
    if (!(a > 0.0) || !(c > 0.0)) return std::numeric_limits<double>::infinity();
    return 1.0 / (2.0 * a * c);
}

LipschitzReport lipschitz_probe(const Expression& f, double L,
                                std::span<const LipschitzProbePoint> sample, double tol) {
    if (sample.empty()) throw Error("lipschitz_probe requires a non-empty sample");
    LipschitzReport report;
    report.declared_L = L;
    report.tol = tol;
    report.max_quotient = 0.0;
    for (const LipschitzProbePoint& p : sample) {
        if (p.v == p.w) throw Error("lipschitz_probe requires v != w in every tuple");
        const double fv = f.evaluate(Bindings(p.t, p.x, p.v));
        const double fw = f.evaluate(Bindings(p.t, p.x, p.w));
        const double quotient = std::fabs(fv - fw) / std::fabs(p.v - p.w);
        if (quotient > report.max_quotient) {
            report.max_quotient = quotient;
            report.worst = p;
        }
    }
    report.pass = report.max_quotient <= L + tol;
    return report;
}

StopRule v_threshold_stop(const LyapunovSpec& spec, double level) {
    StopRule rule;
    rule.v = [spec](double t, std::span<const double> x) { return v_value(spec, t, x); };
    rule.level = level;
    return rule;
}

double constant_sigma_spectral_bound(const SdeCoefficients& c) {
    if (!c.sigma_is_constant()) {
        throw Error("spectral bound requires a constant diffusion matrix");
    }
    const int d = c.d;
    const int m = c.m;
    const std::vector<double> B = c.constant_sigma();
    std::vector<double> A(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k < m; ++k) {
                acc += B[static_cast<std::size_t>(i) * m + k] *
                       B[static_cast<std::size_t>(j) * m + k];
            }
            A[static_cast<std::size_t>(i) * d + j] = acc;
        }
    }
    // Power iteration on the PSD matrix A = B B^T.
    std::vector<double> y(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        y[static_cast<std::size_t>(i)] = 1.0 + 0.01 * static_cast<double>(i + 1);
    }
    double lambda = 0.0;
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<double> z(static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                z[static_cast<std::size_t>(i)] +=
                    A[static_cast<std::size_t>(i) * d + j] * y[static_cast<std::size_t>(j)];
            }
        }
        const double norm = std::sqrt(norm_sq(z));
        if (norm == 0.0) return 0.0;
        for (double& zi : z) zi /= norm;
        double next = 0.0;
        for (int i = 0; i < d; ++i) {
            double Az_i = 0.0;
            for (int j = 0; j < d; ++j) {
                Az_i += A[static_cast<std::size_t>(i) * d + j] * z[static_cast<std::size_t>(j)];
            }
            next += z[static_cast<std::size_t>(i)] * Az_i;
        }
        y = z;
        if (std::fabs(next - lambda) <= 1e-14 * std::max(1.0, std::fabs(next))) {
            return next;
        }
        lambda = next;
    }
    return lambda;
}

}  // namespace sfpe
