#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sfpe/expr.hpp"
#include "sfpe/parallel.hpp"
#include "sfpe/rng.hpp"

namespace sfpe {

/// Drift and diffusion of the state process, as expressions in (t, x1..xd).
struct SdeCoefficients {
    int d = 1;  // state dimension
    int m = 1;  // driving-noise dimension
    std::vector<Expression> mu;     // d entries
    std::vector<Expression> sigma;  // d*m entries, row-major
    double lipschitz_L = 0.0;       // declared global constant for checks

    void validate() const;

    /// Evaluates the drift into `out` (size d). `work`, when non-null, is
    /// advanced by one per expression evaluation.
    void eval_mu(double t, std::span<const double> x, std::span<double> out,
                 std::uint64_t* work = nullptr) const;
    /// Evaluates the diffusion matrix row-major into `out` (size d*m).
    void eval_sigma(double t, std::span<const double> x, std::span<double> out,
                    std::uint64_t* work = nullptr) const;

    bool sigma_is_constant() const;
    bool sigma_is_zero() const;
    bool mu_is_zero() const;
    /// The constant diffusion matrix (sigma_is_constant() required).
    std::vector<double> constant_sigma() const;
};

/// V-threshold localization: a path is frozen at the first grid point where
/// v(t, x) >= level.
struct StopRule {
    std::function<double(double, std::span<const double>)> v;
    double level = 0.0;
};

enum class SdeScheme { euler_maruyama, exact_constant_diffusion };

struct PathPlan {
    double t_start = 0.0;
    double t_end = 1.0;
    int steps = 1;
    SdeScheme scheme = SdeScheme::euler_maruyama;
    std::optional<StopRule> stop;

    /// Checks field constraints; the exact scheme additionally requires
    /// constant sigma and zero drift, verified against `c`.
    void validate(const SdeCoefficients& c) const;
    double dt() const { return (t_end - t_start) / steps; }
};

struct PathResult {
    int d = 0;
    std::vector<double> times;
    std::vector<double> states;  // (steps+1) x d, row-major; frozen rows repeat after a stop
    bool stopped_early = false;
    double stop_time = 0.0;

    std::span<const double> state(std::size_t k) const {
        return {states.data() + k * static_cast<std::size_t>(d), static_cast<std::size_t>(d)};
    }
};

/// One Euler-Maruyama update: state + mu(t,state)*dt + sigma(t,state)*dW.
std::vector<double> em_step(std::span<const double> state, double t, double dt,
                            std::span<const double> dW, const SdeCoefficients& c,
                            std::uint64_t* work = nullptr);

namespace detail {
/// In-place update with caller-provided workspaces (drift: d, diffusion: d*m).
/// Raises NonFiniteError citing `step_index` when the state leaves the finite range.
void em_step_inplace(std::vector<double>& state, double t, double dt, std::span<const double> dW,
                     const SdeCoefficients& c, std::vector<double>& drift_ws,
                     std::vector<double>& diffusion_ws, std::uint64_t* work, long step_index);
}  // namespace detail

/// Simulates the full grid path from x0. Brownian increments are keyed by
/// (path stream, step, component); identical streams give bit-identical paths
/// on any thread.
PathResult simulate_path(std::span<const double> x0, const PathPlan& plan,
                         const SdeCoefficients& c, const RngStream& path_stream,
                         std::uint64_t* work = nullptr);

/// Exact draw of x0 + B * W_{s-t} for a constant d x m matrix B; no time grid.
/// Draw indices start at `base_draw` within the stream's normal domain.
std::vector<double> exact_constant_diffusion_sample(std::span<const double> x0, double t, double s,
                                                    std::span<const double> B, int d, int m,
                                                    const RngStream& stream,
                                                    std::uint64_t base_draw = 0);

struct SamplePoint {
    double t = 0.0;
    std::vector<double> x;
};

/// Pointwise audit of the coercivity and linear-growth hypotheses:
/// <x, mu(t,x)> <= L(1+|x|^2) and |sigma(t,x)|_F <= L(1+|x|).
struct CoercivityReport {
    double max_drift_violation = 0.0;
    SamplePoint worst_drift;
    double max_sigma_violation = 0.0;
    SamplePoint worst_sigma;
    double tol = 0.0;
    bool pass = false;
};

CoercivityReport coercivity_check(const SdeCoefficients& c, double L,
                                  std::span<const SamplePoint> points, double tol = 1e-9);

/// Coupled-path perturbation test of the L2 stability bound
/// sup E|X' - X|^2 <= 4T(T+1) * gap^2 * exp(4 L^2 T (T+1)).
/// Both simulations share Brownian increments; the drift of the perturbed
/// system is shifted by the constant vector (gap,...,gap)/sqrt(d).
struct StabilityReport {
    double gap = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    std::uint64_t paths = 0;
    bool pass = false;
};

StabilityReport stability_bound_test(const SdeCoefficients& c, double perturbation_size,
                                     std::uint64_t paths, const PathPlan& plan,
                                     const RngStream& stream, const ExecContext& exec = {});

/// Monte-Carlo check of E[ e^{-rho t} v(t_check, X_{tau ^ t_check}) ] <= v(0, x0)
/// at each requested time, with tau the optional V-threshold stop.
struct SupermartingaleReport {
    struct CheckPoint {
        double t = 0.0;
        double mean = 0.0;
        double std_error = 0.0;
        bool pass = false;
    };
    double v0 = 0.0;
    std::vector<CheckPoint> checks;
    bool pass = false;
};

SupermartingaleReport supermartingale_check(
    const SdeCoefficients& c, const std::function<double(double, std::span<const double>)>& v,
    double rho, std::span<const double> x0, std::span<const double> check_times, int steps,
    std::uint64_t paths, const RngStream& stream, std::optional<double> stop_level = std::nullopt,
    const ExecContext& exec = {});

}  // namespace sfpe
