#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sfpe/expr.hpp"
#include "sfpe/lyapunov.hpp"
#include "sfpe/parallel.hpp"
#include "sfpe/rng.hpp"
#include "sfpe/sde.hpp"

namespace sfpe {

enum class GrowthKind { polynomial, gaussian };

struct GrowthClass {
    GrowthKind kind = GrowthKind::polynomial;
    double param = 0.0;  // degree p, or the Gaussian exponent a
};

/// The full semilinear terminal-value problem: dynamics (mu, sigma), reaction
/// f(t,x,v), terminal condition g(x), horizon T, declared Lipschitz constant
/// of f in v, Lyapunov family, and growth class of the data.
struct ProblemSpec {
    SdeCoefficients dynamics;
    Expression f;
    Expression g;
    double horizon = 1.0;
    double lipschitz_L = 0.0;
    LyapunovSpec lyapunov;
    GrowthClass growth;

    void validate() const;
};

/// Monte-Carlo value with its sampling error and exact work counter
/// (number of coefficient-expression evaluations performed).
struct Estimate {
    double value = 0.0;
    double std_error = std::numeric_limits<double>::quiet_NaN();  // NaN: undefined (n < 2)
    std::uint64_t samples = 0;
    std::uint64_t work = 0;
};

enum class SamplerScheme { automatic, euler, exact };
enum class TimeQuadrature { single_sample, deterministic_midpoint };

struct PicardConfig {
    int iterations = 4;          // K
    int samples_per_level = 32;  // M
    int sde_steps = 50;
    enum class Init { zero, terminal_g };
    Init init = Init::zero;
    std::uint64_t seed = 0;
    SamplerScheme scheme = SamplerScheme::automatic;
    TimeQuadrature quadrature = TimeQuadrature::single_sample;
    double work_budget = 1e8;
};

struct MlpConfig {
    int levels = 3;        // n
    int base_samples = 8;  // M
    int sde_steps = 50;
    std::uint64_t seed = 0;
    int replications = 16;  // independent outer replications feeding the SE
    SamplerScheme scheme = SamplerScheme::automatic;
    double work_budget = 1e8;
};

using ValueFn = std::function<double(double, std::span<const double>)>;

/// One application of the fixed-point map Phi(v)(t,x) = E[g(X_T) + int f ds]:
/// MC average over M paths of g(X_T) + (T-t) f(R, X_R, v_prev(R, X_R)) with
/// one uniform time sample R per path.
Estimate picard_apply(const ValueFn& v_prev, const ProblemSpec& p, double t,
                      std::span<const double> x, int M, int sde_steps, const RngStream& stream,
                      SamplerScheme scheme = SamplerScheme::automatic,
                      const ExecContext& exec = {});

struct PicardRun {
    Estimate result;                 // the K-th iterate at the query point
    std::vector<double> iterates;    // v_1 .. v_K at the query point
    std::vector<double> iterate_se;  // matching standard errors (0 when deterministic)
};

/// Nested Monte-Carlo Picard iteration: v_{k+1} realized by recursively
/// applying the fixed-point map, fresh randomness per (level, branch).
/// With quadrature = deterministic_midpoint (sigma = 0 only) the time
/// integral is a composite midpoint rule and the run is noise-free.
PicardRun picard_solve(const ProblemSpec& p, const PicardConfig& cfg, double t,
                       std::span<const double> x, const ExecContext& exec = {});

/// Full-history recursive multilevel Picard estimate; the value is the mean
/// of cfg.replications independent replications and the SE their spread.
Estimate mlp_estimate(const ProblemSpec& p, const MlpConfig& cfg, double t,
                      std::span<const double> x, const ExecContext& exec = {});

/// One MLP replication under an explicit stream (exposed for equivalence tests).
double mlp_single(const ProblemSpec& p, const MlpConfig& cfg, double t,
                  std::span<const double> x, const RngStream& stream,
                  std::uint64_t* work = nullptr);

/// Residual v_hat - Phi(v_hat) at probe points.
struct ResidualReport {
    struct Probe {
        SamplePoint point;
        double v_hat = 0.0;
        double residual = 0.0;
        double std_error = 0.0;
    };
    std::vector<Probe> probes;
    double summary = 0.0;  // max |residual| / max(1, |v_hat|)
};

ResidualReport fixed_point_residual(const ValueFn& v_hat, const ProblemSpec& p,
                                    std::span<const SamplePoint> probes, int M, int sde_steps,
                                    const RngStream& stream, const ExecContext& exec = {});

/// Fits the decay rate of successive Picard differences |v_{k+1} - v_k|.
struct ContractionReport {
    std::vector<double> diffs;
    double fitted_ratio = 0.0;
    double threshold = 0.0;
    bool noise_floor = false;  // differences indistinguishable from MC noise
    bool pass = false;
};

ContractionReport contraction_diagnostic(const ProblemSpec& p, const PicardConfig& cfg, double t,
                                         std::span<const double> x, const ExecContext& exec = {});

}  // namespace sfpe
