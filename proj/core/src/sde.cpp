#include "sfpe/sde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sfpe {

void SdeCoefficients::validate() const {
    if (d < 1 || m < 1) throw Error("SDE dimensions must satisfy d >= 1, m >= 1");
    if (static_cast<int>(mu.size()) != d) {
        throw Error("mu must have exactly d = " + std::to_string(d) + " entries");
    }
    if (static_cast<int>(sigma.size()) != d * m) {
        throw Error("sigma must have exactly d*m = " + std::to_string(d * m) + " entries");
    }
    if (lipschitz_L < 0.0) throw Error("lipschitz_L must be >= 0");
    for (const Expression& e : mu) {
        if (e.uses_v()) throw Error("mu may not reference v");
    }
    for (const Expression& e : sigma) {
        if (e.uses_v()) throw Error("sigma may not reference v");
    }
}

void SdeCoefficients::eval_mu(double t, std::span<const double> x, std::span<double> out,
                              std::uint64_t* work) const {
    Bindings b(t, x);
    for (int i = 0; i < d; ++i) {
        out[static_cast<std::size_t>(i)] = mu[static_cast<std::size_t>(i)].evaluate(b);
    }
    if (work) *work += static_cast<std::uint64_t>(d);
}

void SdeCoefficients::eval_sigma(double t, std::span<const double> x, std::span<double> out,
                                 std::uint64_t* work) const {
    Bindings b(t, x);
    const std::size_t n = sigma.size();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = sigma[i].evaluate(b);
    }
    if (work) *work += static_cast<std::uint64_t>(n);
}

bool SdeCoefficients::sigma_is_constant() const {
    return std::all_of(sigma.begin(), sigma.end(),
                       [](const Expression& e) { return e.is_constant(); });
}

bool SdeCoefficients::sigma_is_zero() const {
    return std::all_of(sigma.begin(), sigma.end(), [](const Expression& e) { return e.is_zero(); });
}

bool SdeCoefficients::mu_is_zero() const {
    return std::all_of(mu.begin(), mu.end(), [](const Expression& e) { return e.is_zero(); });
}

std::vector<double> SdeCoefficients::constant_sigma() const {
    std::vector<double> B(sigma.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) B[i] = sigma[i].constant_value();
    return B;
}

void PathPlan::validate(const SdeCoefficients& c) const {
    if (!(t_start < t_end)) throw Error("PathPlan requires t_start < t_end");
    if (steps < 1) throw Error("PathPlan requires steps >= 1");
    if (scheme == SdeScheme::exact_constant_diffusion) {
        if (!c.sigma_is_constant()) {
            throw Error("exact_constant_diffusion requires every sigma entry constant");
        }
        if (!c.mu_is_zero()) {
            throw Error("exact_constant_diffusion requires zero drift");
        }
    }
}

namespace {

void check_finite_state(std::span<const double> state, long step_index) {
    for (double s : state) {
        if (!std::isfinite(s)) {
            throw NonFiniteError(
                "state became non-finite at step " + std::to_string(step_index), step_index);
        }
    }
}

}  // namespace

namespace detail {

void em_step_inplace(std::vector<double>& state, double t, double dt, std::span<const double> dW,
                     const SdeCoefficients& c, std::vector<double>& drift_ws,
                     std::vector<double>& diffusion_ws, std::uint64_t* work, long step_index) {
    c.eval_mu(t, state, drift_ws, work);
    c.eval_sigma(t, state, diffusion_ws, work);
    const int d = c.d;
    const int m = c.m;
    for (int i = 0; i < d; ++i) {
        double noise = 0.0;
        const double* row = diffusion_ws.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) noise += row[j] * dW[static_cast<std::size_t>(j)];
        state[static_cast<std::size_t>(i)] += drift_ws[static_cast<std::size_t>(i)] * dt + noise;
    }
    check_finite_state(state, step_index);
}

}  // namespace detail

std::vector<double> em_step(std::span<const double> state, double t, double dt,
                            std::span<const double> dW, const SdeCoefficients& c,
                            std::uint64_t* work) {
    if (dt <= 0.0) throw Error("em_step requires dt > 0");
    std::vector<double> next(state.begin(), state.end());
    std::vector<double> drift(static_cast<std::size_t>(c.d));
    std::vector<double> diffusion(static_cast<std::size_t>(c.d) * c.m);
    detail::em_step_inplace(next, t, dt, dW, c, drift, diffusion, work, 0);
    return next;
}

PathResult simulate_path(std::span<const double> x0, const PathPlan& plan,
                         const SdeCoefficients& c, const RngStream& path_stream,
                         std::uint64_t* work) {
    plan.validate(c);
    if (static_cast<int>(x0.size()) != c.d) throw Error("x0 dimension mismatch");

    const int n = plan.steps;
    const int d = c.d;
    const int m = c.m;
    const double dt = plan.dt();
    const double sqrt_dt = std::sqrt(dt);

    PathResult out;
    out.d = d;
    out.times.resize(static_cast<std::size_t>(n) + 1);
    out.states.resize((static_cast<std::size_t>(n) + 1) * d);
    std::copy(x0.begin(), x0.end(), out.states.begin());

    std::vector<double> state(x0.begin(), x0.end());
    std::vector<double> drift(static_cast<std::size_t>(d));
    std::vector<double> diffusion(static_cast<std::size_t>(d) * m);
    std::vector<double> dW(static_cast<std::size_t>(m));

    bool frozen = false;
    for (int k = 0; k <= n; ++k) {
        const double tk = plan.t_start + k * dt;
        out.times[static_cast<std::size_t>(k)] = tk;
        if (!frozen && plan.stop && plan.stop->v(tk, state) >= plan.stop->level) {
            frozen = true;
            out.stopped_early = true;
            out.stop_time = tk;
        }
        if (k > 0) {
            std::copy(state.begin(), state.end(),
                      out.states.begin() + static_cast<std::size_t>(k) * d);
        }
        if (k == n) break;
        if (!frozen) {
            if (plan.scheme == SdeScheme::exact_constant_diffusion) {
                // One exact Gaussian increment per step; B evaluated once.
                path_stream.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
                c.eval_sigma(tk, state, diffusion, work);
                for (int i = 0; i < d; ++i) {
                    double noise = 0.0;
                    const double* row = diffusion.data() + static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j) noise += row[j] * dW[static_cast<std::size_t>(j)];
                    state[static_cast<std::size_t>(i)] += noise * sqrt_dt;
                }
                check_finite_state(state, k);
            } else {
                path_stream.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
                for (double& z : dW) z *= sqrt_dt;
                detail::em_step_inplace(state, tk, dt, dW, c, drift, diffusion, work, k);
            }
        }
    }
    if (!out.stopped_early) out.stop_time = plan.t_end;
    return out;
}

std::vector<double> exact_constant_diffusion_sample(std::span<const double> x0, double t, double s,
                                                    std::span<const double> B, int d, int m,
                                                    const RngStream& stream,
                                                    std::uint64_t base_draw) {
    if (s < t) throw Error("exact sample requires s >= t");
    std::vector<double> out(x0.begin(), x0.end());
    if (s == t) return out;
    const double scale = std::sqrt(s - t);
    std::vector<double> z(static_cast<std::size_t>(m));
    stream.fill_normals(base_draw, z);
    for (int i = 0; i < d; ++i) {
        double acc = 0.0;
        const double* row = B.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) acc += row[j] * z[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] += acc * scale;
    }
    return out;
}

namespace {

double norm_sq(std::span<const double> x) {
    double acc = 0.0;
    for (double xi : x) acc += xi * xi;
    return acc;
}

}  // namespace

CoercivityReport coercivity_check(const SdeCoefficients& c, double L,
                                  std::span<const SamplePoint> points, double tol) {
    if (points.empty()) throw Error("coercivity_check requires at least one sample point");
    CoercivityReport report;
    report.tol = tol;
    report.max_drift_violation = -std::numeric_limits<double>::infinity();
    report.max_sigma_violation = -std::numeric_limits<double>::infinity();

    std::vector<double> drift(static_cast<std::size_t>(c.d));
    std::vector<double> diffusion(static_cast<std::size_t>(c.d) * c.m);
    for (const SamplePoint& p : points) {
        c.eval_mu(p.t, p.x, drift);
        c.eval_sigma(p.t, p.x, diffusion);
        const double r2 = norm_sq(p.x);
        double dot = 0.0;
        for (int i = 0; i < c.d; ++i) {
            dot += p.x[static_cast<std::size_t>(i)] * drift[static_cast<std::size_t>(i)];
        }
        const double drift_violation = dot - L * (1.0 + r2);
        // Frobenius norm as a conservative stand-in for the operator norm.
        const double frob = std::sqrt(norm_sq(diffusion));
        const double sigma_violation = frob - L * (1.0 + std::sqrt(r2));
        if (drift_violation > report.max_drift_violation) {
            report.max_drift_violation = drift_violation;
            report.worst_drift = p;
        }
        if (sigma_violation > report.max_sigma_violation) {
            report.max_sigma_violation = sigma_violation;
            report.worst_sigma = p;
        }
    }
    report.pass = report.max_drift_violation <= tol && report.max_sigma_violation <= tol;
    return report;
}

StabilityReport stability_bound_test(const SdeCoefficients& c, double perturbation_size,
                                     std::uint64_t paths, const PathPlan& plan,
                                     const RngStream& stream, const ExecContext& exec) {
    if (perturbation_size < 0.0) throw Error("perturbation size must be >= 0");
    if (plan.t_start != 0.0) throw Error("stability test plans must start at t = 0");
    plan.validate(c);
    if (paths == 0) throw Error("stability test requires paths >= 1");

    const int d = c.d;
    const int m = c.m;
    const int n = plan.steps;
    const double dt = plan.dt();
    const double sqrt_dt = std::sqrt(dt);
    const double shift = perturbation_size / std::sqrt(static_cast<double>(d));
    std::vector<double> x0(static_cast<std::size_t>(d), 0.0);

    const std::size_t chunk = 1024;
    const std::size_t n_chunks = (paths + chunk - 1) / chunk;
    std::vector<RunningStat> partial(n_chunks);

    for_each_chunk(paths, chunk, exec.threads, [&](std::size_t ci, std::size_t begin,
                                                   std::size_t end) {
        RunningStat stat;
        std::vector<double> base(x0), perturbed(x0);
        std::vector<double> drift(static_cast<std::size_t>(d));
        std::vector<double> diffusion(static_cast<std::size_t>(d) * m);
        std::vector<double> dW(static_cast<std::size_t>(m));
        for (std::size_t i = begin; i < end; ++i) {
            RngStream ps = stream.path(i);
            std::copy(x0.begin(), x0.end(), base.begin());
            std::copy(x0.begin(), x0.end(), perturbed.begin());
            for (int k = 0; k < n; ++k) {
                const double tk = plan.t_start + k * dt;
                ps.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
                for (double& z : dW) z *= sqrt_dt;
                detail::em_step_inplace(base, tk, dt, dW, c, drift, diffusion, nullptr, k);
                // Same increments, drift shifted by the constant vector.
                c.eval_mu(tk, perturbed, drift);
                c.eval_sigma(tk, perturbed, diffusion);
                for (int r = 0; r < d; ++r) {
                    double noise = 0.0;
                    const double* row = diffusion.data() + static_cast<std::size_t>(r) * m;
                    for (int j = 0; j < m; ++j) noise += row[j] * dW[static_cast<std::size_t>(j)];
                    perturbed[static_cast<std::size_t>(r)] +=
                        (drift[static_cast<std::size_t>(r)] + shift) * dt + noise;
                }
                check_finite_state(perturbed, k);
            }
            double diff2 = 0.0;
            for (int r = 0; r < d; ++r) {
                const double delta =
                    perturbed[static_cast<std::size_t>(r)] - base[static_cast<std::size_t>(r)];
                diff2 += delta * delta;
            }
            stat.add(diff2);
        }
        partial[ci] = stat;
    });

    RunningStat stat;
    for (const RunningStat& s : partial) stat.merge(s);

    const double T = plan.t_end;
    const double L = c.lipschitz_L;
    StabilityReport report;
    report.gap = perturbation_size;
    report.estimate = stat.mean;
    report.std_error = stat.n >= 2 ? stat.std_error() : 0.0;
    report.bound = 4.0 * T * (T + 1.0) * perturbation_size * perturbation_size *
                   std::exp(4.0 * L * L * T * (T + 1.0));
    report.paths = paths;
    report.pass = report.estimate <= report.bound + 3.0 * report.std_error;
    return report;
}

SupermartingaleReport supermartingale_check(
    const SdeCoefficients& c, const std::function<double(double, std::span<const double>)>& v,
    double rho, std::span<const double> x0, std::span<const double> check_times, int steps,
    std::uint64_t paths, const RngStream& stream, std::optional<double> stop_level,
    const ExecContext& exec) {
    if (check_times.empty()) throw Error("supermartingale_check requires check times");
    if (paths == 0) throw Error("supermartingale_check requires paths >= 1");
    const double horizon = *std::max_element(check_times.begin(), check_times.end());
    if (horizon <= 0.0) throw Error("check times must include a positive time");

    const int d = c.d;
    const int m = c.m;
    const double dt = horizon / steps;
    const double sqrt_dt = std::sqrt(dt);

    // Snap each check time to its nearest grid index.
    std::vector<int> check_idx(check_times.size());
    for (std::size_t i = 0; i < check_times.size(); ++i) {
        check_idx[i] = static_cast<int>(std::lround(check_times[i] / dt));
        check_idx[i] = std::clamp(check_idx[i], 0, steps);
    }

    const std::size_t chunk = 1024;
    const std::size_t n_chunks = (paths + chunk - 1) / chunk;
    std::vector<std::vector<RunningStat>> partial(n_chunks,
                                                  std::vector<RunningStat>(check_times.size()));

    for_each_chunk(paths, chunk, exec.threads, [&](std::size_t ci, std::size_t begin,
                                                   std::size_t end) {
        std::vector<RunningStat>& stats = partial[ci];
        std::vector<double> state(static_cast<std::size_t>(d));
        std::vector<double> drift(static_cast<std::size_t>(d));
        std::vector<double> diffusion(static_cast<std::size_t>(d) * m);
        std::vector<double> dW(static_cast<std::size_t>(m));
        for (std::size_t i = begin; i < end; ++i) {
            RngStream ps = stream.path(i);
            std::copy(x0.begin(), x0.end(), state.begin());
            bool frozen = false;
            double frozen_t = 0.0;
            for (int k = 0; k <= steps; ++k) {
                const double tk = k * dt;
                if (!frozen && stop_level && v(tk, state) >= *stop_level) {
                    frozen = true;
                    frozen_t = tk;
                }
                for (std::size_t q = 0; q < check_idx.size(); ++q) {
                    if (check_idx[q] == k) {
                        const double teval = frozen ? frozen_t : tk;
                        stats[q].add(std::exp(-rho * teval) * v(teval, state));
                    }
                }
                if (k == steps) break;
                if (!frozen) {
                    ps.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
                    for (double& z : dW) z *= sqrt_dt;
                    detail::em_step_inplace(state, tk, dt, dW, c, drift, diffusion, nullptr, k);
                }
            }
        }
    });

    SupermartingaleReport report;
    report.v0 = v(0.0, x0);
    report.pass = true;
    for (std::size_t q = 0; q < check_times.size(); ++q) {
        RunningStat stat;
        for (const auto& chunk_stats : partial) stat.merge(chunk_stats[q]);
        SupermartingaleReport::CheckPoint cp;
        cp.t = check_idx[q] * dt;
        cp.mean = stat.mean;
        cp.std_error = stat.n >= 2 ? stat.std_error() : 0.0;
        cp.pass = cp.mean <= report.v0 + 3.0 * cp.std_error;
        report.pass = report.pass && cp.pass;
        report.checks.push_back(cp);
    }
    return report;
}

}  // namespace sfpe
