#include "sfpe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sfpe {

void ProblemSpec::validate() const {
    dynamics.validate();
    if (!(horizon > 0.0)) throw Error("horizon must be > 0");
    if (lipschitz_L < 0.0) throw Error("lipschitz_L must be >= 0");
    if (g.uses_v()) throw Error("g may not reference v");
    lyapunov.validate();
}

namespace {

std::uint64_t ipow_saturating(std::uint64_t base, int exp) {
    std::uint64_t acc = 1;
    for (int i = 0; i < exp; ++i) {
        if (base != 0 && acc > std::numeric_limits<std::uint64_t>::max() / base) {
            return std::numeric_limits<std::uint64_t>::max();
        }
        acc *= base;
    }
    return acc;
}

// Stack-first scratch: the nested estimators live in the malloc-free regime
// for d, m <= 16 and fall back to the heap above that.
template <std::size_t N>
class ScratchVec {
public:
    std::span<double> acquire(std::size_t n) {
        if (n <= N) return {stack_, n};
        heap_.resize(n);
        return heap_;
    }

private:
    double stack_[N];
    std::vector<double> heap_;
};

// Resolved path sampler for one problem: either Euler-Maruyama on a uniform
// grid or, for constant sigma with zero drift, exact Gaussian increments.
//
// Draw layout inside a path stream: normal indices [0, steps*m) feed the grid
// (or [0, 2m) the two exact increments), uniform index 0 is the time sample R.
struct PathSampler {
    const ProblemSpec* p = nullptr;
    bool exact = false;
    int steps = 1;
    std::vector<double> B;  // constant diffusion, when exact
    std::uint64_t setup_work = 0;

    static PathSampler make(const ProblemSpec& p, SamplerScheme scheme, int sde_steps) {
        PathSampler s;
        s.p = &p;
        s.steps = std::max(1, sde_steps);
        const bool exact_ok = p.dynamics.sigma_is_constant() && p.dynamics.mu_is_zero();
        switch (scheme) {
            case SamplerScheme::automatic: s.exact = exact_ok; break;
            case SamplerScheme::euler: s.exact = false; break;
            case SamplerScheme::exact:
                if (!exact_ok) {
                    throw Error("exact sampler requires constant sigma and zero drift");
                }
                s.exact = true;
                break;
        }
        if (s.exact) {
            s.B = p.dynamics.constant_sigma();
            s.setup_work = s.B.size();
        }
        return s;
    }

    int steps_per_path() const { return exact ? 1 : steps; }

    // X at the last grid point <= r (left-continuous lookup) and at T.
    void sample_pair(double t, std::span<const double> x, double r, const RngStream& stream,
                     std::span<double> xr, std::span<double> xT, std::uint64_t* work) const {
        const int d = p->dynamics.d;
        const int m = p->dynamics.m;
        const double T = p->horizon;
        if (exact) {
            ScratchVec<32> z_buf;
            const auto z = z_buf.acquire(2 * static_cast<std::size_t>(m));
            stream.fill_normals(0, z);
            std::copy(x.begin(), x.end(), xr.begin());
            apply_increment(xr, r - t, z.first(static_cast<std::size_t>(m)));
            std::copy(xr.begin(), xr.end(), xT.begin());
            apply_increment(xT, T - r, z.subspan(static_cast<std::size_t>(m)));
            return;
        }
        const double dt = (T - t) / steps;
        const int idx_r = std::min(steps, static_cast<int>(std::floor((r - t) / dt)));
        std::copy(x.begin(), x.end(), xT.begin());
        ScratchVec<16> drift_buf;
        ScratchVec<256> diffusion_buf;
        ScratchVec<16> dw_buf;
        const auto drift = drift_buf.acquire(static_cast<std::size_t>(d));
        const auto diffusion = diffusion_buf.acquire(static_cast<std::size_t>(d) * m);
        const auto dW = dw_buf.acquire(static_cast<std::size_t>(m));
        const double sqrt_dt = std::sqrt(dt);
        if (idx_r == 0) std::copy(xT.begin(), xT.end(), xr.begin());
        for (int k = 0; k < steps; ++k) {
            stream.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
            for (double& z : dW) z *= sqrt_dt;
            euler_update(xT, t + k * dt, dt, dW, drift, diffusion, work, k);
            if (k + 1 == idx_r) std::copy(xT.begin(), xT.end(), xr.begin());
        }
        if (idx_r == steps) std::copy(xT.begin(), xT.end(), xr.begin());
    }

    // X_T only, for the i-th leaf under a shared node stream: draws are
    // flat-indexed on channel 1, so no per-leaf key derivation is needed.
    void sample_terminal_batched(double t, std::span<const double> x,
                                 const RngStream& node_stream, std::uint64_t leaf,
                                 std::span<double> xT, std::uint64_t* work) const {
        const int m = p->dynamics.m;
        if (exact) {
            ScratchVec<16> z_buf;
            const auto z = z_buf.acquire(static_cast<std::size_t>(m));
            node_stream.fill_normals(leaf * static_cast<std::uint64_t>(m), z, 1);
            std::copy(x.begin(), x.end(), xT.begin());
            apply_increment(xT, p->horizon - t, z);
            return;
        }
        const int d = p->dynamics.d;
        const double dt = (p->horizon - t) / steps;
        std::copy(x.begin(), x.end(), xT.begin());
        ScratchVec<16> drift_buf;
        ScratchVec<256> diffusion_buf;
        ScratchVec<16> dw_buf;
        const auto drift = drift_buf.acquire(static_cast<std::size_t>(d));
        const auto diffusion = diffusion_buf.acquire(static_cast<std::size_t>(d) * m);
        const auto dW = dw_buf.acquire(static_cast<std::size_t>(m));
        const double sqrt_dt = std::sqrt(dt);
        const std::uint64_t base =
            leaf * static_cast<std::uint64_t>(steps) * static_cast<std::uint64_t>(m);
        for (int k = 0; k < steps; ++k) {
            node_stream.fill_normals(base + static_cast<std::uint64_t>(k) * m, dW, 1);
            for (double& z : dW) z *= sqrt_dt;
            euler_update(xT, t + k * dt, dt, dW, drift, diffusion, work, k);
        }
    }

    // X_T only: used when the reaction term needs no interior point at all.
    void sample_terminal(double t, std::span<const double> x, const RngStream& stream,
                         std::span<double> xT, std::uint64_t* work) const {
        const int m = p->dynamics.m;
        if (exact) {
            ScratchVec<16> z_buf;
            const auto z = z_buf.acquire(static_cast<std::size_t>(m));
            stream.fill_normals(0, z);
            std::copy(x.begin(), x.end(), xT.begin());
            apply_increment(xT, p->horizon - t, z);
            return;
        }
        const int d = p->dynamics.d;
        const double dt = (p->horizon - t) / steps;
        std::copy(x.begin(), x.end(), xT.begin());
        ScratchVec<16> drift_buf;
        ScratchVec<256> diffusion_buf;
        ScratchVec<16> dw_buf;
        const auto drift = drift_buf.acquire(static_cast<std::size_t>(d));
        const auto diffusion = diffusion_buf.acquire(static_cast<std::size_t>(d) * m);
        const auto dW = dw_buf.acquire(static_cast<std::size_t>(m));
        const double sqrt_dt = std::sqrt(dt);
        for (int k = 0; k < steps; ++k) {
            stream.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
            for (double& z : dW) z *= sqrt_dt;
            euler_update(xT, t + k * dt, dt, dW, drift, diffusion, work, k);
        }
    }

    // X at the last grid point <= r only (the telescoping MLP terms need no X_T).
    void sample_point(double t, std::span<const double> x, double r, const RngStream& stream,
                      std::span<double> xr, std::uint64_t* work) const {
        const int d = p->dynamics.d;
        const int m = p->dynamics.m;
        if (exact) {
            ScratchVec<16> z_buf;
            const auto z = z_buf.acquire(static_cast<std::size_t>(m));
            stream.fill_normals(0, z);
            std::copy(x.begin(), x.end(), xr.begin());
            apply_increment(xr, r - t, z);
            return;
        }
        const double dt = (p->horizon - t) / steps;  // same grid as sample_pair
        const int idx_r = std::min(steps, static_cast<int>(std::floor((r - t) / dt)));
        std::copy(x.begin(), x.end(), xr.begin());
        ScratchVec<16> drift_buf;
        ScratchVec<256> diffusion_buf;
        ScratchVec<16> dw_buf;
        const auto drift = drift_buf.acquire(static_cast<std::size_t>(d));
        const auto diffusion = diffusion_buf.acquire(static_cast<std::size_t>(d) * m);
        const auto dW = dw_buf.acquire(static_cast<std::size_t>(m));
        const double sqrt_dt = std::sqrt(dt);
        for (int k = 0; k < idx_r; ++k) {
            stream.fill_normals(static_cast<std::uint64_t>(k) * m, dW);
            for (double& z : dW) z *= sqrt_dt;
            euler_update(xr, t + k * dt, dt, dW, drift, diffusion, work, k);
        }
    }

private:
    void euler_update(std::span<double> state, double t, double dt, std::span<const double> dW,
                      std::span<double> drift, std::span<double> diffusion, std::uint64_t* work,
                      int step_index) const {
        const SdeCoefficients& c = p->dynamics;
        c.eval_mu(t, state, drift, work);
        c.eval_sigma(t, state, diffusion, work);
        const int d = c.d;
        const int m = c.m;
        for (int i = 0; i < d; ++i) {
            double noise = 0.0;
            const double* row = diffusion.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) noise += row[j] * dW[static_cast<std::size_t>(j)];
            state[static_cast<std::size_t>(i)] += drift[static_cast<std::size_t>(i)] * dt + noise;
            if (!std::isfinite(state[static_cast<std::size_t>(i)])) {
                throw NonFiniteError("state became non-finite at step " +
                                         std::to_string(step_index),
                                     step_index);
            }
        }
    }

    void apply_increment(std::span<double> state, double elapsed,
                         std::span<const double> z) const {
        if (elapsed <= 0.0) return;
        const int d = p->dynamics.d;
        const int m = p->dynamics.m;
        const double scale = std::sqrt(elapsed);
        for (int i = 0; i < d; ++i) {
            double acc = 0.0;
            const double* row = B.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) acc += row[j] * z[static_cast<std::size_t>(j)];
            state[static_cast<std::size_t>(i)] += acc * scale;
        }
    }
};

// Flat sampling loops share this chunk size so that estimators compared for
// bit-equality (picard_apply vs the MLP base level) accumulate identically.
constexpr std::size_t kFlatChunk = 1024;

// Chunked mean/SE over per-sample values; the fixed partition makes the merge
// independent of the worker count.
template <typename SampleFn>
RunningStat chunked_stats(std::uint64_t n, std::size_t chunk, int threads, std::uint64_t* work,
                          const SampleFn& sample) {
    const std::size_t n_chunks = (n + chunk - 1) / chunk;
    std::vector<RunningStat> partial(n_chunks);
    std::vector<std::uint64_t> partial_work(n_chunks, 0);
    for_each_chunk(n, chunk, threads, [&](std::size_t ci, std::size_t begin, std::size_t end) {
        RunningStat stat;
        std::uint64_t w = 0;
        for (std::size_t i = begin; i < end; ++i) stat.add(sample(i, &w));
        partial[ci] = stat;
        partial_work[ci] = w;
    });
    RunningStat total;
    for (std::size_t c = 0; c < n_chunks; ++c) {
        total.merge(partial[c]);
        if (work) *work += partial_work[c];
    }
    return total;
}

struct ApplyContext {
    const ProblemSpec* p;
    const PathSampler* sampler;
    bool skip_f;     // f is literally zero
    bool f_needs_v;  // false: f is a plain inhomogeneity, no recursion needed
    bool leaf_fast = false;  // zero-init leaves with f reading only v
};

ApplyContext make_apply_context(const ProblemSpec& p, const PathSampler& sampler) {
    return {&p, &sampler, p.f.is_zero(), p.f.uses_v(), false};
}

// One outer sample of Phi(v_prev)(t, x): g(X_T) + (T-t) f(R, X_R, v_prev(R, X_R)).
template <typename ValueAt>
double phi_sample(const ApplyContext& ctx, double t, std::span<const double> x,
                  const RngStream& path_stream, const ValueAt& v_prev, std::uint64_t* work) {
    const ProblemSpec& p = *ctx.p;
    const int d = p.dynamics.d;
    const double T = p.horizon;
    const double tau = T - t;
    ScratchVec<16> xr_buf, xT_buf;
    const auto xT = xT_buf.acquire(static_cast<std::size_t>(d));
    if (ctx.skip_f) {
        ctx.sampler->sample_terminal(t, x, path_stream, xT, work);
        const double y = p.g.evaluate(Bindings(T, xT));
        if (work) ++*work;
        return y;
    }
    const auto xr = xr_buf.acquire(static_cast<std::size_t>(d));
    const double r = t + tau * path_stream.uniform(0);
    ctx.sampler->sample_pair(t, x, r, path_stream, xr, xT, work);
    double y = p.g.evaluate(Bindings(T, xT));
    if (work) ++*work;
    const double inner = ctx.f_needs_v ? v_prev(r, std::span<const double>(xr)) : 0.0;
    y += tau * p.f.evaluate(Bindings(r, xr, inner));
    if (work) ++*work;
    return y;
}

// Mean over the M leaves of a zero-initialized recursion node when f reads
// only v: the reaction term f(., ., 0) is one evaluation for the whole node,
// no interior path point is needed, and the Gaussian draws come flat-indexed
// from the node's stream (channel 1), amortizing cipher blocks across leaves.
double leaf_strip_mean(const ApplyContext& ctx, double t, std::span<const double> x, int M,
                       const RngStream& node_stream, std::uint64_t* work) {
    const ProblemSpec& p = *ctx.p;
    const double T = p.horizon;
    const int d = p.dynamics.d;
    const int m = p.dynamics.m;
    const double reaction = (T - t) * p.f.evaluate(Bindings(t, x, 0.0));
    if (work) ++*work;

    double acc = 0.0;
    if (ctx.sampler->exact) {
        const double scale = std::sqrt(T - t);
        const std::size_t total = static_cast<std::size_t>(M) * m;
        ScratchVec<1024> strip_buf;
        ScratchVec<16> xT_buf;
        const auto strip = strip_buf.acquire(total);
        const auto xT = xT_buf.acquire(static_cast<std::size_t>(d));
        node_stream.fill_normals(0, strip, 1);
        const std::vector<double>& B = ctx.sampler->B;
        for (int i = 0; i < M; ++i) {
            const double* z = strip.data() + static_cast<std::size_t>(i) * m;
            for (int r = 0; r < d; ++r) {
                double noise = 0.0;
                const double* row = B.data() + static_cast<std::size_t>(r) * m;
                for (int j = 0; j < m; ++j) noise += row[j] * z[j];
                xT[static_cast<std::size_t>(r)] =
                    x[static_cast<std::size_t>(r)] + noise * scale;
            }
            acc += p.g.evaluate(Bindings(T, xT));
            if (work) ++*work;
        }
    } else {
        ScratchVec<16> xT_buf;
        const auto xT = xT_buf.acquire(static_cast<std::size_t>(d));
        for (int i = 0; i < M; ++i) {
            ctx.sampler->sample_terminal_batched(t, x, node_stream,
                                                 static_cast<std::uint64_t>(i), xT, work);
            acc += p.g.evaluate(Bindings(T, xT));
            if (work) ++*work;
        }
    }
    return acc / M + reaction;
}

void check_query(const ProblemSpec& p, double t, std::span<const double> x) {
    if (!(t >= 0.0 && t < p.horizon)) {
        throw Error("query time must lie in [0, T); got t = " + std::to_string(t));
    }
    if (static_cast<int>(x.size()) != p.dynamics.d) {
        throw Error("query point dimension mismatch");
    }
}

}  // namespace

Estimate picard_apply(const ValueFn& v_prev, const ProblemSpec& p, double t,
                      std::span<const double> x, int M, int sde_steps, const RngStream& stream,
                      SamplerScheme scheme, const ExecContext& exec) {
    check_query(p, t, x);
    if (M < 1) throw Error("picard_apply requires M >= 1");
    const PathSampler sampler = PathSampler::make(p, scheme, sde_steps);
    const ApplyContext ctx = make_apply_context(p, sampler);

    Estimate est;
    est.work = sampler.setup_work;
    auto wrap = [&](double s, std::span<const double> y) { return v_prev(s, y); };
    RunningStat stat = chunked_stats(
        static_cast<std::uint64_t>(M), kFlatChunk, exec.threads, &est.work,
        [&](std::size_t i, std::uint64_t* w) {
            return phi_sample(ctx, t, x, stream.path(i), wrap, w);
        });
    est.value = stat.mean;
    est.std_error = stat.std_error();
    est.samples = static_cast<std::uint64_t>(M);
    return est;
}

namespace {

// Recursive nested-Picard evaluation of iterate `depth` at (s, y); every
// branch gets a fresh stream so no randomness is shared across levels.
double picard_recursive(const ApplyContext& ctx, PicardConfig::Init init, int depth, double s,
                        std::span<const double> y, int M, const RngStream& stream,
                        std::uint64_t* work) {
    const ProblemSpec& p = *ctx.p;
    if (depth == 0) {
        if (init == PicardConfig::Init::zero) return 0.0;
        const double value = p.g.evaluate(Bindings(p.horizon, y));
        if (work) ++*work;
        return value;
    }
    if (s >= p.horizon) {  // time samples can land arbitrarily close to T
        const double value = p.g.evaluate(Bindings(p.horizon, y));
        if (work) ++*work;
        return value;
    }
    if (depth == 1 && ctx.leaf_fast) {
        return leaf_strip_mean(ctx, s, y, M, stream, work);
    }
    double acc = 0.0;
    for (int i = 0; i < M; ++i) {
        const RngStream branch = stream.path(static_cast<std::uint64_t>(i));
        acc += phi_sample(
            ctx, s, y, branch,
            [&](double r, std::span<const double> xr) {
                if (depth == 1) {  // leaf: the initializer needs no randomness
                    if (init == PicardConfig::Init::zero) return 0.0;
                    const double value = p.g.evaluate(Bindings(p.horizon, xr));
                    if (work) ++*work;
                    return value;
                }
                return picard_recursive(ctx, init, depth - 1, r, xr, M,
                                        branch.level(static_cast<std::uint64_t>(depth) - 1), work);
            },
            work);
    }
    return acc / M;
}

PicardRun picard_solve_deterministic(const ProblemSpec& p, const PicardConfig& cfg, double t,
                                     std::span<const double> x) {
    if (!p.dynamics.sigma_is_zero()) {
        throw Error("deterministic_midpoint quadrature requires sigma = 0");
    }
    const int n = cfg.sde_steps;
    const int K = cfg.iterations;
    const double T = p.horizon;
    const double h = (T - t) / n;
    const int d = p.dynamics.d;
    std::uint64_t work = 0;

    const double budget_needed =
        static_cast<double>(K) * (2.0 * n + 2.0) + 2.0 * n * (d + 1.0);
    if (budget_needed > cfg.work_budget) {
        throw BudgetExceeded("deterministic Picard needs about " +
                             std::to_string(budget_needed) + " evaluations, budget is " +
                             std::to_string(cfg.work_budget));
    }

    // Deterministic flow on the half grid: index k holds X at t + k h/2,
    // so even indices are panel endpoints and odd ones midpoints.
    std::vector<std::vector<double>> flow(static_cast<std::size_t>(2 * n) + 1);
    flow[0].assign(x.begin(), x.end());
    std::vector<double> drift(static_cast<std::size_t>(d));
    for (int k = 0; k < 2 * n; ++k) {
        const double tk = t + 0.5 * h * k;
        std::vector<double> next = flow[static_cast<std::size_t>(k)];
        p.dynamics.eval_mu(tk, next, drift, &work);
        for (int i = 0; i < d; ++i) {
            next[static_cast<std::size_t>(i)] += 0.5 * h * drift[static_cast<std::size_t>(i)];
        }
        flow[static_cast<std::size_t>(k) + 1] = std::move(next);
    }
    auto flow_end = [&](int i) -> std::span<const double> {
        return flow[2 * static_cast<std::size_t>(i)];
    };
    auto flow_mid = [&](int j) -> std::span<const double> {
        return flow[2 * static_cast<std::size_t>(j) + 1];
    };

    const double gT = p.g.evaluate(Bindings(T, flow_end(n)));
    ++work;

    // Iterate values along the flow, carried at panel endpoints and midpoints.
    std::vector<double> we(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> wm(static_cast<std::size_t>(n), 0.0);
    if (cfg.init == PicardConfig::Init::terminal_g) {
        for (int i = 0; i <= n; ++i) {
            we[static_cast<std::size_t>(i)] = p.g.evaluate(Bindings(T, flow_end(i)));
            ++work;
        }
        for (int j = 0; j < n; ++j) {
            wm[static_cast<std::size_t>(j)] = p.g.evaluate(Bindings(T, flow_mid(j)));
            ++work;
        }
    }

    PicardRun run;
    std::vector<double> fm(static_cast<std::size_t>(n));
    std::vector<double> fe(static_cast<std::size_t>(n) + 1);
    std::vector<double> tail(static_cast<std::size_t>(n) + 1);
    for (int k = 1; k <= K; ++k) {
        for (int j = 0; j < n; ++j) {
            const double sj = t + (j + 0.5) * h;
            fm[static_cast<std::size_t>(j)] =
                p.f.evaluate(Bindings(sj, flow_mid(j), wm[static_cast<std::size_t>(j)]));
            ++work;
        }
        for (int i = 0; i <= n; ++i) {
            const double ti = t + i * h;
            fe[static_cast<std::size_t>(i)] =
                p.f.evaluate(Bindings(ti, flow_end(i), we[static_cast<std::size_t>(i)]));
            ++work;
        }
        tail[static_cast<std::size_t>(n)] = 0.0;
        for (int j = n - 1; j >= 0; --j) {
            tail[static_cast<std::size_t>(j)] =
                tail[static_cast<std::size_t>(j) + 1] + h * fm[static_cast<std::size_t>(j)];
        }
        for (int i = 0; i <= n; ++i) {
            we[static_cast<std::size_t>(i)] = gT + tail[static_cast<std::size_t>(i)];
        }
        for (int j = 0; j < n; ++j) {
            // Half panel [s_j, t_{j+1}] by trapezoid, then whole panels.
            wm[static_cast<std::size_t>(j)] =
                gT + tail[static_cast<std::size_t>(j) + 1] +
                0.25 * h * (fm[static_cast<std::size_t>(j)] + fe[static_cast<std::size_t>(j) + 1]);
        }
        run.iterates.push_back(we[0]);
        run.iterate_se.push_back(0.0);
    }

    run.result.value = we[0];
    run.result.std_error = 0.0;
    run.result.samples = 1;
    run.result.work = work;
    return run;
}

}  // namespace

PicardRun picard_solve(const ProblemSpec& p, const PicardConfig& cfg, double t,
                       std::span<const double> x, const ExecContext& exec) {
    check_query(p, t, x);
    if (cfg.iterations < 1) throw Error("PicardConfig.iterations must be >= 1");
    if (cfg.samples_per_level < 1) throw Error("PicardConfig.samples_per_level must be >= 1");
    if (cfg.sde_steps < 1) throw Error("PicardConfig.sde_steps must be >= 1");

    if (cfg.quadrature == TimeQuadrature::deterministic_midpoint) {
        return picard_solve_deterministic(p, cfg, t, x);
    }

    const PathSampler sampler = PathSampler::make(p, cfg.scheme, cfg.sde_steps);
    const double est_work =
        p.f.uses_v()
            ? static_cast<double>(ipow_saturating(
                  static_cast<std::uint64_t>(cfg.samples_per_level), cfg.iterations)) *
                  sampler.steps_per_path()
            : static_cast<double>(cfg.iterations) * cfg.samples_per_level *
                  sampler.steps_per_path();
    if (est_work > cfg.work_budget) {
        throw BudgetExceeded("estimated work M^K * sde_steps = " + std::to_string(est_work) +
                             " exceeds the budget " + std::to_string(cfg.work_budget));
    }

    ApplyContext ctx = make_apply_context(p, sampler);
    ctx.leaf_fast = cfg.init == PicardConfig::Init::zero && ctx.f_needs_v && !p.f.uses_t() &&
                    !p.f.uses_x();
    const RngStream root(cfg.seed);
    const int M = cfg.samples_per_level;

    PicardRun run;
    run.result.work = sampler.setup_work;
    for (int k = 1; k <= cfg.iterations; ++k) {
        const RngStream level_stream = root.level(static_cast<std::uint64_t>(k));
        RunningStat stat = chunked_stats(
            static_cast<std::uint64_t>(M), k > 1 ? 1 : kFlatChunk, exec.threads,
            &run.result.work,
            [&](std::size_t i, std::uint64_t* w) {
                if (k == 1 && ctx.leaf_fast) {
                    ScratchVec<16> xT_buf;
                    const auto xT =
                        xT_buf.acquire(static_cast<std::size_t>(p.dynamics.d));
                    ctx.sampler->sample_terminal_batched(t, x, level_stream, i, xT, w);
                    double value = p.g.evaluate(Bindings(p.horizon, xT));
                    ++*w;
                    value += (p.horizon - t) * p.f.evaluate(Bindings(t, x, 0.0));
                    ++*w;
                    return value;
                }
                const RngStream branch = level_stream.path(i);
                return phi_sample(
                    ctx, t, x, branch,
                    [&](double r, std::span<const double> xr) {
                        if (k == 1) {
                            if (cfg.init == PicardConfig::Init::zero) return 0.0;
                            const double value = p.g.evaluate(Bindings(p.horizon, xr));
                            ++*w;
                            return value;
                        }
                        return picard_recursive(ctx, cfg.init, k - 1, r, xr, M,
                                                branch.level(static_cast<std::uint64_t>(k) - 1),
                                                w);
                    },
                    w);
            });
        run.iterates.push_back(stat.mean);
        run.iterate_se.push_back(M >= 2 ? stat.std_error() : 0.0);
    }
    run.result.value = run.iterates.back();
    run.result.std_error =
        M >= 2 ? run.iterate_se.back() : std::numeric_limits<double>::quiet_NaN();
    run.result.samples = static_cast<std::uint64_t>(M);
    return run;
}

namespace {

double mlp_estimated_work(int n, std::uint64_t M, double per_path) {
    if (n <= 0) return 0.0;
    std::vector<double> W(static_cast<std::size_t>(n) + 1, 0.0);
    for (int k = 1; k <= n; ++k) {
        double total = static_cast<double>(ipow_saturating(M, k)) * per_path;
        for (int l = 1; l < k; ++l) {
            total += static_cast<double>(ipow_saturating(M, k - l)) *
                     (per_path + W[static_cast<std::size_t>(l)] +
                      W[static_cast<std::size_t>(l) - 1]);
        }
        W[static_cast<std::size_t>(k)] = total;
    }
    return W[static_cast<std::size_t>(n)];
}

// Full-history multilevel Picard recursion. The g-term shares its M^n paths
// with the level-0 reaction term (keyed exactly like picard_apply with
// v_prev = 0), and each telescoping difference evaluates U_l and U_{l-1} at
// the same (R, X_R) with independent inner randomness.
double mlp_recursive(const ApplyContext& ctx, int n, double s, std::span<const double> y, int M,
                     const RngStream& stream, std::uint64_t* work) {
    const ProblemSpec& p = *ctx.p;
    if (n == 0) return 0.0;
    const double T = p.horizon;
    if (s >= T) {
        const double value = p.g.evaluate(Bindings(T, y));
        if (work) ++*work;
        return value;
    }
    const double tau = T - s;
    const std::uint64_t Mn = ipow_saturating(static_cast<std::uint64_t>(M), n);

    auto zero_fn = [](double, std::span<const double>) { return 0.0; };
    const RunningStat base =
        chunked_stats(Mn, kFlatChunk, 1, work, [&](std::size_t i, std::uint64_t* w) {
            return phi_sample(ctx, s, y, stream.path(i), zero_fn, w);
        });
    double total = base.mean;
    // The telescoping differences vanish identically when f ignores v.
    if (!ctx.f_needs_v) return total;

    const int d = p.dynamics.d;
    ScratchVec<16> xr_buf;
    const auto xr = xr_buf.acquire(static_cast<std::size_t>(d));
    for (int l = 1; l < n; ++l) {
        const std::uint64_t Ml = ipow_saturating(static_cast<std::uint64_t>(M), n - l);
        RunningStat level;
        for (std::uint64_t i = 0; i < Ml; ++i) {
            const RngStream si = stream.branch(static_cast<std::uint64_t>(l), i);
            const double r = s + tau * si.uniform(0);
            ctx.sampler->sample_point(s, y, r, si, xr, work);
            const double u_l = mlp_recursive(ctx, l, r, xr, M, si.branch(0, 0), work);
            const double u_lm1 = mlp_recursive(ctx, l - 1, r, xr, M, si.branch(0, 1), work);
            double diff = p.f.evaluate(Bindings(r, xr, u_l)) - p.f.evaluate(Bindings(r, xr, u_lm1));
            if (work) *work += 2;
            level.add(diff);
        }
        total += tau * level.mean;
    }
    return total;
}

}  // namespace

double mlp_single(const ProblemSpec& p, const MlpConfig& cfg, double t,
                  std::span<const double> x, const RngStream& stream, std::uint64_t* work) {
    check_query(p, t, x);
    if (cfg.levels < 1) throw Error("MlpConfig.levels must be >= 1");
    if (cfg.base_samples < 2) throw Error("MlpConfig.base_samples must be >= 2");
    const PathSampler sampler = PathSampler::make(p, cfg.scheme, cfg.sde_steps);
    if (work) *work += sampler.setup_work;
    const ApplyContext ctx = make_apply_context(p, sampler);
    return mlp_recursive(ctx, cfg.levels, t, x, cfg.base_samples, stream, work);
}

Estimate mlp_estimate(const ProblemSpec& p, const MlpConfig& cfg, double t,
                      std::span<const double> x, const ExecContext& exec) {
    check_query(p, t, x);
    if (cfg.replications < 2) throw Error("MlpConfig.replications must be >= 2");
    const PathSampler sampler = PathSampler::make(p, cfg.scheme, cfg.sde_steps);
    const double est_work =
        static_cast<double>(cfg.replications) *
        (p.f.uses_v() ? mlp_estimated_work(cfg.levels, static_cast<std::uint64_t>(cfg.base_samples),
                                           sampler.steps_per_path())
                      : static_cast<double>(ipow_saturating(
                            static_cast<std::uint64_t>(cfg.base_samples), cfg.levels)) *
                            sampler.steps_per_path());
    if (est_work > cfg.work_budget) {
        throw BudgetExceeded("estimated MLP work " + std::to_string(est_work) +
                             " exceeds the budget " + std::to_string(cfg.work_budget));
    }

    const RngStream root(cfg.seed);
    Estimate est;
    RunningStat stat = chunked_stats(
        static_cast<std::uint64_t>(cfg.replications), 1, exec.threads, &est.work,
        [&](std::size_t r, std::uint64_t* w) {
            return mlp_single(p, cfg, t, x, root.replication(r), w);
        });
    est.value = stat.mean;
    est.std_error = stat.std_error();
    est.samples = static_cast<std::uint64_t>(cfg.replications);
    return est;
}

ResidualReport fixed_point_residual(const ValueFn& v_hat, const ProblemSpec& p,
                                    std::span<const SamplePoint> probes, int M, int sde_steps,
                                    const RngStream& stream, const ExecContext& exec) {
    if (probes.empty()) throw Error("fixed_point_residual requires probes");
    ResidualReport report;
    report.summary = 0.0;
    std::uint64_t probe_index = 0;
    for (const SamplePoint& probe : probes) {
        const Estimate phi = picard_apply(v_hat, p, probe.t, probe.x, M, sde_steps,
                                          stream.branch(probe_index), SamplerScheme::automatic,
                                          exec);
        ResidualReport::Probe entry;
        entry.point = probe;
        entry.v_hat = v_hat(probe.t, probe.x);
        entry.residual = phi.value - entry.v_hat;
        entry.std_error = phi.std_error;
        report.summary = std::max(
            report.summary, std::fabs(entry.residual) / std::max(1.0, std::fabs(entry.v_hat)));
        report.probes.push_back(std::move(entry));
        ++probe_index;
    }
    return report;
}

ContractionReport contraction_diagnostic(const ProblemSpec& p, const PicardConfig& cfg, double t,
                                         std::span<const double> x, const ExecContext& exec) {
    if (cfg.iterations < 3) throw Error("contraction_diagnostic requires K >= 3");
    const PicardRun run = picard_solve(p, cfg, t, x, exec);

    ContractionReport report;
    report.threshold = 1.5 * p.lipschitz_L * (p.horizon - t) + 0.1;
    for (std::size_t k = 0; k + 1 < run.iterates.size(); ++k) {
        report.diffs.push_back(run.iterates[k + 1] - run.iterates[k]);
    }

    // Differences below the combined MC noise of the two iterates carry no
    // contraction signal; report the floor instead of fitting garbage.
    std::vector<double> ks, logs;
    std::size_t floored = 0;
    for (std::size_t k = 0; k < report.diffs.size(); ++k) {
        const double noise = 3.0 * std::hypot(run.iterate_se[k], run.iterate_se[k + 1]);
        const double mag = std::fabs(report.diffs[k]);
        if (mag <= noise || mag == 0.0) {
            ++floored;
            continue;
        }
        ks.push_back(static_cast<double>(k + 1));
        logs.push_back(std::log(mag));
    }
    if (ks.size() < 2) {
        report.noise_floor = true;
        report.fitted_ratio = 0.0;
        report.pass = true;
        return report;
    }
    if (floored > 0) report.noise_floor = true;

    double kbar = 0.0, lbar = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        kbar += ks[i];
        lbar += logs[i];
    }
    kbar /= static_cast<double>(ks.size());
    lbar /= static_cast<double>(ks.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        num += (ks[i] - kbar) * (logs[i] - lbar);
        den += (ks[i] - kbar) * (ks[i] - kbar);
    }
    const double slope = den > 0.0 ? num / den : 0.0;
    report.fitted_ratio = std::exp(slope);
    report.pass = report.fitted_ratio <= report.threshold;
    return report;
}

}  // namespace sfpe
