#include <doctest.h>

#include <cmath>
#include <vector>

#include "sfpe/lyapunov.hpp"
#include "sfpe/sde.hpp"

using namespace sfpe;

namespace {

SdeCoefficients coeffs(int d, int m, std::vector<std::string> mu, std::vector<std::string> sigma,
                       double L = 1.0) {
    SdeCoefficients c;
    c.d = d;
    c.m = m;
    c.lipschitz_L = L;
    for (auto& s : mu) c.mu.push_back(Expression::parse(s, d, false));
    for (auto& s : sigma) c.sigma.push_back(Expression::parse(s, d, false));
    c.validate();
    return c;
}

}  // namespace

TEST_CASE("em_step worked examples") {
    // pure diffusion step
    auto c = coeffs(2, 2, {"0", "0"}, {"1", "0", "0", "1"});
    auto out = em_step(std::vector<double>{0.0, 0.0}, 0.0, 0.1, std::vector<double>{0.1, -0.2}, c);
    CHECK(out[0] == doctest::Approx(0.1));
    CHECK(out[1] == doctest::Approx(-0.2));

    // GBM-style coefficients by direct substitution
    auto gbm = coeffs(1, 1, {"0.05*x1"}, {"0.2*x1"});
    auto next = em_step(std::vector<double>{1.0}, 0.0, 0.1, std::vector<double>{0.3}, gbm);
    CHECK(next[0] == doctest::Approx(1.065));

    auto bad = coeffs(1, 1, {"0"}, {"1/x1"});
    CHECK_THROWS_AS(
        em_step(std::vector<double>{0.0}, 0.0, 0.1, std::vector<double>{0.1}, bad),
        DomainError);
}

TEST_CASE("degenerate SDE path is constant") {
    auto c = coeffs(1, 1, {"0"}, {"0"});
    PathPlan plan{0.0, 1.0, 16};
    auto path = simulate_path(std::vector<double>{2.5}, plan, c, RngStream(1).path(0));
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        CHECK(path.state(k)[0] == 2.5);
    }
    CHECK_FALSE(path.stopped_early);
}

TEST_CASE("zero noise agrees with forward Euler") {
    auto c = coeffs(1, 1, {"-2*x1 + sin(t)"}, {"0"});
    PathPlan plan{0.0, 1.0, 64};
    auto path = simulate_path(std::vector<double>{1.0}, plan, c, RngStream(3).path(0));
    double x = 1.0;
    const double dt = plan.dt();
    for (int k = 0; k < plan.steps; ++k) {
        const double t = k * dt;
        x += dt * (-2.0 * x + std::sin(t));
        CHECK(path.state(static_cast<std::size_t>(k) + 1)[0] == doctest::Approx(x).epsilon(1e-14));
    }
}

TEST_CASE("weak sanity: E|W_1|^2 = d") {
    const int d = 10;
    std::vector<std::string> mu(d, "0");
    std::vector<std::string> sigma(static_cast<std::size_t>(d) * d, "0");
    for (int i = 0; i < d; ++i) sigma[static_cast<std::size_t>(i) * d + i] = "1";
    auto c = coeffs(d, d, mu, sigma, 4.0);

    PathPlan plan{0.0, 1.0, 1, SdeScheme::exact_constant_diffusion};
    const std::vector<double> x0(d, 0.0);
    RunningStat stat;
    const RngStream root(2024);
    for (std::uint64_t i = 0; i < 20000; ++i) {
        auto path = simulate_path(x0, plan, c, root.path(i));
        double r2 = 0.0;
        for (double xi : path.state(1)) r2 += xi * xi;
        stat.add(r2);
    }
    CHECK(std::fabs(stat.mean - d) <= 3.0 * stat.std_error());
}

TEST_CASE("exact constant-diffusion sampler") {
    const std::vector<double> B = {1.0};
    const std::vector<double> x0 = {0.0};
    // s == t and B == 0 degenerate cases
    auto same = exact_constant_diffusion_sample(x0, 0.5, 0.5, B, 1, 1, RngStream(5).path(0));
    CHECK(same[0] == 0.0);
    auto zero =
        exact_constant_diffusion_sample(x0, 0.0, 3.0, std::vector<double>{0.0}, 1, 1,
                                        RngStream(5).path(0));
    CHECK(zero[0] == 0.0);

    RunningStat stat;
    const RngStream root(11);
    for (std::uint64_t i = 0; i < 100000; ++i) {
        auto y = exact_constant_diffusion_sample(x0, 0.0, 1.0, B, 1, 1, root.path(i));
        stat.add(y[0] * y[0]);
    }
    CHECK(std::fabs(stat.mean - 1.0) <= 3.0 * stat.std_error());
}

TEST_CASE("V-threshold stopping") {
    auto c = coeffs(1, 1, {"0"}, {"1"});
    const StopRule rule = v_threshold_stop(LyapunovSpec::polynomial(2.0), 1.0);
    PathPlan plan{0.0, 1.0, 8, SdeScheme::euler_maruyama, rule};
    // any x0 != 0 has V(x0) > 1 and freezes at step 0
    auto path = simulate_path(std::vector<double>{0.7}, plan, c, RngStream(9).path(0));
    CHECK(path.stopped_early);
    CHECK(path.stop_time == 0.0);
    for (std::size_t k = 0; k < path.times.size(); ++k) CHECK(path.state(k)[0] == 0.7);
}

TEST_CASE("raising the stop level never stops earlier") {
    auto c = coeffs(1, 1, {"x1"}, {"1"});
    auto v = [](double, std::span<const double> x) { return 1.0 + x[0] * x[0]; };
    const RngStream root(31);
    for (std::uint64_t i = 0; i < 50; ++i) {
        double prev_stop = -1.0;
        for (double level : {1.5, 3.0, 6.0, 12.0}) {
            PathPlan plan{0.0, 1.0, 64, SdeScheme::euler_maruyama, StopRule{v, level}};
            auto path = simulate_path(std::vector<double>{0.5}, plan, c, root.path(i));
            const double stop = path.stopped_early ? path.stop_time : 2.0;
            CHECK(stop >= prev_stop);
            prev_stop = stop;
        }
    }
}

TEST_CASE("state overflow raises NonFinite with the step index") {
    // coefficients stay finite, the updated state does not
    auto c = coeffs(1, 1, {"x1"}, {"0"});
    PathPlan plan{0.0, 1.0, 4};
    try {
        simulate_path(std::vector<double>{1.6e308}, plan, c, RngStream(1).path(0));
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(e.step_index() == 0);
    }
    // non-finite coefficient values themselves are a DomainError
    auto cubic = coeffs(1, 1, {"x1^3"}, {"0"});
    PathPlan plan2{0.0, 1.0, 20};
    CHECK_THROWS_AS(simulate_path(std::vector<double>{10.0}, plan2, cubic, RngStream(1).path(0)),
                    DomainError);
}

TEST_CASE("coercivity worked examples") {
    std::vector<SamplePoint> pts;
    for (double x : {-2.0, -0.5, 0.0, 0.5, 2.0}) pts.push_back({0.0, {x}});

    auto ou = coeffs(1, 1, {"-x1"}, {"1"});
    CHECK(coercivity_check(ou, 1.0, pts).pass);

    auto cubic = coeffs(1, 1, {"x1^3"}, {"1"});
    auto report = coercivity_check(cubic, 1.0, pts);
    CHECK_FALSE(report.pass);
    // at |x| = 2: <x, x^3> = 16 > 1*(1+4) = 5, violation 11
    CHECK(report.max_drift_violation == doctest::Approx(11.0));
    CHECK(std::fabs(report.worst_drift.x[0]) == 2.0);
}

TEST_CASE("stability bound: zero gap is exactly zero") {
    auto ou = coeffs(1, 1, {"-x1"}, {"1"}, 1.0);
    PathPlan plan{0.0, 1.0, 50};
    auto report = stability_bound_test(ou, 0.0, 2000, plan, RngStream(8));
    CHECK(report.estimate == 0.0);
    CHECK(report.pass);
}

TEST_CASE("stability bound against the explicit constant") {
    auto ou = coeffs(1, 1, {"-x1"}, {"1"}, 1.0);
    PathPlan plan{0.0, 1.0, 50};
    auto report = stability_bound_test(ou, 0.1, 4000, plan, RngStream(8));
    // 4 T (T+1) gap^2 e^{4 L^2 T (T+1)} = 0.08 e^8
    CHECK(report.bound == doctest::Approx(0.08 * std::exp(8.0)));
    CHECK(report.estimate < report.bound);
    CHECK(report.pass);

    auto big = stability_bound_test(ou, 1.0, 4000, plan, RngStream(8));
    CHECK(big.pass);
}

TEST_CASE("worker-thread failures propagate to the caller") {
    auto c = coeffs(1, 1, {"1/x1"}, {"0"});
    PathPlan plan{0.0, 1.0, 4};
    // paths start at the origin, so every worker faults; the estimator must
    // abort rather than discard paths
    CHECK_THROWS_AS(stability_bound_test(c, 0.1, 64, plan, RngStream(2), ExecContext{4}),
                    DomainError);
}

TEST_CASE("supermartingale property for catalog-style dynamics") {
    // GBM with V2 and its fitted rate.
    auto gbm = coeffs(1, 1, {"0.1*x1"}, {"0.2*x1"}, 0.25);
    const LyapunovSpec v2 = LyapunovSpec::polynomial(2.0);
    std::vector<SamplePoint> grid;
    for (double x = -10.0; x <= 10.0; x += 0.5) grid.push_back({0.0, {x}});
    const double rho = fit_rho(v2, gbm, grid);
    CHECK(rho == doctest::Approx(0.24).epsilon(0.05));

    auto v = [&](double t, std::span<const double> x) { return v_value(v2, t, x); };
    const std::vector<double> times = {0.25, 0.5, 1.0};
    auto report = supermartingale_check(gbm, v, rho, std::vector<double>{1.0}, times, 200, 10000,
                                        RngStream(55));
    CHECK(report.pass);
    CHECK(report.v0 == doctest::Approx(2.0));
}
