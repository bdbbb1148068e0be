#include <doctest.h>

#include <cmath>
#include <vector>

#include "sfpe/lyapunov.hpp"

using namespace sfpe;

namespace {

SdeCoefficients coeffs(int d, int m, std::vector<std::string> mu, std::vector<std::string> sigma) {
    SdeCoefficients c;
    c.d = d;
    c.m = m;
    for (auto& s : mu) c.mu.push_back(Expression::parse(s, d, false));
    for (auto& s : sigma) c.sigma.push_back(Expression::parse(s, d, false));
    c.validate();
    return c;
}

SdeCoefficients identity_dynamics(int d, const std::string& diag = "1") {
    std::vector<std::string> mu(static_cast<std::size_t>(d), "0");
    std::vector<std::string> sigma(static_cast<std::size_t>(d) * d, "0");
    for (int i = 0; i < d; ++i) sigma[static_cast<std::size_t>(i) * d + i] = diag;
    return coeffs(d, d, mu, sigma);
}

}  // namespace

TEST_CASE("v_value worked examples") {
    const LyapunovSpec heat = LyapunovSpec::heat_kernel(1.0, 1.0);
    CHECK(v_value(heat, 0.0, std::vector<double>{0.0}) ==
          doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));

    const LyapunovSpec p2 = LyapunovSpec::polynomial(2.0);
    CHECK(v_value(p2, 0.0, std::vector<double>{3.0, 4.0}) == doctest::Approx(26.0));

    const LyapunovSpec p4 = LyapunovSpec::polynomial(4.0);
    CHECK(v_value(p4, 0.0, std::vector<double>{0.0}) == 1.0);

    // overflow is an explicit error, never a silent Inf
    CHECK_THROWS_AS(v_value(heat, 0.0, std::vector<double>{60.0}), OverflowError);
}

TEST_CASE("heat-kernel generator vanishes when c = alpha") {
    // sigma = I so BB^T = I exactly; alpha = c = 1.
    const LyapunovSpec heat = LyapunovSpec::heat_kernel(1.0, 1.0);
    for (int d : {1, 2, 3}) {
        auto c = identity_dynamics(d);
        RngStream stream = RngStream(17).branch(static_cast<std::uint64_t>(d));
        for (int k = 0; k < 100; ++k) {
            RngStream s = stream.path(static_cast<std::uint64_t>(k));
            std::vector<double> x(static_cast<std::size_t>(d));
            s.fill_normals(0, x);
            double norm = 0.0;
            for (double xi : x) norm += xi * xi;
            norm = std::sqrt(norm);
            const double radius = 5.0 * s.uniform(0);
            if (norm > 0) {
                for (double& xi : x) xi *= radius / norm;
            }
            const double t = s.uniform(1);
            const double gen = generator_apply(heat, c, t, x);
            CHECK(std::fabs(gen) <= 1e-10);

            // FD cross-check of the closed form
            auto v = [&](double tt, std::span<const double> xx) { return v_value(heat, tt, xx); };
            const double fd = generator_apply_fd(v, c, t, x, 1e-4 * (1.0 + radius));
            const double scale =
                v_value(heat, t, x) *
                (d / (2.0 * (t + 1.0)) + radius * radius / (2.0 * (t + 1.0) * (t + 1.0)) + 1.0);
            CHECK(std::fabs(gen - fd) <= 2e-4 * scale);
        }
    }
}

TEST_CASE("heat-kernel generator is negative when c < alpha") {
    const LyapunovSpec heat = LyapunovSpec::heat_kernel(2.0, 1.0);
    auto c = identity_dynamics(1);  // c = 1 < alpha = 2
    const double gen = generator_apply(heat, c, 0.0, std::vector<double>{1.0});
    CHECK(gen < 0.0);
    // closed form (-alpha + c) [d/(2s) + |x|^2/(2 s^2)] V at s = eps = 1
    const double V = v_value(heat, 0.0, std::vector<double>{1.0});
    CHECK(gen == doctest::Approx((-2.0 + 1.0) * (0.5 + 0.5) * V).epsilon(1e-8));
}

TEST_CASE("heat-kernel generator matches the factored closed form (c != alpha)") {
    const double alpha = 2.0, eps = 0.7, cbar = 0.5;
    const LyapunovSpec heat = LyapunovSpec::heat_kernel(alpha, eps);
    auto dyn = identity_dynamics(2, "sqrt(0.5)");
    for (double t : {0.0, 0.3, 0.9}) {
        for (double r : {0.0, 1.0, 3.0}) {
            const std::vector<double> x = {r, 0.0};
            const double s = alpha * t + eps;
            const double V = v_value(heat, t, x);
            const double expected =
                (-alpha + cbar) * (2.0 / (2.0 * s) + r * r / (2.0 * s * s)) * V;
            const double gen = generator_apply(heat, dyn, t, x);
            CHECK(gen == doctest::Approx(expected).epsilon(1e-8));
        }
    }
}

TEST_CASE("polynomial generator identities") {
    // q=2, mu=0, sigma=I_3: generator == 3 everywhere
    const LyapunovSpec p2 = LyapunovSpec::polynomial(2.0);
    auto c3 = identity_dynamics(3);
    for (double r : {0.0, 1.0, 5.0}) {
        const std::vector<double> x = {r, -r, 0.5 * r};
        CHECK(generator_apply(p2, c3, 0.2, x) == doctest::Approx(3.0).epsilon(1e-12));
    }

    // FD cross-check of (q/2)[d + (q-2)|x|^2/(1+|x|^2)](1+|x|^2)^{q/2-1}
    const LyapunovSpec p4 = LyapunovSpec::polynomial(4.0);
    auto c2 = identity_dynamics(2);
    for (double r : {0.0, 0.5, 2.0, 10.0}) {
        const std::vector<double> x = {r / std::sqrt(2.0), r / std::sqrt(2.0)};
        const double u = 1.0 + r * r;
        const double expected = 2.0 * (2.0 + 2.0 * r * r / u) * u;
        CHECK(generator_apply(p4, c2, 0.0, x) == doctest::Approx(expected).epsilon(1e-6));
        auto v = [&](double tt, std::span<const double> xx) { return v_value(p4, tt, xx); };
        const double fd = generator_apply_fd(v, c2, 0.0, x, 1e-5 * (1.0 + r));
        CHECK(fd == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("GBM polynomial generator") {
    // mu = x, sigma = x, q = 2: generator = 3 x^2 <= 3 (1 + x^2)
    auto gbm = coeffs(1, 1, {"x1"}, {"x1"});
    const LyapunovSpec p2 = LyapunovSpec::polynomial(2.0, 3.0);
    for (double x : {-2.0, 0.0, 1.5}) {
        CHECK(generator_apply(p2, gbm, 0.0, std::vector<double>{x}) ==
              doctest::Approx(3.0 * x * x).epsilon(1e-10));
    }
    std::vector<SamplePoint> grid;
    for (double x = -5.0; x <= 5.0; x += 0.25) grid.push_back({0.0, {x}});
    CHECK(check_supersolution(p2, gbm, grid).pass);
}

TEST_CASE("supersolution pass/fail worked example") {
    auto c3 = identity_dynamics(3);
    std::vector<SamplePoint> grid;
    grid.push_back({0.0, {0.0, 0.0, 0.0}});
    for (double r : {0.5, 1.0, 2.0}) grid.push_back({0.0, {r, 0.0, 0.0}});

    LyapunovSpec ok = LyapunovSpec::polynomial(2.0, 3.0);
    CHECK(check_supersolution(ok, c3, grid).pass);

    LyapunovSpec bad = LyapunovSpec::polynomial(2.0, 2.0);
    auto report = check_supersolution(bad, c3, grid);
    CHECK_FALSE(report.pass);
    // worst point is the origin: (3 - 2)/1 = 1
    CHECK(report.max_violation == doctest::Approx(1.0));
    CHECK(report.argmax.x == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("user-expression family via finite differences") {
    // V = 1 + x^2 as an expression: same generator as polynomial q=2.
    const LyapunovSpec user = LyapunovSpec::user(Expression::parse("1 + x1^2", 1, false), 0.0);
    auto c = identity_dynamics(1);
    CHECK(generator_apply(user, c, 0.0, std::vector<double>{2.0}) ==
          doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("growth ratio") {
    const std::vector<double> radii = {1.0, 2.0, 4.0, 8.0, 16.0};
    const Expression f0 = Expression::parse("0", 2, true);
    const Expression g = Expression::parse("x1^2 + x2^2", 2, false);

    // |x|^2 against V4: shell sups decay like r^-2
    auto report = check_growth_ratio(f0, g, LyapunovSpec::polynomial(4.0), 1.0, radii, 16,
                                     RngStream(3), 1e-2);
    CHECK(report.pass);
    CHECK(report.shell_sup.back() < report.shell_sup.front());

    // exponential data beats any polynomial V
    const Expression gexp = Expression::parse("exp(x1^2 + x2^2)", 2, false);
    auto fail = check_growth_ratio(f0, gexp, LyapunovSpec::polynomial(8.0), 1.0, radii, 16,
                                   RngStream(3), 1e-2);
    CHECK_FALSE(fail.pass);

    // f contributes zero when it vanishes at v = 0
    for (double sup : report.shell_sup) CHECK(sup >= 0.0);
}

TEST_CASE("heat-type horizon rule") {
    CHECK(admissible_heat_type(1.0, 0.4, 1.0));
    CHECK_FALSE(admissible_heat_type(1.0, 0.5, 1.0));  // strict inequality
    CHECK(admissible_heat_type(0.1, 4.9, 1.0));

    // monotonicity: decreasing any of a, c, T never flips true -> false
    RngStream s(123);
    for (std::uint64_t k = 0; k < 200; ++k) {
        const double a = 0.01 + 2.0 * s.uniform(3 * k);
        const double c = 0.01 + 2.0 * s.uniform(3 * k + 1);
        const double T = 0.01 + 2.0 * s.uniform(3 * k + 2);
        if (admissible_heat_type(a, c, T)) {
            CHECK(admissible_heat_type(a * 0.5, c, T));
            CHECK(admissible_heat_type(a, c * 0.5, T));
            CHECK(admissible_heat_type(a, c, T * 0.5));
        }
    }
}

TEST_CASE("lipschitz probe") {
    std::vector<LipschitzProbePoint> sample;
    RngStream s(9);
    for (std::uint64_t k = 0; k < 200; ++k) {
        LipschitzProbePoint p;
        p.t = 0.0;
        p.x = {0.0};
        p.v = 6.0 * s.uniform(2 * k) - 3.0;
        p.w = 6.0 * s.uniform(2 * k + 1) - 3.0;
        if (p.v == p.w) p.w += 1.0;
        sample.push_back(p);
    }

    CHECK(lipschitz_probe(Expression::parse("sin(v)", 1, true), 1.0, sample).pass);
    CHECK(lipschitz_probe(Expression::parse("v - clip(v,-1,1)^3", 1, true), 4.0, sample).pass);

    std::vector<LipschitzProbePoint> pair = {{0.0, {0.0}, 3.0, 2.0}};
    auto fail = lipschitz_probe(Expression::parse("v^2", 1, true), 1.0, pair);
    CHECK_FALSE(fail.pass);
    CHECK(fail.max_quotient == doctest::Approx(5.0));
}

TEST_CASE("spectral bound of constant sigma") {
    auto c = coeffs(2, 2, {"0", "0"}, {"sqrt(2)", "0", "0", "1"});
    CHECK(constant_sigma_spectral_bound(c) == doctest::Approx(2.0).epsilon(1e-10));
    auto zero = coeffs(1, 1, {"0"}, {"0"});
    CHECK(constant_sigma_spectral_bound(zero) == doctest::Approx(0.0));
}

TEST_CASE("v_value positivity and validation") {
    CHECK_THROWS_AS(LyapunovSpec::polynomial(-1.0), Error);
    CHECK_THROWS_AS(LyapunovSpec::heat_kernel(1.0, 0.0), Error);
    const LyapunovSpec user = LyapunovSpec::user(Expression::parse("x1", 1, false), 0.0);
    CHECK_THROWS_AS(v_value(user, 0.0, std::vector<double>{-1.0}), Error);
}
