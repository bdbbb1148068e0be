#include "sfpe/catalog.hpp"

#include <cmath>

namespace sfpe {

std::string_view check_name(Check c) {
    switch (c) {
        case Check::coercivity: return "coercivity";
        case Check::lipschitz: return "lipschitz";
        case Check::supersolution: return "supersolution";
        case Check::growth_ratio: return "growth_ratio";
        case Check::heat_type: return "heat_type";
    }
    return "?";
}

std::vector<Check> default_profile(const ProblemSpec& p) {
    std::vector<Check> profile = {Check::coercivity, Check::lipschitz, Check::supersolution,
                                  Check::growth_ratio};
    if (p.growth.kind == GrowthKind::gaussian) profile.push_back(Check::heat_type);
    return profile;
}

std::vector<SamplePoint> default_probes(const ProblemSpec& p) {
    const int d = p.dynamics.d;
    const double half = 0.5 * p.horizon;
    const double c = 0.5 / std::sqrt(static_cast<double>(d));
    std::vector<double> zero(static_cast<std::size_t>(d), 0.0);
    std::vector<double> plus(static_cast<std::size_t>(d), c);
    std::vector<double> minus(static_cast<std::size_t>(d), -c);
    return {{0.0, zero}, {0.0, plus}, {0.0, minus}, {half, zero}, {half, plus}};
}

namespace {

SdeCoefficients make_dynamics(int d, int m, const std::vector<std::string>& mu,
                              const std::vector<std::string>& sigma, double L) {
    SdeCoefficients c;
    c.d = d;
    c.m = m;
    c.lipschitz_L = L;
    for (const std::string& s : mu) c.mu.push_back(Expression::parse(s, d, false));
    for (const std::string& s : sigma) c.sigma.push_back(Expression::parse(s, d, false));
    c.validate();
    return c;
}

// Identity diffusion as d x d expression strings.
std::vector<std::string> identity_sigma(int d, const std::string& diag = "1") {
    std::vector<std::string> rows(static_cast<std::size_t>(d) * d, "0");
    for (int i = 0; i < d; ++i) {
        rows[static_cast<std::size_t>(i) * d + i] = diag;
    }
    return rows;
}

std::string sum_of_squares(int d) {
    std::string s;
    for (int i = 1; i <= d; ++i) {
        if (i > 1) s += " + ";
        s += "x" + std::to_string(i) + "^2";
    }
    return s;
}

CatalogEntry make_entry(std::string id, ProblemSpec p, std::optional<std::string> reference) {
    CatalogEntry e;
    e.id = std::move(id);
    if (reference) {
        e.reference = Expression::parse(*reference, p.dynamics.d, false);
    }
    e.profile = default_profile(p);
    e.probes = default_probes(p);
    e.problem = std::move(p);
    return e;
}

std::vector<CatalogEntry> build_catalog() {
    std::vector<CatalogEntry> entries;

    {
        // Pure heat dynamics in d = 10; the linear Feynman-Kac benchmark.
        const int d = 10;
        ProblemSpec p;
        p.dynamics = make_dynamics(d, d, std::vector<std::string>(d, "0"), identity_sigma(d), 4.0);
        p.f = Expression::parse("0", d, true);
        p.g = Expression::parse(sum_of_squares(d), d, false);
        p.horizon = 1.0;
        p.lipschitz_L = 4.0;
        p.lyapunov = LyapunovSpec::polynomial(4.0, 24.0);
        p.growth = {GrowthKind::polynomial, 2.0};
        entries.push_back(
            make_entry("heat_quadratic", std::move(p), sum_of_squares(d) + " + 10*(1 - t)"));
    }
    {
        // f = v on heat dynamics: v(t,x) = e^{T-t} (x^2 + (T-t)).
        ProblemSpec p;
        p.dynamics = make_dynamics(1, 1, {"0"}, {"1"}, 1.0);
        p.f = Expression::parse("v", 1, true);
        p.g = Expression::parse("x1^2", 1, false);
        p.horizon = 1.0;
        p.lipschitz_L = 1.0;
        p.lyapunov = LyapunovSpec::polynomial(4.0, 6.0);
        p.growth = {GrowthKind::polynomial, 2.0};
        entries.push_back(
            make_entry("lambda_reaction", std::move(p), "exp(1 - t)*(x1^2 + (1 - t))"));
    }
    {
        // No dynamics at all: the Picard iterates are the exponential series.
        ProblemSpec p;
        p.dynamics = make_dynamics(1, 1, {"0"}, {"0"}, 1.0);
        p.f = Expression::parse("v", 1, true);
        p.g = Expression::parse("1", 1, false);
        p.horizon = 1.0;
        p.lipschitz_L = 1.0;
        p.lyapunov = LyapunovSpec::polynomial(2.0, 0.0);
        p.growth = {GrowthKind::polynomial, 0.0};
        entries.push_back(make_entry("deterministic_exp", std::move(p), "exp(1 - t)"));
    }
    {
        // sigma = sqrt(2), g = sin: u(t,x) = e^{-(T-t)} sin x, the oracle's benchmark.
        ProblemSpec p;
        p.dynamics = make_dynamics(1, 1, {"0"}, {"sqrt(2)"}, 2.0);
        p.f = Expression::parse("0", 1, true);
        p.g = Expression::parse("sin(x1)", 1, false);
        p.horizon = 1.0;
        p.lipschitz_L = 2.0;
        p.lyapunov = LyapunovSpec::heat_kernel(2.0, 1.0, 0.0);
        p.growth = {GrowthKind::gaussian, 0.1};
        entries.push_back(make_entry("heat_sin_1d", std::move(p), "exp(-(1 - t))*sin(x1)"));
    }
    {
        // Globally Lipschitz truncation of the Allen-Cahn cubic.
        ProblemSpec p;
        p.dynamics = make_dynamics(1, 1, {"0"}, {"1"}, 4.0);
        p.f = Expression::parse("v - clip(v, -1, 1)^3", 1, true);
        p.g = Expression::parse("tanh(x1)", 1, false);
        p.horizon = 0.25;
        p.lipschitz_L = 4.0;
        p.lyapunov = LyapunovSpec::polynomial(4.0, 4.0);
        p.growth = {GrowthKind::polynomial, 1.0};
        entries.push_back(make_entry("allen_cahn_trunc", std::move(p), std::nullopt));
    }
    {
        ProblemSpec p;
        p.dynamics = make_dynamics(1, 1, {"0"}, {"1"}, 1.0);
        p.f = Expression::parse("sin(v)", 1, true);
        p.g = Expression::parse("x1^2", 1, false);
        p.horizon = 1.0;
        p.lipschitz_L = 1.0;
        p.lyapunov = LyapunovSpec::polynomial(4.0, 6.0);
        p.growth = {GrowthKind::polynomial, 2.0};
        entries.push_back(make_entry("sine_reaction", std::move(p), std::nullopt));
    }
    {
        // Geometric Brownian motion with quadratic terminal data:
        // E[X_T^2 | X_t = x] = x^2 e^{(2 mubar + sigmabar^2)(T-t)}.
        ProblemSpec p;
        p.dynamics = make_dynamics(1, 1, {"0.1*x1"}, {"0.2*x1"}, 0.25);
        p.f = Expression::parse("0", 1, true);
        p.g = Expression::parse("x1^2", 1, false);
        p.horizon = 1.0;
        p.lipschitz_L = 0.25;
        p.lyapunov = LyapunovSpec::polynomial(4.0, 0.8);
        p.growth = {GrowthKind::polynomial, 2.0};
        entries.push_back(make_entry("gbm_linear", std::move(p), "exp(0.24*(1 - t))*x1^2"));
    }
    return entries;
}

}  // namespace

const std::vector<CatalogEntry>& builtin_catalog() {
    static const std::vector<CatalogEntry> entries = build_catalog();
    return entries;
}

const CatalogEntry* find_catalog_entry(std::string_view id) {
    for (const CatalogEntry& e : builtin_catalog()) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

}  // namespace sfpe
