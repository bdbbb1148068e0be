#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "sfpe/catalog.hpp"
#include "sfpe/oracle.hpp"

using namespace sfpe;

namespace {

ProblemSpec heat_sin() {
    const CatalogEntry* entry = find_catalog_entry("heat_sin_1d");
    REQUIRE(entry != nullptr);
    return entry->problem;
}

}  // namespace

TEST_CASE("terminal row equals g on the grid") {
    ProblemSpec p = heat_sin();
    FdGrid grid{-M_PI, M_PI, 50, 2000, FdBoundary::dirichlet_g};
    const FdSolution sol = fd_solve(p, grid);
    CHECK(sol.times.front() == p.horizon);
    for (std::size_t i = 0; i < sol.x.size(); ++i) {
        CHECK(sol.at(0, static_cast<int>(i)) == std::sin(sol.x[i]));
    }
}

TEST_CASE("sin heat problem matches separation of variables") {
    // u(t,x) = e^{-(T-t)} sin x with exact-solution Dirichlet boundaries.
    ProblemSpec p = heat_sin();
    const Expression ref = Expression::parse("exp(-(1 - t))*sin(x1)", 1, false);
    FdGrid grid{-M_PI, M_PI, 200, 0, FdBoundary::dirichlet_reference};
    const double h = 2.0 * M_PI / (grid.nx + 1);
    grid.nt = static_cast<int>(std::ceil(p.horizon * 2.0 / (0.40 * h * h)));
    const FdSolution sol = fd_solve(p, grid, &ref);

    const double exact = std::exp(-1.0) * std::sin(M_PI / 2.0);
    CHECK(std::fabs(sol.value_at(0.0, M_PI / 2.0) - exact) <= 5e-3);

    double max_err = 0.0;
    for (double xq : {-1.5, -0.5, 0.0, 0.7, 2.0}) {
        for (double tq : {0.0, 0.3, 0.8}) {
            const double u = sol.value_at(tq, xq);
            const double e = std::exp(-(1.0 - tq)) * std::sin(xq);
            max_err = std::max(max_err, std::fabs(u - e));
        }
    }
    CHECK(max_err <= 5e-3);
}

TEST_CASE("constants solve the PDE exactly") {
    ProblemSpec p = heat_sin();
    p.g = Expression::parse("1", 1, false);
    FdGrid grid{-2.0, 2.0, 40, 3000, FdBoundary::dirichlet_g};
    const FdSolution sol = fd_solve(p, grid);
    for (std::size_t r = 0; r < sol.times.size(); r += 500) {
        for (std::size_t c = 0; c < sol.x.size(); ++c) {
            CHECK(sol.at(static_cast<int>(r), static_cast<int>(c)) ==
                  doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("constant inhomogeneity: u = lambda (T - t)") {
    ProblemSpec p = heat_sin();
    p.f = Expression::parse("0.7", 1, true);
    p.g = Expression::parse("0", 1, false);
    FdGrid grid{-2.0, 2.0, 40, 3000, FdBoundary::extrapolate_linear};
    const FdSolution sol = fd_solve(p, grid);
    // spatially constant layers stay exact under linear extrapolation
    CHECK(sol.value_at(0.0, 0.3) == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(sol.value_at(0.5, -1.0) == doctest::Approx(0.35).epsilon(1e-10));
}

TEST_CASE("CFL refusal reports the required nt") {
    ProblemSpec p = heat_sin();
    FdGrid grid{-M_PI, M_PI, 200, 50, FdBoundary::dirichlet_g};
    try {
        fd_solve(p, grid);
        FAIL("expected CflViolation");
    } catch (const CflViolation& e) {
        CHECK(e.required_nt() > 50);
        grid.nt = static_cast<int>(e.required_nt());
        CHECK_NOTHROW(fd_solve(p, grid));
    }
}

TEST_CASE("discrete comparison principle") {
    // f = 0 and g1 <= g2 pointwise implies u1 <= u2 everywhere.
    ProblemSpec p1 = heat_sin();
    p1.g = Expression::parse("sin(x1)", 1, false);
    ProblemSpec p2 = heat_sin();
    p2.g = Expression::parse("sin(x1) + 0.25*cos(3*x1) + 0.25", 1, false);
    FdGrid grid{-M_PI, M_PI, 60, 4000, FdBoundary::extrapolate_linear};
    const FdSolution u1 = fd_solve(p1, grid);
    const FdSolution u2 = fd_solve(p2, grid);
    for (std::size_t r = 0; r < u1.times.size(); r += 37) {
        for (std::size_t c = 0; c < u1.x.size(); ++c) {
            CHECK(u1.at(static_cast<int>(r), static_cast<int>(c)) <=
                  u2.at(static_cast<int>(r), static_cast<int>(c)) + 1e-12);
        }
    }
}

TEST_CASE("grid convergence: halving h, quartering dt") {
    ProblemSpec p = heat_sin();
    const Expression ref = Expression::parse("exp(-(1 - t))*sin(x1)", 1, false);

    // Max error over the t = 0 layer measured at grid nodes (no interpolation).
    auto max_error = [&](int nx, int nt) {
        FdGrid grid{-M_PI, M_PI, nx, nt, FdBoundary::dirichlet_reference};
        const FdSolution sol = fd_solve(p, grid, &ref);
        const int last = static_cast<int>(sol.times.size()) - 1;
        double err = 0.0;
        for (std::size_t i = 0; i < sol.x.size(); ++i) {
            const double exact = std::exp(-1.0) * std::sin(sol.x[i]);
            err = std::max(err, std::fabs(sol.at(last, static_cast<int>(i)) - exact));
        }
        return err;
    };

    const double coarse = max_error(49, 2500);
    const double fine = max_error(99, 10000);
    CHECK(coarse / fine >= 3.0);
}

TEST_CASE("fd_compare pass/fail and probe range") {
    ProblemSpec p = heat_sin();
    const Expression ref = Expression::parse("exp(-(1 - t))*sin(x1)", 1, false);
    FdGrid grid{-M_PI, M_PI, 100, 7000, FdBoundary::dirichlet_reference};
    const FdSolution sol = fd_solve(p, grid, &ref);

    Estimate close;
    close.value = std::exp(-1.0) * std::sin(0.5);
    close.std_error = 1e-3;
    Estimate far;
    far.value = close.value + 1.0;
    far.std_error = 1e-3;
    std::vector<FdProbe> probes = {{0.0, 0.5, close}, {0.0, 0.5, far}};
    const FdCompareReport report = fd_compare(sol, probes);
    CHECK(report.rows[0].pass);
    CHECK_FALSE(report.rows[1].pass);
    CHECK_FALSE(report.pass);

    CHECK_THROWS_AS(sol.value_at(0.0, 10.0), ProbeOutOfRange);
    CHECK_THROWS_AS(sol.value_at(5.0, 0.0), ProbeOutOfRange);
}

TEST_CASE("csv export shape") {
    ProblemSpec p = heat_sin();
    FdGrid grid{-1.0, 1.0, 5, 800, FdBoundary::dirichlet_g};
    const FdSolution sol = fd_solve(p, grid);
    std::ostringstream os;
    sol.write_csv(os);
    const std::string text = os.str();
    CHECK(text.rfind("t,x,u\n", 0) == 0);
    const std::size_t lines = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    CHECK(lines == 1 + sol.times.size() * sol.x.size());
}

TEST_CASE("fd_solve rejects d > 1") {
    const CatalogEntry* entry = find_catalog_entry("heat_quadratic");
    REQUIRE(entry != nullptr);
    FdGrid grid;
    CHECK_THROWS_AS(fd_solve(entry->problem, grid), Error);
}
