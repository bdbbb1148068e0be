#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sfpe/solver.hpp"

namespace sfpe {

enum class FdBoundary {
    dirichlet_g,          // boundary frozen at g(x_boundary)
    dirichlet_reference,  // boundary follows a supplied reference expression in (t, x)
    extrapolate_linear,   // linear extrapolation from the two nearest interior nodes
};

struct FdGrid {
    double x_min = -1.0;
    double x_max = 1.0;
    int nx = 100;  // interior points
    int nt = 100;  // time steps
    FdBoundary boundary = FdBoundary::dirichlet_g;
};

/// Space-time table of the explicit backward march, row 0 at t = T.
struct FdSolution {
    std::vector<double> times;   // descending from T to 0, nt+1 entries
    std::vector<double> x;       // interior nodes, nx entries
    std::vector<double> values;  // (nt+1) x nx row-major
    double cfl_ratio = 0.0;
    std::string scheme = "explicit_central";

    double at(int row, int col) const {
        return values[static_cast<std::size_t>(row) * x.size() + static_cast<std::size_t>(col)];
    }
    /// Bilinear interpolation inside the space-time box; ProbeOutOfRange outside.
    double value_at(double t, double xq) const;
    /// CSV rows t,x,u.
    void write_csv(std::ostream& os) const;
};

/// Explicit central-difference march for the d = 1 terminal-value problem,
/// f handled explicitly. Refuses configurations violating the stability caps
/// max(sigma^2) dt / h^2 <= 0.45 and L dt <= 0.1 (CflViolation reports the
/// required nt). `boundary_ref` is consulted only for dirichlet_reference.
FdSolution fd_solve(const ProblemSpec& p, const FdGrid& grid,
                    const Expression* boundary_ref = nullptr);

struct FdProbe {
    double t = 0.0;
    double x = 0.0;
    Estimate mc;
};

struct FdCompareReport {
    struct Row {
        FdProbe probe;
        double fd_value = 0.0;
        double abs_diff = 0.0;
        bool pass = false;
    };
    std::vector<Row> rows;
    double fd_tol = 0.0;
    bool pass = false;
};

/// |FD - MC| <= 3 SE + fd_tol per probe: the executable u = v correspondence.
FdCompareReport fd_compare(const FdSolution& sol, std::span<const FdProbe> probes,
                           double fd_tol = 2e-2);

}  // namespace sfpe
