#include "sfpe/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace sfpe {

double FdSolution::value_at(double t, double xq) const {
    const double t_hi = times.front();
    const double t_lo = times.back();
    if (t < t_lo - 1e-12 || t > t_hi + 1e-12) {
        throw ProbeOutOfRange("probe t = " + std::to_string(t) + " outside [" +
                              std::to_string(t_lo) + ", " + std::to_string(t_hi) + "]");
    }
    if (xq < x.front() - 1e-12 || xq > x.back() + 1e-12) {
        throw ProbeOutOfRange("probe x = " + std::to_string(xq) + " outside [" +
                              std::to_string(x.front()) + ", " + std::to_string(x.back()) + "]");
    }

    // times descend from T; find the bracketing rows.
    const std::size_t n_rows = times.size();
    std::size_t row_hi = 0;
    while (row_hi + 1 < n_rows && times[row_hi + 1] >= t) ++row_hi;
    const std::size_t row_lo = std::min(row_hi + 1, n_rows - 1);
    const double t_up = times[row_hi];
    const double t_dn = times[row_lo];
    const double wt = (t_up == t_dn) ? 0.0 : (t_up - t) / (t_up - t_dn);

    const double h = x[1] - x[0];
    std::size_t col = 0;
    if (xq > x.front()) {
        col = std::min(x.size() - 2,
                       static_cast<std::size_t>(std::floor((xq - x.front()) / h)));
    }
    const double wx = std::clamp((xq - x[col]) / h, 0.0, 1.0);

    const double up = (1.0 - wx) * at(static_cast<int>(row_hi), static_cast<int>(col)) +
                      wx * at(static_cast<int>(row_hi), static_cast<int>(col + 1));
    const double dn = (1.0 - wx) * at(static_cast<int>(row_lo), static_cast<int>(col)) +
                      wx * at(static_cast<int>(row_lo), static_cast<int>(col + 1));
    return (1.0 - wt) * up + wt * dn;
}

void FdSolution::write_csv(std::ostream& os) const {
    os << "t,x,u\n";
    for (std::size_t r = 0; r < times.size(); ++r) {
        for (std::size_t c = 0; c < x.size(); ++c) {
            os << times[r] << ',' << x[c] << ',' << values[r * x.size() + c] << '\n';
        }
    }
}

FdSolution fd_solve(const ProblemSpec& p, const FdGrid& grid, const Expression* boundary_ref) {
    if (p.dynamics.d != 1) throw Error("fd_solve supports d = 1 only");
    if (grid.nx < 3) throw Error("FdGrid.nx must be >= 3");
    if (grid.nt < 1) throw Error("FdGrid.nt must be >= 1");
    if (!(grid.x_min < grid.x_max)) throw Error("FdGrid requires x_min < x_max");
    if (grid.boundary == FdBoundary::dirichlet_reference && boundary_ref == nullptr) {
        throw Error("dirichlet_reference boundary needs a reference expression");
    }

    const double T = p.horizon;
    const int nx = grid.nx;
    const int nt = grid.nt;
    const double h = (grid.x_max - grid.x_min) / (nx + 1);
    const double dt = T / nt;
    const int m = p.dynamics.m;

    std::vector<double> xs(static_cast<std::size_t>(nx));
    for (int i = 0; i < nx; ++i) xs[static_cast<std::size_t>(i)] = grid.x_min + (i + 1) * h;

    // Stability audit: sigma^2 sampled over the grid at a few times, plus the
    // explicit-nonlinearity cap L dt <= 0.1.
    std::vector<double> sigma_row(static_cast<std::size_t>(m));
    double sigma2_max = 0.0;
    for (double t : {0.0, 0.5 * T, T}) {
        for (int i = -1; i <= nx; ++i) {
            const double xi = grid.x_min + (i + 1) * h;
            std::span<const double> xspan(&xi, 1);
            p.dynamics.eval_sigma(t, xspan, sigma_row);
            double s2 = 0.0;
            for (double s : sigma_row) s2 += s * s;
            sigma2_max = std::max(sigma2_max, s2);
        }
    }
    const double cfl = sigma2_max * dt / (h * h);
    const double l_dt = p.lipschitz_L * dt;
    if (cfl > 0.45 || l_dt > 0.1) {
        const long nt_cfl =
            static_cast<long>(std::ceil(T * sigma2_max / (0.45 * h * h)));
        const long nt_lip = static_cast<long>(std::ceil(10.0 * p.lipschitz_L * T));
        const long required = std::max({nt_cfl, nt_lip, static_cast<long>(1)});
        throw CflViolation("explicit scheme refused: ratio " + std::to_string(cfl) +
                               " > 0.45 or L*dt " + std::to_string(l_dt) +
                               " > 0.1; need nt >= " + std::to_string(required),
                           required);
    }

    FdSolution sol;
    sol.cfl_ratio = cfl;
    sol.x = xs;
    sol.times.resize(static_cast<std::size_t>(nt) + 1);
    sol.values.resize((static_cast<std::size_t>(nt) + 1) * nx);

    for (int i = 0; i < nx; ++i) {
        std::span<const double> xspan(&xs[static_cast<std::size_t>(i)], 1);
        sol.values[static_cast<std::size_t>(i)] = p.g.evaluate(Bindings(T, xspan));
    }
    sol.times[0] = T;

    auto boundary_value = [&](double t, double xb, double u1, double u2) -> double {
        switch (grid.boundary) {
            case FdBoundary::dirichlet_g: {
                std::span<const double> xspan(&xb, 1);
                return p.g.evaluate(Bindings(T, xspan));
            }
            case FdBoundary::dirichlet_reference: {
                std::span<const double> xspan(&xb, 1);
                return boundary_ref->evaluate(Bindings(t, xspan));
            }
            case FdBoundary::extrapolate_linear:
                return 2.0 * u1 - u2;
        }
        return 0.0;
    };

    std::vector<double> current(sol.values.begin(), sol.values.begin() + nx);
    std::vector<double> next(static_cast<std::size_t>(nx));
    for (int k = 0; k < nt; ++k) {
        const double t = T - k * dt;  // time of the known layer
        const double left = boundary_value(t, grid.x_min, current[0], current[1]);
        const double right = boundary_value(t, grid.x_max, current[static_cast<std::size_t>(nx) - 1],
                                            current[static_cast<std::size_t>(nx) - 2]);
        for (int i = 0; i < nx; ++i) {
            const double u = current[static_cast<std::size_t>(i)];
            const double um = (i == 0) ? left : current[static_cast<std::size_t>(i) - 1];
            const double up = (i == nx - 1) ? right : current[static_cast<std::size_t>(i) + 1];
            const double xi = xs[static_cast<std::size_t>(i)];
            std::span<const double> xspan(&xi, 1);

            p.dynamics.eval_sigma(t, xspan, sigma_row);
            double a = 0.0;
            for (double s : sigma_row) a += s * s;
            double mu = p.dynamics.mu[0].evaluate(Bindings(t, xspan));
            const double uxx = (up - 2.0 * u + um) / (h * h);
            const double ux = (up - um) / (2.0 * h);
            const double reaction = p.f.evaluate(Bindings(t, xspan, u));

            // Terminal-value problem: du/dt = -(1/2 a uxx + mu ux + f).
            const double value = u + dt * (0.5 * a * uxx + mu * ux + reaction);
            if (!std::isfinite(value)) {
                throw NonFiniteError("fd_solve produced a non-finite value at step " +
                                         std::to_string(k),
                                     k);
            }
            next[static_cast<std::size_t>(i)] = value;
        }
        std::copy(next.begin(), next.end(),
                  sol.values.begin() + (static_cast<std::size_t>(k) + 1) * nx);
        sol.times[static_cast<std::size_t>(k) + 1] = T - (k + 1) * dt;
        current.swap(next);
    }
    // Land exactly on zero despite dt rounding.
    sol.times.back() = 0.0;
    return sol;
}

FdCompareReport fd_compare(const FdSolution& sol, std::span<const FdProbe> probes, double fd_tol) {
    if (probes.empty()) throw Error("fd_compare requires probes");
    FdCompareReport report;
    report.fd_tol = fd_tol;
    report.pass = true;
    for (const FdProbe& probe : probes) {
        FdCompareReport::Row row;
        row.probe = probe;
        row.fd_value = sol.value_at(probe.t, probe.x);
        row.abs_diff = std::fabs(row.fd_value - probe.mc.value);
        const double se = std::isfinite(probe.mc.std_error) ? probe.mc.std_error : 0.0;
        row.pass = row.abs_diff <= 3.0 * se + fd_tol;
        report.pass = report.pass && row.pass;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace sfpe
