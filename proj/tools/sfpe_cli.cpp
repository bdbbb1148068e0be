// Command-line front end: solve / study / verify / oracle-compare /
// catalog list|export / paths-dump over the built-in catalog or problem files.
//
// Exit codes: 0 success, 2 admissibility failure, 3 numerical failure,
// 4 configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sfpe/catalog.hpp"
#include "sfpe/problem_io.hpp"
#include "sfpe/run.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAdmissibility = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConfig = 4;

sfpe::CatalogEntry resolve_problem(const std::string& ref) {
    if (const sfpe::CatalogEntry* entry = sfpe::find_catalog_entry(ref)) {
        return *entry;
    }
    if (std::filesystem::exists(ref)) {
        return sfpe::load_problem(ref);
    }
    throw sfpe::SchemaError(ref, "neither a catalog id nor an existing file");
}

// "t:x1,x2,..." -> SamplePoint
sfpe::SamplePoint parse_probe(const std::string& text, int d) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw sfpe::Error("probe '" + text + "' must look like t:x1,x2,...");
    }
    sfpe::SamplePoint p;
    p.t = std::stod(text.substr(0, colon));
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos < rest.size()) {
        std::size_t next = rest.find(',', pos);
        if (next == std::string::npos) next = rest.size();
        p.x.push_back(std::stod(rest.substr(pos, next - pos)));
        pos = next + 1;
    }
    if (static_cast<int>(p.x.size()) != d) {
        throw sfpe::Error("probe '" + text + "' has " + std::to_string(p.x.size()) +
                          " coordinates, problem dimension is " + std::to_string(d));
    }
    return p;
}

std::vector<sfpe::SamplePoint> parse_probes(const std::vector<std::string>& texts, int d) {
    std::vector<sfpe::SamplePoint> out;
    for (const std::string& t : texts) out.push_back(parse_probe(t, d));
    return out;
}

void print_solve_table(const sfpe::RunRecord& record, std::FILE* out) {
    std::fprintf(out, "%-8s %-24s %14s %12s %12s %10s\n", "t", "x", "value", "std_error", "work",
                 "ms");
    for (const auto& r : record.results) {
        std::string xs;
        for (const auto& xi : r["x"]) {
            if (!xs.empty()) xs += ",";
            xs += std::to_string(xi.get<double>());
        }
        if (xs.size() > 24) xs = xs.substr(0, 21) + "...";
        const bool has_se = !r["std_error"].is_null();
        std::fprintf(out, "%-8.4g %-24s %14.8g %12s %12llu %10.1f\n", r["t"].get<double>(),
                     xs.c_str(), r["value"].get<double>(),
                     has_se ? std::to_string(r["std_error"].get<double>()).c_str() : "n/a",
                     static_cast<unsigned long long>(r["work"].get<std::uint64_t>()),
                     r["wall_time_ms"].get<double>());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte-Carlo solver for semilinear Kolmogorov PDEs via their "
                 "stochastic fixed-point equations"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir;
    bool force = false;
    std::string format = "json";
    app.add_option("--seed", seed, "Base seed for all randomness");
    app.add_option("--threads", threads, "Worker threads (results are thread-count invariant)");
    app.add_option("--out", out_dir, "Directory for run records and CSV output");
    app.add_flag("--force", force, "Run even if admissibility checks fail (recorded)");
    app.add_option("--format", format, "Report format: json or csv")
        ->check(CLI::IsMember({"json", "csv"}));

    // solve
    auto* solve = app.add_subcommand("solve", "Estimate the solution at probe points");
    std::string solve_problem;
    std::string solve_method = "picard";
    int solve_K = 4, solve_M = 32, solve_steps = 50, solve_n = 3, solve_reps = 16;
    double solve_budget = 1e8;
    bool solve_midpoint = false;
    std::string solve_init = "zero";
    std::vector<std::string> solve_probes;
    solve->add_option("problem", solve_problem, "Catalog id or problem file")->required();
    solve->add_option("--method", solve_method, "picard or mlp")
        ->check(CLI::IsMember({"picard", "mlp"}));
    solve->add_option("-K,--iterations", solve_K, "Picard iterations");
    solve->add_option("-M,--samples", solve_M, "Samples per level (both methods)");
    solve->add_option("-n,--levels", solve_n, "MLP level count");
    solve->add_option("--replications", solve_reps, "MLP outer replications");
    solve->add_option("--sde-steps", solve_steps, "Euler grid steps");
    solve->add_option("--budget", solve_budget, "Work budget (coefficient evaluations)");
    solve->add_option("--init", solve_init, "Picard initialization: zero or terminal_g")
        ->check(CLI::IsMember({"zero", "terminal_g"}));
    solve->add_flag("--midpoint", solve_midpoint,
                    "Deterministic midpoint time quadrature (sigma = 0 problems)");
    solve->add_option("--probe", solve_probes, "Probe point t:x1,x2,... (repeatable)");

    // study
    auto* study = app.add_subcommand("study", "Error-vs-work sweep, CSV output");
    std::string study_problem;
    std::string study_method = "picard";
    std::vector<int> study_M, study_K, study_steps;
    std::vector<std::string> study_probes;
    int study_reps = 16;
    double study_budget = 1e8;
    study->add_option("problem", study_problem)->required();
    study->add_option("--method", study_method)->check(CLI::IsMember({"picard", "mlp"}));
    study->add_option("--sweep-M", study_M, "Sample counts to sweep")->delimiter(',');
    study->add_option("--sweep-K", study_K, "Iteration/level counts to sweep")->delimiter(',');
    study->add_option("--sweep-steps", study_steps, "Euler step counts to sweep")->delimiter(',');
    study->add_option("--replications", study_reps, "MLP outer replications");
    study->add_option("--budget", study_budget, "Work budget per estimate");
    study->add_option("--probe", study_probes, "Probe point t:x1,... (repeatable)");

    // verify
    auto* verify = app.add_subcommand("verify", "Run the admissibility checks");
    std::string verify_problem;
    verify->add_option("problem", verify_problem)->required();

    // oracle-compare
    auto* oracle = app.add_subcommand("oracle-compare",
                                      "d=1 finite-difference oracle vs the MC solver");
    std::string oracle_problem;
    std::string oracle_method = "mlp";
    double oracle_xmin = -4.0, oracle_xmax = 4.0, oracle_tol = 2e-2;
    int oracle_nx = 200, oracle_nt = 0;
    int oracle_K = 4, oracle_M = 8, oracle_n = 4, oracle_steps = 50, oracle_reps = 16;
    std::vector<std::string> oracle_probes;
    oracle->add_option("problem", oracle_problem)->required();
    oracle->add_option("--method", oracle_method)->check(CLI::IsMember({"picard", "mlp"}));
    oracle->add_option("--x-min", oracle_xmin);
    oracle->add_option("--x-max", oracle_xmax);
    oracle->add_option("--nx", oracle_nx, "Interior grid points");
    oracle->add_option("--nt", oracle_nt, "Time steps (0: choose from the CFL cap)");
    oracle->add_option("--fd-tol", oracle_tol, "Comparison tolerance added to 3*SE");
    oracle->add_option("-K,--iterations", oracle_K);
    oracle->add_option("-M,--samples", oracle_M);
    oracle->add_option("-n,--levels", oracle_n);
    oracle->add_option("--replications", oracle_reps);
    oracle->add_option("--sde-steps", oracle_steps);
    oracle->add_option("--probe", oracle_probes, "Probe point t:x (repeatable)");

    // catalog
    auto* catalog = app.add_subcommand("catalog", "List or export the built-in problems");
    auto* catalog_list = catalog->add_subcommand("list", "List catalog ids");
    auto* catalog_export = catalog->add_subcommand("export", "Write each entry as a problem file");
    catalog->require_subcommand(1);

    // paths-dump
    auto* paths = app.add_subcommand("paths-dump", "Simulate raw SDE paths and dump CSV");
    std::string paths_problem;
    int paths_count = 10, paths_steps = 100;
    std::vector<double> paths_x0;
    paths->add_option("problem", paths_problem)->required();
    paths->add_option("--paths", paths_count, "Number of paths");
    paths->add_option("--sde-steps", paths_steps, "Grid steps");
    paths->add_option("--x0", paths_x0, "Initial state (default: origin)")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        std::optional<std::filesystem::path> out;
        if (!out_dir.empty()) out = out_dir;

        if (solve->parsed()) {
            sfpe::CatalogEntry entry = resolve_problem(solve_problem);
            sfpe::SolveOptions opt;
            opt.method = solve_method == "picard" ? sfpe::Method::picard : sfpe::Method::mlp;
            opt.picard.iterations = solve_K;
            opt.picard.samples_per_level = solve_M;
            opt.picard.sde_steps = solve_steps;
            opt.picard.seed = seed;
            opt.picard.work_budget = solve_budget;
            opt.picard.init = solve_init == "zero" ? sfpe::PicardConfig::Init::zero
                                                   : sfpe::PicardConfig::Init::terminal_g;
            if (solve_midpoint) {
                opt.picard.quadrature = sfpe::TimeQuadrature::deterministic_midpoint;
            }
            opt.mlp.levels = solve_n;
            opt.mlp.base_samples = solve_M;
            opt.mlp.sde_steps = solve_steps;
            opt.mlp.seed = seed;
            opt.mlp.replications = solve_reps;
            opt.mlp.work_budget = solve_budget;
            opt.probes = parse_probes(solve_probes, entry.problem.dynamics.d);
            opt.force = force;
            opt.threads = threads;
            opt.verify.seed = seed == 0 ? 1 : seed;
            opt.out_dir = out;
            const sfpe::RunRecord record = sfpe::run_solve(entry, opt);
            // the table always prints; JSON mode keeps stdout machine-readable
            print_solve_table(record, format == "json" ? stderr : stdout);
            if (format == "json") {
                std::cout << record.to_json().dump(2) << '\n';
            }
            if (record.stored_at) {
                std::cerr << "record: " << (*record.stored_at / "record.json").string() << '\n';
            }
            return kExitOk;
        }

        if (study->parsed()) {
            sfpe::CatalogEntry entry = resolve_problem(study_problem);
            sfpe::StudyOptions opt;
            opt.method = study_method == "picard" ? sfpe::Method::picard : sfpe::Method::mlp;
            opt.sweep_M = study_M;
            opt.sweep_K_or_n = study_K;
            opt.sweep_sde_steps = study_steps;
            opt.picard.seed = seed;
            opt.picard.work_budget = study_budget;
            opt.mlp.seed = seed;
            opt.mlp.replications = study_reps;
            opt.mlp.work_budget = study_budget;
            opt.probes = parse_probes(study_probes, entry.problem.dynamics.d);
            opt.threads = threads;
            opt.out_dir = out;
            const sfpe::StudyResult result = sfpe::run_study(entry, opt);
            std::cout << result.csv;
            return kExitOk;
        }

        if (verify->parsed()) {
            sfpe::CatalogEntry entry = resolve_problem(verify_problem);
            sfpe::VerifyOptions vopt;
            vopt.seed = seed == 0 ? 1 : seed;
            const sfpe::VerifyReport report = sfpe::run_verify(entry, vopt);
            std::cout << report.to_json().dump(2) << '\n';
            return report.all_pass ? kExitOk : kExitAdmissibility;
        }

        if (oracle->parsed()) {
            sfpe::CatalogEntry entry = resolve_problem(oracle_problem);
            sfpe::OracleCompareOptions opt;
            opt.method = oracle_method == "picard" ? sfpe::Method::picard : sfpe::Method::mlp;
            opt.grid.x_min = oracle_xmin;
            opt.grid.x_max = oracle_xmax;
            opt.grid.nx = oracle_nx;
            if (oracle_nt <= 0) {
                // Derive nt from the CFL cap with a 10% margin.
                const double h = (oracle_xmax - oracle_xmin) / (oracle_nx + 1);
                double sigma2 = 2.0;
                if (entry.problem.dynamics.sigma_is_constant()) {
                    sigma2 = sfpe::constant_sigma_spectral_bound(entry.problem.dynamics);
                }
                oracle_nt = static_cast<int>(
                    std::ceil(entry.problem.horizon * std::max(sigma2, 1e-6) / (0.40 * h * h)));
                oracle_nt = std::max(oracle_nt,
                                     static_cast<int>(std::ceil(10.0 * entry.problem.lipschitz_L *
                                                                entry.problem.horizon)) +
                                         1);
            }
            opt.grid.nt = oracle_nt;
            opt.fd_tol = oracle_tol;
            opt.picard.iterations = oracle_K;
            opt.picard.samples_per_level = oracle_M;
            opt.picard.sde_steps = oracle_steps;
            opt.picard.seed = seed;
            opt.mlp.levels = oracle_n;
            opt.mlp.base_samples = oracle_M;
            opt.mlp.sde_steps = oracle_steps;
            opt.mlp.seed = seed;
            opt.mlp.replications = oracle_reps;
            opt.probes = parse_probes(oracle_probes, 1);
            opt.threads = threads;
            opt.out_dir = out;
            const sfpe::OracleCompareResult result = sfpe::run_oracle_compare(entry, opt);
            for (const auto& row : result.report.rows) {
                std::printf("probe t=%-8.4g x=%-10.5g fd=%-12.6g mc=%-12.6g |diff|=%-10.4g %s\n",
                            row.probe.t, row.probe.x, row.fd_value, row.probe.mc.value,
                            row.abs_diff, row.pass ? "PASS" : "FAIL");
            }
            std::printf("oracle-compare: %s\n", result.report.pass ? "PASS" : "FAIL");
            return result.report.pass ? kExitOk : kExitNumerical;
        }

        if (catalog->parsed()) {
            if (catalog_list->parsed()) {
                for (const sfpe::CatalogEntry& e : sfpe::builtin_catalog()) {
                    std::printf("%-20s d=%-3d T=%-6g %s\n", e.id.c_str(), e.problem.dynamics.d,
                                e.problem.horizon,
                                e.reference ? "reference: closed form" : "reference: none");
                }
            } else if (catalog_export->parsed()) {
                const std::filesystem::path dir = out_dir.empty() ? "catalog" : out_dir;
                std::filesystem::create_directories(dir);
                for (const sfpe::CatalogEntry& e : sfpe::builtin_catalog()) {
                    const auto path = dir / (e.id + ".json");
                    sfpe::save_problem(e, path);
                    std::cout << path.string() << '\n';
                }
            }
            return kExitOk;
        }

        if (paths->parsed()) {
            sfpe::CatalogEntry entry = resolve_problem(paths_problem);
            const sfpe::ProblemSpec& p = entry.problem;
            sfpe::PathPlan plan;
            plan.t_start = 0.0;
            plan.t_end = p.horizon;
            plan.steps = paths_steps;
            std::ostream* os = &std::cout;
            std::ofstream file;
            if (out) {
                std::filesystem::create_directories(*out);
                file.open(*out / (entry.id + "_paths.csv"));
                os = &file;
            }
            *os << "path_id,step,t";
            for (int i = 1; i <= p.dynamics.d; ++i) *os << ",x" << i;
            *os << '\n';
            std::vector<double> x0(static_cast<std::size_t>(p.dynamics.d), 0.0);
            if (!paths_x0.empty()) {
                if (static_cast<int>(paths_x0.size()) != p.dynamics.d) {
                    throw sfpe::Error("--x0 needs exactly d = " +
                                      std::to_string(p.dynamics.d) + " coordinates");
                }
                x0 = paths_x0;
            }
            const sfpe::RngStream root(seed);
            for (int pid = 0; pid < paths_count; ++pid) {
                const sfpe::PathResult path = sfpe::simulate_path(
                    x0, plan, p.dynamics, root.path(static_cast<std::uint64_t>(pid)));
                for (std::size_t k = 0; k < path.times.size(); ++k) {
                    *os << pid << ',' << k << ',' << path.times[k];
                    for (double xi : path.state(k)) *os << ',' << xi;
                    *os << '\n';
                }
            }
            return kExitOk;
        }
    } catch (const sfpe::AdmissibilityFailure& e) {
        std::cerr << "admissibility failure: " << e.what() << '\n';
        return kExitAdmissibility;
    } catch (const sfpe::SchemaError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const sfpe::BudgetExceeded& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const sfpe::CflViolation& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const sfpe::NonFiniteError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const sfpe::DomainError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const sfpe::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitOk;
}
