#include "sfpe/run.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sfpe/digest.hpp"
#include "sfpe/problem_io.hpp"

namespace sfpe {

namespace {

using nlohmann::json;

json point_json(const SamplePoint& p) {
    return json{{"t", p.t}, {"x", p.x}};
}

std::string probe_x_repr(const std::vector<double>& x) {
    std::ostringstream os;
    os.precision(12);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i) os << ';';
        os << x[i];
    }
    return os.str();
}

std::string now_string() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&tt, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm_utc);
    return buf;
}

std::string environment_note() {
    std::ostringstream os;
    os << "compiler " << __VERSION__;
#if defined(__linux__)
    os << ", linux";
#endif
    return os.str();
}

json estimate_json(const std::string& problem_id, const std::string& method, const json& config,
                   const SamplePoint& probe, const Estimate& est, double wall_ms) {
    json j;
    j["problem_id"] = problem_id;
    j["method"] = method;
    j["config"] = config;
    j["t"] = probe.t;
    j["x"] = probe.x;
    j["value"] = est.value;
    if (std::isfinite(est.std_error)) {
        j["std_error"] = est.std_error;
    } else {
        j["std_error"] = nullptr;
    }
    j["work"] = est.work;
    j["wall_time_ms"] = wall_ms;
    return j;
}

json picard_config_json(const PicardConfig& c) {
    return json{{"method", "picard"},
                {"K", c.iterations},
                {"M", c.samples_per_level},
                {"sde_steps", c.sde_steps},
                {"init", c.init == PicardConfig::Init::zero ? "zero" : "terminal_g"},
                {"seed", c.seed},
                {"quadrature", c.quadrature == TimeQuadrature::deterministic_midpoint
                                   ? "deterministic_midpoint"
                                   : "single_sample"},
                {"work_budget", c.work_budget}};
}

json mlp_config_json(const MlpConfig& c) {
    return json{{"method", "mlp"},        {"n", c.levels},
                {"M", c.base_samples},    {"sde_steps", c.sde_steps},
                {"seed", c.seed},         {"replications", c.replications},
                {"work_budget", c.work_budget}};
}

void persist_record(RunRecord& record, const std::optional<std::filesystem::path>& out_dir) {
    if (!out_dir) return;
    const std::filesystem::path dir = *out_dir / record.run_id;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "record.json");
    if (!out) throw Error("cannot write " + (dir / "record.json").string());
    out << record.to_json().dump(2) << '\n';
    record.stored_at = dir;
}

RunRecord make_record(const CatalogEntry& entry, const std::string& kind, const json& config,
                      bool forced) {
    RunRecord record;
    record.timestamp = now_string();
    record.problem_id = entry.id;
    record.problem_hash = sha1_hex(canonical_problem_text(entry));
    record.forced = forced;
    record.config = config;
    record.environment = environment_note();
    record.run_id = entry.id + "-" + kind + "-" + record.problem_hash.substr(0, 8) + "-" +
                    record.timestamp;
    record.results = json::array();
    return record;
}

}  // namespace

json VerifyReport::to_json() const {
    json j;
    j["all_pass"] = all_pass;
    json items_json = json::array();
    for (const Item& item : items) {
        json e;
        e["check"] = std::string(check_name(item.check));
        e["pass"] = item.pass;
        e["details"] = item.details;
        items_json.push_back(e);
    }
    j["checks"] = items_json;
    return j;
}

std::vector<std::string> VerifyReport::failed_names() const {
    std::vector<std::string> out;
    for (const Item& item : items) {
        if (!item.pass) out.emplace_back(check_name(item.check));
    }
    return out;
}

std::vector<SamplePoint> verification_grid(const ProblemSpec& p, const VerifyOptions& opt) {
    const int d = p.dynamics.d;
    const std::vector<double> times = {0.0, 0.5 * p.horizon, p.horizon};
    std::vector<double> radii = {0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0};
    radii.push_back(opt.radius);

    std::vector<std::vector<double>> directions;
    if (d == 1) {
        directions.push_back({1.0});
        directions.push_back({-1.0});
    } else {
        RngStream stream(opt.seed);
        for (int k = 0; k < opt.directions; ++k) {
            std::vector<double> dir(static_cast<std::size_t>(d));
            stream.branch(0, static_cast<std::uint64_t>(k)).fill_normals(0, dir);
            double norm = 0.0;
            for (double c : dir) norm += c * c;
            norm = std::sqrt(norm);
            if (norm == 0.0) norm = 1.0;
            for (double& c : dir) c /= norm;
            directions.push_back(std::move(dir));
        }
    }

    std::vector<SamplePoint> grid;
    for (double t : times) {
        for (double r : radii) {
            if (r == 0.0) {
                grid.push_back({t, std::vector<double>(static_cast<std::size_t>(d), 0.0)});
                continue;
            }
            for (const auto& dir : directions) {
                std::vector<double> x(static_cast<std::size_t>(d));
                for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = r * dir[static_cast<std::size_t>(i)];
                grid.push_back({t, std::move(x)});
            }
        }
    }
    return grid;
}

VerifyReport run_verify(const CatalogEntry& entry, const VerifyOptions& opt) {
    const ProblemSpec& p = entry.problem;
    const std::vector<SamplePoint> grid = verification_grid(p, opt);
    VerifyReport report;

    for (Check check : entry.profile) {
        VerifyReport::Item item;
        item.check = check;
        switch (check) {
            case Check::coercivity: {
                const CoercivityReport r = coercivity_check(p.dynamics, p.lipschitz_L, grid);
                item.pass = r.pass;
                item.details = {{"max_drift_violation", r.max_drift_violation},
                                {"worst_drift", point_json(r.worst_drift)},
                                {"max_sigma_violation", r.max_sigma_violation},
                                {"worst_sigma", point_json(r.worst_sigma)}};
                break;
            }
            case Check::lipschitz: {
                // Random (t, x, v, w) tuples inside the truncation radius.
                RngStream stream = RngStream(opt.seed).branch(1);
                std::vector<LipschitzProbePoint> tuples;
                const int n = 256;
                for (int k = 0; k < n; ++k) {
                    RngStream s = stream.path(static_cast<std::uint64_t>(k));
                    LipschitzProbePoint tuple;
                    tuple.t = p.horizon * s.uniform(0);
                    tuple.x.resize(static_cast<std::size_t>(p.dynamics.d));
                    for (int i = 0; i < p.dynamics.d; ++i) {
                        tuple.x[static_cast<std::size_t>(i)] =
                            opt.radius * (2.0 * s.uniform(1 + static_cast<std::uint64_t>(i)) - 1.0) /
                            std::sqrt(static_cast<double>(p.dynamics.d));
                    }
                    tuple.v = 5.0 * (2.0 * s.uniform(100) - 1.0);
                    tuple.w = 5.0 * (2.0 * s.uniform(101) - 1.0);
                    if (tuple.v == tuple.w) tuple.w += 0.5;
                    tuples.push_back(std::move(tuple));
                }
                const LipschitzReport r = lipschitz_probe(p.f, p.lipschitz_L, tuples);
                item.pass = r.pass;
                item.details = {{"max_quotient", r.max_quotient},
                                {"declared_L", r.declared_L},
                                {"worst", {{"t", r.worst.t},
                                           {"x", r.worst.x},
                                           {"v", r.worst.v},
                                           {"w", r.worst.w}}}};
                break;
            }
            case Check::supersolution: {
                const double tol = p.lyapunov.family == LyapunovFamily::user_expression
                                       ? 1e-4
                                       : opt.supersolution_tol;
                const GeneratorReport r = check_supersolution(p.lyapunov, p.dynamics, grid, tol);
                item.pass = r.pass;
                json params;
                std::string family;
                switch (p.lyapunov.family) {
                    case LyapunovFamily::polynomial:
                        family = "polynomial_q";
                        params = {{"q", p.lyapunov.q}};
                        break;
                    case LyapunovFamily::heat_kernel:
                        family = "heat_kernel";
                        params = {{"alpha", p.lyapunov.alpha}, {"epsilon", p.lyapunov.epsilon}};
                        break;
                    case LyapunovFamily::user_expression:
                        family = "user_expression";
                        params = {{"expr", p.lyapunov.expr->source()}};
                        break;
                }
                item.details = {{"family", family},
                                {"params", params},
                                {"max_violation", r.max_violation},
                                {"argmax", point_json(r.argmax)},
                                {"rho", p.lyapunov.rho},
                                {"points", r.points_checked},
                                {"tol", r.tol}};
                break;
            }
            case Check::growth_ratio: {
                const std::vector<double> radii = {1.0, 2.0, 4.0, 8.0, 16.0};
                const GrowthRatioReport r =
                    check_growth_ratio(p.f, p.g, p.lyapunov, p.horizon, radii, opt.shell_samples,
                                       RngStream(opt.seed).branch(2), opt.growth_tol);
                item.pass = r.pass;
                item.details = {{"radii", r.radii},
                                {"shell_sup", r.shell_sup},
                                {"tail_nonincreasing", r.tail_nonincreasing},
                                {"last_sup", r.last_sup},
                                {"tol", r.tol}};
                break;
            }
            case Check::heat_type: {
                if (p.growth.kind != GrowthKind::gaussian) {
                    item.pass = false;
                    item.details = {{"reason", "heat_type applies to gaussian growth only"}};
                    break;
                }
                if (!p.dynamics.sigma_is_constant() || !p.dynamics.mu_is_zero()) {
                    item.pass = false;
                    item.details = {
                        {"reason", "heat_type requires constant diffusion and zero drift"}};
                    break;
                }
                const double c = constant_sigma_spectral_bound(p.dynamics);
                const double a = p.growth.param;
                item.pass = admissible_heat_type(a, c, p.horizon);
                item.details = {{"a", a},
                                {"c", c},
                                {"T", p.horizon},
                                {"limit", 1.0 / (2.0 * a * p.horizon)},
                                {"max_admissible_T", max_admissible_horizon(a, c)}};
                break;
            }
        }
        report.all_pass = report.all_pass && item.pass;
        report.items.push_back(std::move(item));
    }
    return report;
}

RunRecord run_solve(const CatalogEntry& entry, const SolveOptions& opt) {
    const ProblemSpec& p = entry.problem;
    if (!opt.force) {
        const VerifyReport verify = run_verify(entry, opt.verify);
        if (!verify.all_pass) {
            std::string msg = "admissibility checks failed for '" + entry.id + "':";
            for (const std::string& name : verify.failed_names()) msg += " " + name;
            if (p.growth.kind == GrowthKind::gaussian && p.dynamics.sigma_is_constant() &&
                p.dynamics.mu_is_zero()) {
                const double c = constant_sigma_spectral_bound(p.dynamics);
                const double t_max = max_admissible_horizon(p.growth.param, c);
                if (std::isfinite(t_max) && p.horizon >= t_max) {
                    msg += " (maximal admissible horizon T < " + std::to_string(t_max) + ")";
                }
            }
            throw AdmissibilityFailure(msg, verify.failed_names());
        }
    }

    const std::vector<SamplePoint>& probes = opt.probes.empty() ? entry.probes : opt.probes;
    const ExecContext exec{opt.threads};
    const json config =
        opt.method == Method::picard ? picard_config_json(opt.picard) : mlp_config_json(opt.mlp);

    RunRecord record = make_record(entry, opt.method == Method::picard ? "picard" : "mlp", config,
                                   opt.force);
    for (const SamplePoint& probe : probes) {
        const auto start = std::chrono::steady_clock::now();
        json rj;
        if (opt.method == Method::picard) {
            const PicardRun run = picard_solve(p, opt.picard, probe.t, probe.x, exec);
            const double wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
            rj = estimate_json(entry.id, "picard", config, probe, run.result, wall_ms);
            rj["iterates"] = run.iterates;
            rj["iterate_se"] = run.iterate_se;
        } else {
            const Estimate est = mlp_estimate(p, opt.mlp, probe.t, probe.x, exec);
            const double wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
            rj = estimate_json(entry.id, "mlp", config, probe, est, wall_ms);
        }
        record.results.push_back(std::move(rj));
    }
    persist_record(record, opt.out_dir);
    return record;
}

StudyResult run_study(const CatalogEntry& entry, const StudyOptions& opt) {
    if (opt.sweep_M.empty() && opt.sweep_K_or_n.empty() && opt.sweep_sde_steps.empty()) {
        throw Error("run_study requires a non-empty sweep");
    }
    const ProblemSpec& p = entry.problem;
    const std::vector<SamplePoint>& probes = opt.probes.empty() ? entry.probes : opt.probes;
    const ExecContext exec{opt.threads};

    std::vector<int> Ms = opt.sweep_M;
    std::vector<int> Ks = opt.sweep_K_or_n;
    std::vector<int> steps = opt.sweep_sde_steps;
    if (Ms.empty()) Ms = {opt.method == Method::picard ? opt.picard.samples_per_level
                                                       : opt.mlp.base_samples};
    if (Ks.empty()) Ks = {opt.method == Method::picard ? opt.picard.iterations : opt.mlp.levels};
    if (steps.empty()) steps = {opt.method == Method::picard ? opt.picard.sde_steps
                                                             : opt.mlp.sde_steps};

    std::ostringstream csv;
    csv << "method,M,K_or_n,sde_steps,probe_t,probe_x_repr,value,std_error,"
           "abs_error_vs_reference,work,wall_ms\n";
    csv.precision(12);

    RunRecord record = make_record(
        entry, "study",
        json{{"method", opt.method == Method::picard ? "picard" : "mlp"},
             {"sweep_M", Ms},
             {"sweep_K_or_n", Ks},
             {"sweep_sde_steps", steps}},
        false);

    const std::string method_name = opt.method == Method::picard ? "picard" : "mlp";
    for (int M : Ms) {
        for (int K : Ks) {
            for (int sde_steps : steps) {
                for (const SamplePoint& probe : probes) {
                    const auto start = std::chrono::steady_clock::now();
                    Estimate est;
                    json config;
                    if (opt.method == Method::picard) {
                        PicardConfig cfg = opt.picard;
                        cfg.samples_per_level = M;
                        cfg.iterations = K;
                        cfg.sde_steps = sde_steps;
                        est = picard_solve(p, cfg, probe.t, probe.x, exec).result;
                        config = picard_config_json(cfg);
                    } else {
                        MlpConfig cfg = opt.mlp;
                        cfg.base_samples = M;
                        cfg.levels = K;
                        cfg.sde_steps = sde_steps;
                        est = mlp_estimate(p, cfg, probe.t, probe.x, exec);
                        config = mlp_config_json(cfg);
                    }
                    const double wall_ms = std::chrono::duration<double, std::milli>(
                                               std::chrono::steady_clock::now() - start)
                                               .count();
                    csv << method_name << ',' << M << ',' << K << ',' << sde_steps << ','
                        << probe.t << ',' << probe_x_repr(probe.x) << ',' << est.value << ',';
                    if (std::isfinite(est.std_error)) csv << est.std_error;
                    csv << ',';
                    if (entry.reference) {
                        const double ref = entry.reference->evaluate(Bindings(probe.t, probe.x));
                        csv << std::fabs(est.value - ref);
                    }
                    csv << ',' << est.work << ',' << wall_ms << '\n';
                    record.results.push_back(
                        estimate_json(entry.id, method_name, config, probe, est, wall_ms));
                }
            }
        }
    }

    StudyResult result;
    result.csv = csv.str();
    persist_record(record, opt.out_dir);
    if (record.stored_at) {
        std::ofstream out(*record.stored_at / "study.csv");
        out << result.csv;
    }
    result.record = std::move(record);
    return result;
}

OracleCompareResult run_oracle_compare(const CatalogEntry& entry, const OracleCompareOptions& opt) {
    const ProblemSpec& p = entry.problem;
    if (p.dynamics.d != 1) throw Error("oracle comparison requires d = 1");
    const std::vector<SamplePoint>& probes = opt.probes.empty() ? entry.probes : opt.probes;
    const ExecContext exec{opt.threads};

    FdGrid grid = opt.grid;
    const Expression* boundary_ref = entry.reference ? &*entry.reference : nullptr;
    if (opt.boundary) {
        grid.boundary = *opt.boundary;
    } else {
        grid.boundary = boundary_ref ? FdBoundary::dirichlet_reference
                                     : FdBoundary::extrapolate_linear;
    }
    if (grid.boundary == FdBoundary::dirichlet_reference && boundary_ref == nullptr) {
        grid.boundary = FdBoundary::extrapolate_linear;
    }
    const FdSolution sol = fd_solve(p, grid, boundary_ref);

    const json config = json{
        {"grid", {{"x_min", grid.x_min}, {"x_max", grid.x_max}, {"nx", grid.nx}, {"nt", grid.nt}}},
        {"mc", opt.method == Method::picard ? picard_config_json(opt.picard)
                                            : mlp_config_json(opt.mlp)},
        {"fd_tol", opt.fd_tol}};
    RunRecord record = make_record(entry, "oracle", config, false);

    std::vector<FdProbe> fd_probes;
    for (const SamplePoint& probe : probes) {
        const auto start = std::chrono::steady_clock::now();
        Estimate est;
        if (opt.method == Method::picard) {
            est = picard_solve(p, opt.picard, probe.t, probe.x, exec).result;
        } else {
            est = mlp_estimate(p, opt.mlp, probe.t, probe.x, exec);
        }
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
        record.results.push_back(estimate_json(
            entry.id, opt.method == Method::picard ? "picard" : "mlp", config, probe, est, wall_ms));
        fd_probes.push_back({probe.t, probe.x.at(0), est});
    }

    OracleCompareResult result;
    result.report = fd_compare(sol, fd_probes, opt.fd_tol);
    json compare = json::array();
    for (const auto& row : result.report.rows) {
        compare.push_back(json{{"t", row.probe.t},
                               {"x", row.probe.x},
                               {"fd", row.fd_value},
                               {"mc", row.probe.mc.value},
                               {"abs_diff", row.abs_diff},
                               {"pass", row.pass}});
    }
    record.config["comparison"] = compare;
    record.config["comparison_pass"] = result.report.pass;
    persist_record(record, opt.out_dir);
    if (record.stored_at) {
        std::ofstream out(*record.stored_at / "fd_solution.csv");
        sol.write_csv(out);
    }
    result.record = std::move(record);
    return result;
}

nlohmann::json RunRecord::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["timestamp"] = timestamp;
    j["problem_id"] = problem_id;
    j["problem_hash"] = problem_hash;
    j["forced"] = forced;
    j["config"] = config;
    j["results"] = results;
    j["environment"] = environment;
    return j;
}

}  // namespace sfpe
