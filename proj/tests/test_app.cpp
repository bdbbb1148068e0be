#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sfpe/digest.hpp"
#include "sfpe/problem_io.hpp"
#include "sfpe/run.hpp"

using namespace sfpe;
using nlohmann::json;

namespace {

json minimal_problem_json() {
    return json{{"id", "toy"},
                {"dimension_d", 1},
                {"noise_m", 1},
                {"horizon", 1.0},
                {"mu", {"0"}},
                {"sigma", {{"1"}}},
                {"f", "0"},
                {"g", "x1^2"},
                {"lipschitz_L", 1.0},
                {"growth", {{"kind", "polynomial"}, {"param", 2.0}}},
                {"lyapunov", {{"family", "polynomial_q"}, {"q", 4.0}, {"rho", 6.0}}}};
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "sfpe_test_app";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("sha1 known answers") {
    CHECK(sha1_hex("") == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
    CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
    CHECK(sha1_hex("The quick brown fox jumps over the lazy dog") ==
          "2fd4e1c67a2d28fced849ee1bb76e7391b93eb12");
}

TEST_CASE("problem files parse and round-trip") {
    const CatalogEntry entry = problem_from_json(minimal_problem_json());
    CHECK(entry.id == "toy");
    CHECK(entry.problem.dynamics.d == 1);
    CHECK(entry.problem.lyapunov.q == 4.0);
    CHECK(entry.probes.size() == 5);

    const json back = problem_to_json(entry);
    const CatalogEntry again = problem_from_json(back);
    CHECK(canonical_problem_text(entry) == canonical_problem_text(again));
}

TEST_CASE("schema errors") {
    json missing = minimal_problem_json();
    missing.erase("horizon");
    try {
        problem_from_json(missing);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.field() == "horizon");
    }

    json bad_shape = minimal_problem_json();
    bad_shape["dimension_d"] = 2;
    bad_shape["mu"] = {"0", "0"};  // sigma stays 1 row -> shape error
    CHECK_THROWS_AS(problem_from_json(bad_shape), SchemaError);

    json unknown = minimal_problem_json();
    unknown["horizons"] = 2.0;
    CHECK_THROWS_AS(problem_from_json(unknown), SchemaError);

    json nested_unknown = minimal_problem_json();
    nested_unknown["growth"]["extra"] = 1;
    CHECK_THROWS_AS(problem_from_json(nested_unknown), SchemaError);

    json bad_expr = minimal_problem_json();
    bad_expr["g"] = "x1 +";
    CHECK_THROWS_AS(problem_from_json(bad_expr), SchemaError);

    json v_in_g = minimal_problem_json();
    v_in_g["g"] = "v";
    CHECK_THROWS_AS(problem_from_json(v_in_g), SchemaError);
}

TEST_CASE("user-expression Lyapunov block works end to end") {
    json j = minimal_problem_json();
    j["id"] = "user_lyapunov";
    j["lyapunov"] = {{"family", "user_expression"}, {"expr", "(1 + x1^2)^2"}, {"rho", 6.0}};
    const CatalogEntry entry = problem_from_json(j);
    CHECK(entry.problem.lyapunov.family == LyapunovFamily::user_expression);

    const VerifyReport report = run_verify(entry);
    for (const auto& item : report.items) {
        CAPTURE(check_name(item.check));
        CAPTURE(item.details.dump());
        CHECK(item.pass);
    }

    // round-trips through the file format
    const CatalogEntry again = problem_from_json(problem_to_json(entry));
    CHECK(canonical_problem_text(entry) == canonical_problem_text(again));
}

TEST_CASE("catalog export and reload") {
    const auto dir = temp_dir();
    for (const CatalogEntry& e : builtin_catalog()) {
        const auto path = dir / (e.id + ".json");
        save_problem(e, path);
        const CatalogEntry loaded = load_problem(path);
        CHECK(loaded.id == e.id);
        CHECK(canonical_problem_text(loaded) == canonical_problem_text(e));
    }
}

TEST_CASE("run_verify on the catalog") {
    for (const CatalogEntry& e : builtin_catalog()) {
        const VerifyReport report = run_verify(e);
        CAPTURE(e.id);
        for (const auto& item : report.items) {
            CAPTURE(check_name(item.check));
            CAPTURE(item.details.dump());
            CHECK(item.pass);
        }
    }
}

TEST_CASE("mutated entries fail the right checks") {
    // g = exp(|x|^2) cannot sit under a polynomial Lyapunov family.
    CatalogEntry entry = *find_catalog_entry("allen_cahn_trunc");
    entry.problem.g = Expression::parse("exp(x1^2)", 1, false);
    const VerifyReport report = run_verify(entry);
    bool growth_failed = false;
    for (const auto& item : report.items) {
        if (item.check == Check::growth_ratio) growth_failed = !item.pass;
    }
    CHECK(growth_failed);

    // declared coefficient constant too small for GBM on |x| <= 10
    CatalogEntry gbm = *find_catalog_entry("gbm_linear");
    gbm.problem.lipschitz_L = 0.05;
    gbm.problem.dynamics.lipschitz_L = 0.05;
    const VerifyReport gbm_report = run_verify(gbm);
    bool coercivity_failed = false;
    for (const auto& item : gbm_report.items) {
        if (item.check == Check::coercivity) coercivity_failed = !item.pass;
    }
    CHECK(coercivity_failed);
}

TEST_CASE("catalog self-test: references satisfy the fixed-point equation") {
    for (const CatalogEntry& e : builtin_catalog()) {
        if (!e.reference) continue;
        const Expression& ref = *e.reference;
        auto v_ref = [&ref](double t, std::span<const double> x) {
            return ref.evaluate(Bindings(t, x));
        };
        const ResidualReport report =
            fixed_point_residual(v_ref, e.problem, e.probes, 4000, 200, RngStream(1234));
        CAPTURE(e.id);
        for (const auto& probe : report.probes) {
            CHECK(std::fabs(probe.residual) <= 3.0 * probe.std_error + 1e-2);
        }
    }
}

TEST_CASE("run_solve produces a reproducible record") {
    const CatalogEntry* entry = find_catalog_entry("deterministic_exp");
    REQUIRE(entry != nullptr);
    SolveOptions opt;
    opt.method = Method::picard;
    opt.picard.iterations = 6;
    opt.picard.samples_per_level = 1;
    opt.picard.sde_steps = 5000;
    opt.picard.quadrature = TimeQuadrature::deterministic_midpoint;
    opt.picard.seed = 99;

    const RunRecord a = run_solve(*entry, opt);
    const RunRecord b = run_solve(*entry, opt);
    REQUIRE(a.results.size() == b.results.size());
    for (std::size_t i = 0; i < a.results.size(); ++i) {
        CHECK(a.results[i]["value"].get<double>() == b.results[i]["value"].get<double>());
    }
    CHECK(a.problem_hash == b.problem_hash);

    // per-iteration values recorded per probe
    CHECK(a.results[0]["iterates"].size() == 6);
}

TEST_CASE("run_solve gate raises AdmissibilityFailure") {
    CatalogEntry entry = *find_catalog_entry("allen_cahn_trunc");
    entry.problem.g = Expression::parse("exp(x1^2)", 1, false);
    SolveOptions opt;
    opt.picard.iterations = 1;
    opt.picard.samples_per_level = 4;
    CHECK_THROWS_AS(run_solve(entry, opt), AdmissibilityFailure);
    opt.force = true;
    CHECK_NOTHROW(run_solve(entry, opt));
}

TEST_CASE("heat-type gate hard-fails with the maximal horizon") {
    CatalogEntry entry = *find_catalog_entry("heat_sin_1d");
    entry.problem.growth.param = 0.5;  // c = 2 >= 1/(2 a T) = 1
    entry.profile = default_profile(entry.problem);
    SolveOptions opt;
    opt.picard.iterations = 1;
    opt.picard.samples_per_level = 4;
    try {
        run_solve(entry, opt);
        FAIL("expected AdmissibilityFailure");
    } catch (const AdmissibilityFailure& e) {
        const std::string msg = e.what();
        CHECK(msg.find("heat_type") != std::string::npos);
        CHECK(msg.find("maximal admissible horizon") != std::string::npos);
    }
}

TEST_CASE("run_study CSV layout and SE scaling") {
    const CatalogEntry* entry = find_catalog_entry("heat_quadratic");
    REQUIRE(entry != nullptr);
    StudyOptions opt;
    opt.method = Method::picard;
    opt.sweep_M = {100, 1000, 10000};
    opt.picard.iterations = 1;
    opt.picard.seed = 5;
    opt.probes = {{0.0, std::vector<double>(10, 0.0)}};
    opt.threads = 2;
    const StudyResult result = run_study(*entry, opt);

    std::istringstream lines(result.csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header ==
          "method,M,K_or_n,sde_steps,probe_t,probe_x_repr,value,std_error,"
          "abs_error_vs_reference,work,wall_ms");

    // SE ~ M^{-1/2}: fit the log-log slope over the sweep.
    std::vector<double> ms, ses;
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        REQUIRE(fields.size() >= 10);
        ms.push_back(std::stod(fields[1]));
        ses.push_back(std::stod(fields[7]));
    }
    REQUIRE(ms.size() == 3);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        const double lx = std::log(ms[i]);
        const double ly = std::log(ses[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(ms.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= -0.6);
    CHECK(slope <= -0.4);
}

TEST_CASE("study requires a sweep and abs_error decays with K") {
    const CatalogEntry* entry = find_catalog_entry("deterministic_exp");
    REQUIRE(entry != nullptr);
    StudyOptions empty;
    CHECK_THROWS_AS(run_study(*entry, empty), Error);

    StudyOptions opt;
    opt.method = Method::picard;
    opt.sweep_K_or_n = {1, 2, 3, 4, 5};
    opt.picard.samples_per_level = 1;
    opt.picard.sde_steps = 2000;
    opt.picard.quadrature = TimeQuadrature::deterministic_midpoint;
    opt.probes = {{0.0, {0.0}}};
    const StudyResult result = run_study(*entry, opt);
    std::istringstream lines(result.csv);
    std::string line;
    std::getline(lines, line);
    std::vector<double> errs;
    while (std::getline(lines, line)) {
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        errs.push_back(std::stod(fields[8]));
    }
    REQUIRE(errs.size() == 5);
    for (std::size_t i = 1; i < errs.size(); ++i) CHECK(errs[i] < errs[i - 1]);
}

TEST_CASE("oracle compare requires d = 1") {
    const CatalogEntry* entry = find_catalog_entry("heat_quadratic");
    REQUIRE(entry != nullptr);
    OracleCompareOptions opt;
    CHECK_THROWS_AS(run_oracle_compare(*entry, opt), Error);
}

TEST_CASE("oracle compare on the sin heat problem") {
    const CatalogEntry* entry = find_catalog_entry("heat_sin_1d");
    REQUIRE(entry != nullptr);
    OracleCompareOptions opt;
    opt.method = Method::mlp;
    opt.grid = FdGrid{-M_PI, M_PI, 100, 7000};
    opt.mlp.levels = 1;
    opt.mlp.base_samples = 4000;
    opt.mlp.seed = 12;
    opt.threads = 2;
    const OracleCompareResult result = run_oracle_compare(*entry, opt);
    CHECK(result.report.pass);
}

TEST_CASE("records persist to disk") {
    const auto dir = temp_dir() / "records";
    std::filesystem::remove_all(dir);
    const CatalogEntry* entry = find_catalog_entry("deterministic_exp");
    SolveOptions opt;
    opt.picard.iterations = 3;
    opt.picard.samples_per_level = 1;
    opt.picard.sde_steps = 1000;
    opt.picard.quadrature = TimeQuadrature::deterministic_midpoint;
    opt.out_dir = dir;
    const RunRecord record = run_solve(*entry, opt);
    REQUIRE(record.stored_at.has_value());
    std::ifstream in(*record.stored_at / "record.json");
    REQUIRE(in.good());
    json loaded;
    in >> loaded;
    CHECK(loaded["problem_id"] == "deterministic_exp");
    CHECK(loaded["results"].size() == entry->probes.size());
}
