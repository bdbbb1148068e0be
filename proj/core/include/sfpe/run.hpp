#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfpe/catalog.hpp"
#include "sfpe/oracle.hpp"

namespace sfpe {

enum class Method { picard, mlp };

struct VerifyOptions {
    std::uint64_t seed = 1;
    double radius = 10.0;       // truncation radius for sampled hypothesis checks
    int directions = 8;         // sampled directions per radius (d > 1)
    double supersolution_tol = 1e-8;  // 1e-4 is applied for FD-backed user expressions
    double growth_tol = 1e-2;
    int shell_samples = 16;
};

struct VerifyReport {
    struct Item {
        Check check;
        bool pass = false;
        nlohmann::json details;
    };
    std::vector<Item> items;
    bool all_pass = true;

    nlohmann::json to_json() const;
    std::vector<std::string> failed_names() const;
};

VerifyReport run_verify(const CatalogEntry& entry, const VerifyOptions& opt = {});

struct SolveOptions {
    Method method = Method::picard;
    PicardConfig picard;
    MlpConfig mlp;
    std::vector<SamplePoint> probes;  // empty: the entry's standard probes
    bool force = false;               // skip the admissibility gate (recorded)
    int threads = 1;
    std::optional<std::filesystem::path> out_dir;
    VerifyOptions verify;
};

struct RunRecord {
    std::string run_id;
    std::string timestamp;
    std::string problem_id;
    std::string problem_hash;  // SHA-1 of the canonical problem serialization
    bool forced = false;
    nlohmann::json config;
    nlohmann::json results;
    std::string environment;

    nlohmann::json to_json() const;
    /// Directory this record was persisted into, when persistence was requested.
    std::optional<std::filesystem::path> stored_at;
};

/// Admissibility gate, then the chosen estimator at every probe; persists
/// record.json under out_dir when given.
RunRecord run_solve(const CatalogEntry& entry, const SolveOptions& opt);

struct StudyOptions {
    Method method = Method::picard;
    std::vector<int> sweep_M;
    std::vector<int> sweep_K_or_n;
    std::vector<int> sweep_sde_steps;
    PicardConfig picard;  // template for non-swept fields
    MlpConfig mlp;
    std::vector<SamplePoint> probes;
    int threads = 1;
    std::optional<std::filesystem::path> out_dir;
};

struct StudyResult {
    RunRecord record;
    std::string csv;  // method,M,K_or_n,sde_steps,probe_t,probe_x_repr,value,std_error,abs_error_vs_reference,work,wall_ms
};

/// Error-vs-work sweep; abs_error uses the entry's reference solution when
/// present (empty column otherwise).
StudyResult run_study(const CatalogEntry& entry, const StudyOptions& opt);

struct OracleCompareOptions {
    FdGrid grid;  // the boundary field is superseded by `boundary` below
    /// Boundary policy; unset means exact-solution Dirichlet when the entry
    /// carries a reference, linear extrapolation otherwise.
    std::optional<FdBoundary> boundary;
    Method method = Method::mlp;
    PicardConfig picard;
    MlpConfig mlp;
    std::vector<SamplePoint> probes;
    double fd_tol = 2e-2;
    int threads = 1;
    std::optional<std::filesystem::path> out_dir;
};

struct OracleCompareResult {
    FdCompareReport report;
    RunRecord record;
};

/// d = 1 only: FD oracle vs the Monte-Carlo solver at the probes (u = v test).
OracleCompareResult run_oracle_compare(const CatalogEntry& entry, const OracleCompareOptions& opt);

/// Points used by the sampled hypothesis checks: times {0, T/2, T} crossed
/// with radial points up to opt.radius.
std::vector<SamplePoint> verification_grid(const ProblemSpec& p, const VerifyOptions& opt);

}  // namespace sfpe
