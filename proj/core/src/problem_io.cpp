#include "sfpe/problem_io.hpp"

#include <fstream>
#include <set>

namespace sfpe {

namespace {

using nlohmann::json;

void reject_unknown_fields(const json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.contains(it.key())) {
            throw SchemaError(where.empty() ? it.key() : where + "." + it.key(),
                              "unknown field");
        }
    }
}

const json& require(const json& j, const std::string& field) {
    auto it = j.find(field);
    if (it == j.end()) throw SchemaError(field, "required");
    return *it;
}

double require_number(const json& j, const std::string& field) {
    const json& v = require(j, field);
    if (!v.is_number()) throw SchemaError(field, "must be a number");
    return v.get<double>();
}

int require_int(const json& j, const std::string& field) {
    const json& v = require(j, field);
    if (!v.is_number_integer()) throw SchemaError(field, "must be an integer");
    return v.get<int>();
}

std::string require_string(const json& j, const std::string& field) {
    const json& v = require(j, field);
    if (!v.is_string()) throw SchemaError(field, "must be a string");
    return v.get<std::string>();
}

Expression parse_expr_field(const std::string& source, int d, bool allow_v,
                            const std::string& field) {
    try {
        return Expression::parse(source, d, allow_v);
    } catch (const Error& e) {
        throw SchemaError(field, std::string("expression error: ") + e.what());
    }
}

}  // namespace

CatalogEntry problem_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("", "problem file must be a JSON object");
    reject_unknown_fields(j,
                          {"id", "dimension_d", "noise_m", "horizon", "mu", "sigma", "f", "g",
                           "lipschitz_L", "growth", "lyapunov", "reference_solution"},
                          "");

    CatalogEntry entry;
    entry.id = require_string(j, "id");
    const int d = require_int(j, "dimension_d");
    const int m = require_int(j, "noise_m");
    if (d < 1) throw SchemaError("dimension_d", "must be >= 1");
    if (m < 1) throw SchemaError("noise_m", "must be >= 1");

    ProblemSpec p;
    p.dynamics.d = d;
    p.dynamics.m = m;
    p.horizon = require_number(j, "horizon");
    if (!(p.horizon > 0.0)) throw SchemaError("horizon", "must be > 0");
    p.lipschitz_L = require_number(j, "lipschitz_L");
    if (p.lipschitz_L < 0.0) throw SchemaError("lipschitz_L", "must be >= 0");
    p.dynamics.lipschitz_L = p.lipschitz_L;

    const json& mu = require(j, "mu");
    if (!mu.is_array() || static_cast<int>(mu.size()) != d) {
        throw SchemaError("mu", "must be a list of " + std::to_string(d) + " expressions");
    }
    for (int i = 0; i < d; ++i) {
        if (!mu[static_cast<std::size_t>(i)].is_string()) {
            throw SchemaError("mu", "entries must be expression strings");
        }
        p.dynamics.mu.push_back(parse_expr_field(
            mu[static_cast<std::size_t>(i)].get<std::string>(), d, false, "mu"));
    }

    const json& sigma = require(j, "sigma");
    if (!sigma.is_array() || static_cast<int>(sigma.size()) != d) {
        throw SchemaError("sigma", "must be a list of " + std::to_string(d) + " rows");
    }
    for (int i = 0; i < d; ++i) {
        const json& row = sigma[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != m) {
            throw SchemaError("sigma", "row " + std::to_string(i) + " must have " +
                                           std::to_string(m) + " expressions");
        }
        for (int k = 0; k < m; ++k) {
            if (!row[static_cast<std::size_t>(k)].is_string()) {
                throw SchemaError("sigma", "entries must be expression strings");
            }
            p.dynamics.sigma.push_back(parse_expr_field(
                row[static_cast<std::size_t>(k)].get<std::string>(), d, false, "sigma"));
        }
    }

    p.f = parse_expr_field(require_string(j, "f"), d, true, "f");
    p.g = parse_expr_field(require_string(j, "g"), d, false, "g");

    {
        const json& growth = require(j, "growth");
        if (!growth.is_object()) throw SchemaError("growth", "must be an object");
        reject_unknown_fields(growth, {"kind", "param"}, "growth");
        const std::string kind = require_string(growth, "kind");
        if (kind == "polynomial") {
            p.growth.kind = GrowthKind::polynomial;
        } else if (kind == "gaussian") {
            p.growth.kind = GrowthKind::gaussian;
        } else {
            throw SchemaError("growth.kind", "must be 'polynomial' or 'gaussian'");
        }
        p.growth.param = require_number(growth, "param");
        if (p.growth.kind == GrowthKind::gaussian && !(p.growth.param > 0.0)) {
            throw SchemaError("growth.param", "gaussian growth requires param > 0");
        }
    }

    {
        const json& ly = require(j, "lyapunov");
        if (!ly.is_object()) throw SchemaError("lyapunov", "must be an object");
        const std::string family = require_string(ly, "family");
        const double rho = require_number(ly, "rho");
        try {
            if (family == "polynomial_q") {
                reject_unknown_fields(ly, {"family", "q", "rho"}, "lyapunov");
                p.lyapunov = LyapunovSpec::polynomial(require_number(ly, "q"), rho);
            } else if (family == "heat_kernel") {
                reject_unknown_fields(ly, {"family", "alpha", "epsilon", "rho"}, "lyapunov");
                p.lyapunov = LyapunovSpec::heat_kernel(require_number(ly, "alpha"),
                                                       require_number(ly, "epsilon"), rho);
            } else if (family == "user_expression") {
                reject_unknown_fields(ly, {"family", "expr", "rho"}, "lyapunov");
                p.lyapunov = LyapunovSpec::user(
                    parse_expr_field(require_string(ly, "expr"), d, false, "lyapunov.expr"), rho);
            } else {
                throw SchemaError("lyapunov.family",
                                  "must be 'polynomial_q', 'heat_kernel', or 'user_expression'");
            }
        } catch (const SchemaError&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError("lyapunov", e.what());
        }
    }

    if (auto it = j.find("reference_solution"); it != j.end()) {
        if (!it->is_string()) throw SchemaError("reference_solution", "must be a string");
        entry.reference = parse_expr_field(it->get<std::string>(), d, false, "reference_solution");
    }

    try {
        p.validate();
    } catch (const Error& e) {
        throw SchemaError("", e.what());
    }
    entry.profile = default_profile(p);
    entry.probes = default_probes(p);
    entry.problem = std::move(p);
    return entry;
}

json problem_to_json(const CatalogEntry& entry) {
    const ProblemSpec& p = entry.problem;
    json j;
    j["id"] = entry.id;
    j["dimension_d"] = p.dynamics.d;
    j["noise_m"] = p.dynamics.m;
    j["horizon"] = p.horizon;
    j["lipschitz_L"] = p.lipschitz_L;
    json mu = json::array();
    for (const Expression& e : p.dynamics.mu) mu.push_back(e.source());
    j["mu"] = mu;
    json sigma = json::array();
    for (int i = 0; i < p.dynamics.d; ++i) {
        json row = json::array();
        for (int k = 0; k < p.dynamics.m; ++k) {
            row.push_back(p.dynamics.sigma[static_cast<std::size_t>(i) * p.dynamics.m + k].source());
        }
        sigma.push_back(row);
    }
    j["sigma"] = sigma;
    j["f"] = p.f.source();
    j["g"] = p.g.source();
    j["growth"] = {{"kind", p.growth.kind == GrowthKind::gaussian ? "gaussian" : "polynomial"},
                   {"param", p.growth.param}};
    switch (p.lyapunov.family) {
        case LyapunovFamily::polynomial:
            j["lyapunov"] = {{"family", "polynomial_q"}, {"q", p.lyapunov.q},
                             {"rho", p.lyapunov.rho}};
            break;
        case LyapunovFamily::heat_kernel:
            j["lyapunov"] = {{"family", "heat_kernel"},
                             {"alpha", p.lyapunov.alpha},
                             {"epsilon", p.lyapunov.epsilon},
                             {"rho", p.lyapunov.rho}};
            break;
        case LyapunovFamily::user_expression:
            j["lyapunov"] = {{"family", "user_expression"},
                             {"expr", p.lyapunov.expr->source()},
                             {"rho", p.lyapunov.rho}};
            break;
    }
    if (entry.reference) j["reference_solution"] = entry.reference->source();
    return j;
}

CatalogEntry load_problem(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError(path.string(), "cannot open file");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw SchemaError(path.string(), std::string("not valid JSON: ") + e.what());
    }
    try {
        return problem_from_json(j);
    } catch (SchemaError& e) {
        throw SchemaError(path.string() + (e.field().empty() ? "" : ":" + e.field()), e.what());
    }
}

void save_problem(const CatalogEntry& entry, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << problem_to_json(entry).dump(2) << '\n';
}

std::string canonical_problem_text(const CatalogEntry& entry) {
    return problem_to_json(entry).dump();
}

}  // namespace sfpe
