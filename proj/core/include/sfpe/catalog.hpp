#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfpe/solver.hpp"

namespace sfpe {

enum class Check { coercivity, lipschitz, supersolution, growth_ratio, heat_type };

std::string_view check_name(Check c);

/// A ready-to-run problem: spec, optional closed-form reference solution in
/// (t, x), the admissibility checks it must pass, and standard probe points.
struct CatalogEntry {
    std::string id;
    ProblemSpec problem;
    std::optional<Expression> reference;
    std::vector<Check> profile;
    std::vector<SamplePoint> probes;
};

/// The shipped problems: heat_quadratic, lambda_reaction, deterministic_exp,
/// heat_sin_1d, allen_cahn_trunc, sine_reaction, gbm_linear.
const std::vector<CatalogEntry>& builtin_catalog();

const CatalogEntry* find_catalog_entry(std::string_view id);

/// All checks applicable to the problem: the four core hypotheses, plus
/// heat_type for Gaussian-growth data.
std::vector<Check> default_profile(const ProblemSpec& p);

/// Five standard probes: t in {0, T/2}, x at the origin and at radius 0.5.
std::vector<SamplePoint> default_probes(const ProblemSpec& p);

}  // namespace sfpe
