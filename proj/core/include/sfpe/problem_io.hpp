#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sfpe/catalog.hpp"

namespace sfpe {

/// Problem-file schema (all names exact, unknown fields rejected):
///   id, dimension_d, noise_m, horizon, mu (list), sigma (list of lists),
///   f, g, lipschitz_L, growth { kind, param },
///   lyapunov { family, q | alpha, epsilon | expr, rho },
///   reference_solution (optional).
CatalogEntry problem_from_json(const nlohmann::json& j);

nlohmann::json problem_to_json(const CatalogEntry& entry);

/// Reads and validates a problem file; SchemaError names the offending field,
/// expression errors carry the file path.
CatalogEntry load_problem(const std::filesystem::path& path);

void save_problem(const CatalogEntry& entry, const std::filesystem::path& path);

/// Canonical serialization fed to the content hash of run records.
std::string canonical_problem_text(const CatalogEntry& entry);

}  // namespace sfpe
