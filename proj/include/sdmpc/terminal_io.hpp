#pragma once

#include <json.hpp>

#include "sdmpc/terminal.hpp"

namespace sdmpc {

/// {"K", "H", "P", "Gamma", "gamma_level", "M", "closed_loop"} with row-major
/// nested arrays; H and M are empty arrays for model-based ingredients.
nlohmann::json to_json(const TerminalIngredients& ing);
TerminalIngredients ingredients_from_json(const nlohmann::json& j);

}  // namespace sdmpc
