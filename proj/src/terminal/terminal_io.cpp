#include "sdmpc/terminal_io.hpp"

#include "sdmpc/data_io.hpp"

namespace sdmpc {

nlohmann::json to_json(const TerminalIngredients& ing) {
  return {{"K", matrix_to_json(ing.K)},
          {"H", matrix_to_json(ing.H)},
          {"P", matrix_to_json(ing.P)},
          {"Gamma", matrix_to_json(ing.Gamma)},
          {"gamma_level", ing.gamma_level},
          {"M", matrix_to_json(ing.M)},
          {"closed_loop", matrix_to_json(ing.closed_loop)}};
}

TerminalIngredients ingredients_from_json(const nlohmann::json& j) {
  TerminalIngredients ing;
  ing.K = matrix_from_json(j.at("K"));
  ing.H = matrix_from_json(j.at("H"));
  ing.P = matrix_from_json(j.at("P"));
  ing.Gamma = matrix_from_json(j.at("Gamma"));
  ing.gamma_level = j.at("gamma_level").get<double>();
  ing.M = matrix_from_json(j.at("M"));
  ing.closed_loop = matrix_from_json(j.at("closed_loop"));
  if (ing.P.rows() != ing.P.cols() || ing.Gamma.rows() != ing.P.rows() || ing.K.cols() != ing.P.rows() ||
      ing.closed_loop.rows() != ing.P.rows())
    throw std::runtime_error("ingredients_from_json: inconsistent dimensions");
  return ing;
}

}  // namespace sdmpc
