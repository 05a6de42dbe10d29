#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sdmpc/chance.hpp"
#include "sdmpc/constraints.hpp"
#include "sdmpc/ocp.hpp"
#include "sdmpc/pce.hpp"

namespace sdmpc {

/// I: measured disturbances, II: disturbances estimated from data,
/// III: model identified from the same data.
enum class Variant { kMeasured, kEstimated, kIdentified };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct InitialStateSpec {
  enum class Kind { kUniform, kBeta, kPoint };
  Kind kind = Kind::kPoint;
  Eigen::VectorXd lower;  ///< uniform bounds, or the interval a Beta sample is mapped to
  Eigen::VectorXd upper;
  double a = 1.0, b = 1.0;  ///< Beta shape parameters
  Eigen::VectorXd point;

  Eigen::VectorXd sample(std::mt19937_64& rng) const;
};

struct ExcitationSpec {
  enum class Kind { kOpenLoopRandom, kPrestabilized };
  Kind kind = Kind::kPrestabilized;
  /// Open-loop samples before the prestabilizing feedback is synthesized.
  int count_open = 0;
  int count_closed = 0;
  /// v ~ U(-amplitude, amplitude) per input.
  double amplitude = 1.0;
};

struct Scenario {
  std::string name = "custom";
  Eigen::MatrixXd A, B;

  enum class DisturbanceKind { kGaussian, kUniform };
  DisturbanceKind disturbance_kind = DisturbanceKind::kGaussian;
  Eigen::MatrixXd disturbance_covariance;  ///< Gaussian
  Eigen::VectorXd disturbance_half_width;  ///< uniform

  InitialStateSpec init;
  int horizon = 10;
  Eigen::MatrixXd Q, R;
  BoxSet x_box, u_box;
  double eps_x = 0.1, eps_u = 0.1;
  /// Empty: Gaussian quantile for Gaussian disturbances, distribution free otherwise.
  std::optional<SigmaMode> sigma_mode;
  CovarianceMode covariance_mode = CovarianceMode::kSemidefinite;
  /// Empty: largest level passing the terminal check by halving from 1.
  std::optional<double> gamma_level;

  int T = 100;
  ExcitationSpec excitation;
  /// Samples of the record used for the Hankel stack, 0 for all.
  int hankel_window = 0;
  Variant variant = Variant::kMeasured;

  int steps = 60;
  int samples = 1000;
  std::uint64_t seed = 0;
  double beta = 1e4;
  double slack_max = 1e-3;

  std::vector<int> histogram_steps{0, 5, 10, 15, 20, 25, 30};
  int histogram_coordinate = 0;
  int histogram_bins = 50;
  /// First step of the long-run average stage cost.
  int transient = 20;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  DisturbanceModel disturbance() const;
  SigmaMode resolved_sigma_mode() const;
  double sigma_x() const { return chance_sigma(resolved_sigma_mode(), eps_x); }
  double sigma_u() const { return chance_sigma(resolved_sigma_mode(), eps_u); }
  void validate() const;
};

/// scalar_case1, scalar_case2, scalar_case2_wide, batch_reactor.
Scenario preset(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json to_json(const Scenario& s);
/// Keys missing from j keep the values of base, so a file may override a preset.
Scenario scenario_from_json(const nlohmann::json& j, const Scenario& base = {});

}  // namespace sdmpc
