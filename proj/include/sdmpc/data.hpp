#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "sdmpc/pce.hpp"

namespace sdmpc {

/// Relative singular-value cutoff for ranks and pseudo-inverses.
inline constexpr double kRankTol = 1e-9;

/// Raised when data are not rich enough for the requested construction.
class InsufficientExcitation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Independent stream for (seed, run, stream); identical triples reproduce the
/// same sequence.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t run = 0, std::uint64_t stream = 0);

/// Ground-truth LTI plant x+ = A x + B u + w. Only simulators read A and B.
struct Plant {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  DisturbanceModel disturbance;
  std::uint64_t seed = 0;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
};

/// Signals stored one sample per column: x is n_x × (T+1), u is n_u × T,
/// w is n_x × T.
struct Trajectory {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
  Eigen::MatrixXd w;
};

using Policy = std::function<Eigen::VectorXd(int k, const Eigen::VectorXd& x)>;

Trajectory simulate(const Plant& plant, const Eigen::MatrixXd& u, const Eigen::VectorXd& x0, int steps,
                    std::mt19937_64& rng);
/// Uses a fresh stream seeded from plant.seed.
Trajectory simulate(const Plant& plant, const Eigen::MatrixXd& u, const Eigen::VectorXd& x0, int steps);
/// Closed-loop variant: u_k = policy(k, x_k).
Trajectory simulate(const Plant& plant, const Policy& policy, const Eigen::VectorXd& x0, int steps,
                    std::mt19937_64& rng);

enum class DisturbanceSource { kMeasured, kEstimated };

/// Offline record with one sample per column.
struct DataRecord {
  Eigen::MatrixXd x;  ///< n_x × (T+1)
  Eigen::MatrixXd u;  ///< n_u × T
  Eigen::MatrixXd w;  ///< n_x × T
  DisturbanceSource source = DisturbanceSource::kMeasured;

  int nx() const { return static_cast<int>(x.rows()); }
  int nu() const { return static_cast<int>(u.rows()); }
  int length() const { return static_cast<int>(u.cols()); }

  /// X, U, X⁺ and W of the depth-1 data matrices.
  auto X() const { return x.leftCols(length()); }
  auto Xplus() const { return x.rightCols(length()); }
  /// [X; U].
  Eigen::MatrixXd D() const;

  void validate() const;
};

DataRecord make_record(const Trajectory& traj, DisturbanceSource source = DisturbanceSource::kMeasured);

/// Samples [first, first + T) of the inputs and disturbances and
/// [first, first + T] of the state.
DataRecord window(const DataRecord& record, int first, int T);

/// Record with w replaced by its least-squares estimate from (x, u).
DataRecord with_estimated_disturbances(const DataRecord& record);

int numerical_rank(const Eigen::MatrixXd& m, double rel_tol = kRankTol);
Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_tol = kRankTol);

/// Block Hankel of depth `depth` from a signal with one sample per column;
/// depth·dim rows and T - depth + 1 columns.
Eigen::MatrixXd hankel(const Eigen::Ref<const Eigen::MatrixXd>& signal, int depth);

/// Full row rank of the depth-`order` Hankel of the stacked signal.
bool is_persistently_exciting(const Eigen::Ref<const Eigen::MatrixXd>& signal, int order, double tol = kRankTol);

/// Ŵ = X⁺ (I - D⁺ D) with D = [X; U].
Eigen::MatrixXd estimate_disturbances(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::MatrixXd>& u);

struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

/// [Â B̂] = X⁺ D⁺.
LinearModel identify_model(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& u);

/// Online estimate of the latest disturbance: appends (x_{k-1}, u_{k-1}) as one
/// extra column of the offline data and returns the last entry of the
/// re-estimated disturbance sequence, in closed form
/// (x_k - Θd) / (1 + dᵀ(DDᵀ)⁻¹d) with Θ = X⁺D⁺.
class DisturbanceEstimator {
 public:
  DisturbanceEstimator() = default;
  explicit DisturbanceEstimator(const DataRecord& record);

  Eigen::VectorXd estimate(const Eigen::Ref<const Eigen::VectorXd>& x_prev, const Eigen::Ref<const Eigen::VectorXd>& u_prev,
                           const Eigen::Ref<const Eigen::VectorXd>& x_now) const;

 private:
  Eigen::MatrixXd theta_;
  Eigen::MatrixXd gram_inv_;
};

/// [H_{N+1}(x); H_N(u); H_N(w)] over T - N + 1 aligned columns.
struct HankelStack {
  Eigen::MatrixXd Hx;
  Eigen::MatrixXd Hu;
  Eigen::MatrixXd Hw;
  int horizon = 0;
  int nx = 0;
  int nu = 0;

  int cols() const { return static_cast<int>(Hx.cols()); }
  int rows() const { return static_cast<int>(Hx.rows() + Hu.rows() + Hw.rows()); }
  Eigen::MatrixXd matrix() const;
};

/// Requires (u, w) persistently exciting of order n_x + N + 1.
HankelStack build_stack(const DataRecord& record, int horizon);

/// ‖S S⁺ z - z‖ for a stacked trajectory z = [x_0..x_N; u_0..u_{N-1}; w_0..w_{N-1}]
/// given per-sample columns.
double stack_residual(const HankelStack& stack, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::MatrixXd>& u, const Eigen::Ref<const Eigen::MatrixXd>& w);

}  // namespace sdmpc
