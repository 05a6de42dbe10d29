#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace sdmpc {

/// Per-coordinate box lower <= z <= upper; disabled coordinates are free.
struct BoxSet {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<bool> enabled;

  static BoxSet symmetric(const Eigen::VectorXd& bound) {
    return {-bound, bound, std::vector<bool>(bound.size(), true)};
  }
  static BoxSet free(int dim) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Eigen::VectorXd::Constant(dim, -inf), Eigen::VectorXd::Constant(dim, inf), std::vector<bool>(dim, false)};
  }
  /// Enables coordinate i with [lo, hi].
  BoxSet& constrain(int i, double lo, double hi) {
    if (i < 0 || i >= dim() || lo > hi) throw std::invalid_argument("BoxSet::constrain: bad coordinate or bounds");
    lower[i] = lo;
    upper[i] = hi;
    enabled[i] = true;
    return *this;
  }

  int dim() const { return static_cast<int>(lower.size()); }
  int num_enabled() const {
    int n = 0;
    for (bool e : enabled) n += e;
    return n;
  }
  void validate(int expected_dim) const {
    if (dim() != expected_dim || upper.size() != lower.size() || static_cast<int>(enabled.size()) != dim())
      throw std::invalid_argument("BoxSet: dimension mismatch");
    for (int i = 0; i < dim(); ++i)
      if (enabled[i] && !(lower[i] <= upper[i])) throw std::invalid_argument("BoxSet: lower > upper");
  }
};

}  // namespace sdmpc
