#include "sdmpc/controller.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

nlohmann::json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// JSON has no NaN; unsolved costs are written as null.
nlohmann::json num_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

void ControllerConfig::validate() const {
  const int n = nx(), m = nu();
  require(n > 0 && m > 0 && horizon() > 0, "ControllerConfig: empty predictor");
  require(ingredients.K.rows() == m && ingredients.K.cols() == n, "ControllerConfig: K shape");
  require(predictor.K.rows() == m && predictor.K.cols() == n, "ControllerConfig: predictor K shape");
  require((predictor.K - ingredients.K).cwiseAbs().maxCoeff() <= 1e-12 * (1 + ingredients.K.norm()),
          "ControllerConfig: predictor must be prestabilized with the terminal K");
  require(ingredients.closed_loop.rows() == n && ingredients.closed_loop.cols() == n,
          "ControllerConfig: closed-loop matrix shape");
  require(ingredients.P.rows() == n && ingredients.Gamma.rows() == n, "ControllerConfig: P and Gamma shapes");
  require(w_model.dim() == n && w_model.lw() >= 2, "ControllerConfig: disturbance model dimension");
  require(Q.rows() == n && Q.cols() == n && R.rows() == m && R.cols() == m, "ControllerConfig: weight shapes");
  x_box.validate(n);
  u_box.validate(m);
}

Candidate shift_candidate(const OcpSolution& sol, const PceBasis& basis, const TerminalIngredients& ing,
                          const DisturbanceModel& w_model, int new_tag, const MatrixXd& Q, const MatrixXd& R) {
  require(sol.optimal(), "shift_candidate: solution not optimal");
  const int N = basis.horizon(), L = basis.size();
  require(static_cast<int>(sol.x.size()) == N + 1 && static_cast<int>(sol.u.size()) == N,
          "shift_candidate: solution horizon");
  Candidate c;
  c.basis = grow_basis_for_backup(basis, new_tag);
  const int Lp = c.basis.size(), nx = static_cast<int>(sol.x[0].rows()), nu = static_cast<int>(sol.u[0].rows());
  c.x.assign(N + 1, PceVector::Zero(nx, Lp));
  c.u.assign(N, PceVector::Zero(nu, Lp));
  for (int i = 0; i < N; ++i) c.x[i].leftCols(L) = sol.x[i + 1];
  for (int i = 0; i + 1 < N; ++i) c.u[i].leftCols(L) = sol.u[i + 1];
  c.u[N - 1].leftCols(L) = ing.K * sol.x[N];
  c.x[N].leftCols(L) = ing.closed_loop * sol.x[N];
  const int lw = w_model.lw();
  c.x[N].middleCols(c.basis.w_block_start(N - 1), lw - 1) = w_model.pce_coeffs().rightCols(lw - 1);
  c.cost = evaluate_cost(c.x, c.u, c.basis, Q, R, ing.P);
  return c;
}

VectorXd fit_germ_checked(const DisturbanceModel& w_model, const VectorXd& w, bool* degenerate) {
  const MatrixXd W = w_model.pce_coeffs().rightCols(w_model.lw() - 1);
  const VectorXd xi = w_model.fit_germ(w);
  if (degenerate != nullptr)
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      if (W.col(j).cwiseAbs().maxCoeff() <= 1e-12) *degenerate = true;
  if ((W * xi - w).norm() > 1e-8 * (1 + w.norm()))
    throw std::invalid_argument("fit_germ_checked: realization outside the range of the disturbance coefficients");
  return xi;
}

VectorXd realize_feedback(const PceVector& u_first, const PceBasis& basis, const std::map<int, VectorXd>& past_w,
                          const DisturbanceModel& w_model, bool* degenerate) {
  require(u_first.cols() == basis.size(), "realize_feedback: coefficient columns differ from basis size");
  const int lx = basis.lx();
  if (lx < basis.size()) {
    const double tail = u_first.rightCols(basis.size() - lx).cwiseAbs().maxCoeff();
    if (tail > 1e-9 * (1 + u_first.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("realize_feedback: input coefficients beyond the x-block are not zero");
  }
  std::map<int, VectorXd> germs;
  for (int j = 1; j < lx; ++j) {
    const int tag = basis[j].time_tag;
    if (germs.count(tag)) continue;
    auto it = past_w.find(tag);
    if (it == past_w.end())
      throw std::invalid_argument("realize_feedback: missing disturbance realization for tag " + std::to_string(tag));
    germs[tag] = fit_germ_checked(w_model, it->second, degenerate);
  }
  VectorXd u = u_first.col(0);
  for (int j = 1; j < lx; ++j) u += u_first.col(j) * eval_poly(basis[j], germs[basis[j].time_tag][basis[j].germ]);
  return u;
}

double first_stage_cost(const OcpSolution& sol, const PceBasis& basis, const MatrixXd& Q, const MatrixXd& R) {
  const VectorXd& n = basis.norms();
  double s = 0.0;
  for (int j = 0; j < basis.size(); ++j)
    s += n[j] * 0.5 * (sol.x[0].col(j).dot(Q * sol.x[0].col(j)) + sol.u[0].col(j).dot(R * sol.u[0].col(j)));
  return s;
}

const char* to_string(InitPath path) { return path == InitPath::kMeasured ? "measured" : "backup"; }

nlohmann::json to_json(const StepDiagnostics& d) {
  nlohmann::json j;
  j["k"] = d.k;
  j["path"] = to_string(d.path);
  j["q"] = d.q;
  j["L"] = d.basis_size;
  j["status_measured"] = to_string(d.measured_status);
  j["status_backup"] = d.backup_status ? nlohmann::json(to_string(*d.backup_status)) : nlohmann::json(nullptr);
  j["V_measured"] = num_json(d.V_measured);
  j["V_backup"] = num_json(d.V_backup);
  j["V_N"] = num_json(d.V_N);
  j["J_tilde"] = num_json(d.J_tilde);
  j["J_tilde_next"] = num_json(d.J_tilde_next);
  j["candidate_residual"] = num_json(d.candidate_residual);
  j["descent_residual"] = num_json(d.descent_residual);
  j["slack_inf"] = d.slack_inf;
  j["fast_path"] = d.fast_path;
  j["iterations"] = d.iterations;
  j["degenerate_germ"] = d.degenerate_germ;
  j["solve_seconds"] = d.solve_seconds;
  j["x"] = vec_json(d.x);
  j["u"] = vec_json(d.u);
  return j;
}

Controller::Controller(ControllerConfig config) : config_(std::move(config)) {
  config_.validate();
  state_.J_tilde = kInf;
}

PceBasis Controller::measured_basis(int k) const {
  return make_basis(1, config_.w_model.lw(), config_.horizon(), std::vector<int>{}, k, config_.w_model.poly_kind());
}

OcpProblem Controller::make_problem(const PceBasis& basis, const PceVector& init) const {
  OcpProblem pb;
  pb.predictor = config_.predictor;
  pb.basis = basis;
  pb.init = init;
  pb.w = place_disturbance(basis, config_.w_model);
  pb.Q = config_.Q;
  pb.R = config_.R;
  pb.P = config_.ingredients.P;
  pb.sigma_x = config_.sigma_x;
  pb.sigma_u = config_.sigma_u;
  pb.x_box = config_.x_box;
  pb.u_box = config_.u_box;
  pb.Gamma = config_.ingredients.Gamma;
  pb.gamma_level = config_.ingredients.gamma_level;
  pb.terminal_constraints = config_.terminal_constraints;
  pb.covariance_mode = config_.covariance_mode;
  pb.beta = config_.beta;
  pb.slack_max = config_.slack_max;
  pb.solver = config_.solver;
  pb.fast_path = config_.fast_path;
  return pb;
}

VectorXd Controller::step(const VectorXd& x, const std::optional<VectorXd>& w_prev, StepDiagnostics* diag) {
  require(x.size() == config_.nx(), "Controller::step: state dimension");
  const auto t0 = std::chrono::steady_clock::now();
  const int k = state_.k, N = config_.horizon();
  StepDiagnostics d;
  d.k = k;
  d.x = x;

  if (k > 0) {
    VectorXd w;
    if (w_prev) {
      require(w_prev->size() == config_.nx(), "Controller::step: disturbance dimension");
      w = *w_prev;
    } else {
      require(config_.estimator.has_value(), "Controller::step: no disturbance realization and no estimator");
      w = config_.estimator->estimate(state_.x_prev, state_.u_prev, x);
    }
    state_.past_w[k - 1] = w;
    d.w_prev = w;
  }

  // Measured initial condition.
  const PceBasis basis_m = measured_basis(k);
  PceVector init_m = PceVector::Zero(config_.nx(), basis_m.size());
  init_m.col(0) = x;
  OcpSolution sol = solve(make_problem(basis_m, init_m));
  d.measured_status = sol.status;
  d.V_measured = sol.optimal() ? sol.value : kNaN;
  d.V_backup = kNaN;
  d.candidate_residual = kNaN;
  d.J_tilde = state_.J_tilde;

  PceBasis basis;
  if (sol.optimal() && sol.value <= state_.J_tilde) {
    d.path = InitPath::kMeasured;
    basis = basis_m;
    state_.q = 0;
  } else {
    if (!state_.candidate)
      throw ControllerInfeasible("Controller::step: measured initial condition infeasible at k = " + std::to_string(k) +
                                 " and no backup available");
    d.path = InitPath::kBackup;
    const Candidate& cand = *state_.candidate;
    const OcpProblem pb = make_problem(cand.basis, state_.predicted_init);
    d.candidate_residual = constraint_violation(pb, cand.x, cand.u).max();
    OcpSolution sol_b = solve(pb);
    d.backup_status = sol_b.status;
    if (!sol_b.optimal())
      throw ControllerInfeasible(std::string("Controller::step: backup problem ") + to_string(sol_b.status) +
                                 " at k = " + std::to_string(k) + ", candidate residual " +
                                 std::to_string(d.candidate_residual));
    d.V_backup = sol_b.value;
    sol = std::move(sol_b);
    basis = cand.basis;
    ++state_.q;
  }
  d.V_N = sol.value;
  d.q = state_.q;
  d.basis_size = basis.size();
  d.slack_inf = sol.slack.size() ? sol.slack.cwiseAbs().maxCoeff() : 0.0;
  d.fast_path = sol.fast_path;
  d.iterations = sol.iterations;

  const VectorXd u = realize_feedback(sol.u[0], basis, state_.past_w, config_.w_model, &d.degenerate_germ);

  Candidate next = shift_candidate(sol, basis, config_.ingredients, config_.w_model, k + N, config_.Q, config_.R);
  d.first_stage = first_stage_cost(sol, basis, config_.Q, config_.R);
  {
    const int start = next.basis.w_block_start(N - 1), lw = config_.w_model.lw();
    const VectorXd& n = next.basis.norms();
    double s = 0.0;
    for (int j = start; j < start + lw - 1; ++j)
      s += n[j] * 0.5 * next.x[N].col(j).dot(config_.ingredients.P * next.x[N].col(j));
    d.disturbance_cost = s;
  }
  d.descent_residual = next.cost - (sol.cost - d.first_stage + d.disturbance_cost);
  d.J_tilde_next = next.cost;

  state_.basis = basis;
  state_.J_tilde = next.cost;
  state_.predicted_init = PceVector::Zero(config_.nx(), next.basis.size());
  state_.predicted_init.leftCols(next.basis.lx()) = next.x[0].leftCols(next.basis.lx());
  state_.candidate = std::move(next);
  // The next backup basis carries the tags k - q .. k in its x-block.
  for (auto it = state_.past_w.begin(); it != state_.past_w.end();)
    it = it->first < k - state_.q ? state_.past_w.erase(it) : std::next(it);
  state_.x_prev = x;
  state_.u_prev = u;
  ++state_.k;

  d.u = u;
  d.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (diag != nullptr) *diag = std::move(d);
  return u;
}

}  // namespace sdmpc
