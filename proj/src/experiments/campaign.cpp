#include "sdmpc/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double stage_cost(const VectorXd& x, const VectorXd& u, const MatrixXd& Q, const MatrixXd& R) {
  return 0.5 * (x.dot(Q * x) + u.dot(R * u));
}

double RunResult::closed_loop_cost() const {
  double J = 0.0;
  for (int k = 0; k < completed; ++k) J += stage[k];
  return J;
}

RunResult run_closed_loop(const Scenario& s, const OfflineArtifacts& a, int run_id) {
  RunResult r;
  r.run_id = run_id;
  const int n = s.nx(), m = s.nu();
  r.x = MatrixXd::Zero(n, s.steps + 1);
  r.u = MatrixXd::Zero(m, s.steps);
  r.w = MatrixXd::Zero(n, s.steps);
  std::mt19937_64 rng_w = make_rng(s.seed, static_cast<std::uint64_t>(run_id), 1);
  std::mt19937_64 rng_x = make_rng(s.seed, static_cast<std::uint64_t>(run_id), 2);
  const DisturbanceModel w_model = s.disturbance();
  r.x.col(0) = s.init.sample(rng_x);
  // Realizations are drawn up front so a failed run leaves the stream intact.
  for (int k = 0; k < s.steps; ++k) r.w.col(k) = w_model.realize(w_model.sample_germ(rng_w));

  try {
    Controller ctl(make_controller_config(s, a));
    for (int k = 0; k < s.steps; ++k) {
      std::optional<VectorXd> w_prev;
      if (s.variant == Variant::kMeasured && k > 0) w_prev = r.w.col(k - 1);
      StepDiagnostics d;
      r.u.col(k) = ctl.step(r.x.col(k), w_prev, &d);
      r.diagnostics.push_back(std::move(d));
      r.stage.push_back(stage_cost(r.x.col(k), r.u.col(k), s.Q, s.R));
      r.x.col(k + 1) = s.A * r.x.col(k) + s.B * r.u.col(k) + r.w.col(k);
      r.completed = k + 1;
    }
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

CampaignResult run_campaign(const Scenario& s, const OfflineArtifacts& a, const CampaignOptions& options) {
  s.validate();
  CampaignResult c;
  c.scenario = s;
  c.runs.resize(s.samples);
  int threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, s.samples);

  std::atomic<int> next{0}, finished{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (int i = next++; i < s.samples; i = next++) {
      c.runs[i] = run_closed_loop(s, a, i);
      const int done = ++finished;
      if (options.progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        options.progress(done);
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  c.summary = summarize(s, a, c.runs);
  return c;
}

namespace {

bool outside(const BoxSet& box, int i, double v) { return box.enabled[i] && (v < box.lower[i] || v > box.upper[i]); }

}  // namespace

CampaignSummary summarize(const Scenario& s, const OfflineArtifacts& a, const std::vector<RunResult>& runs) {
  CampaignSummary out;
  const int n = s.nx(), m = s.nu(), T = s.steps;
  out.runs = static_cast<int>(runs.size());
  out.alpha = a.alpha;
  out.avg_cost.assign(T, 0.0);
  out.x_violation_rate = MatrixXd::Zero(n, T);
  out.u_violation_rate = MatrixXd::Zero(m, T);
  out.x_violation_freq = VectorXd::Zero(n);
  out.u_violation_freq = VectorXd::Zero(m);

  std::vector<double> J, long_run, seconds;
  for (const RunResult& r : runs) {
    for (const StepDiagnostics& d : r.diagnostics) {
      ++out.total_steps;
      out.backup_steps += d.path == InitPath::kBackup;
      out.max_q = std::max(out.max_q, d.q);
      out.max_slack = std::max(out.max_slack, d.slack_inf);
      out.max_descent_residual = std::max(out.max_descent_residual, std::abs(d.descent_residual));
      if (std::isfinite(d.candidate_residual))
        out.max_candidate_residual = std::max(out.max_candidate_residual, d.candidate_residual);
      out.max_selection_gap = std::max(out.max_selection_gap, d.V_N - d.J_tilde);
      seconds.push_back(d.solve_seconds);
    }
    if (r.failed) {
      ++out.failed;
      continue;
    }
    J.push_back(r.closed_loop_cost());
    double cum = 0.0, tail = 0.0;
    for (int k = 0; k < T; ++k) {
      cum += r.stage[k];
      out.avg_cost[k] += cum / (k + 1);
      if (k >= s.transient) tail += r.stage[k];
      for (int i = 0; i < n; ++i) out.x_violation_rate(i, k) += outside(s.x_box, i, r.x(i, k));
      for (int i = 0; i < m; ++i) out.u_violation_rate(i, k) += outside(s.u_box, i, r.u(i, k));
    }
    long_run.push_back(tail / (T - s.transient));
  }

  auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
  };
  mean_sd(J, out.J_mean, out.J_sd);
  double sd = 0.0;
  mean_sd(long_run, out.long_run_mean, sd);
  out.long_run_se = long_run.empty() ? 0.0 : sd / std::sqrt(static_cast<double>(long_run.size()));
  mean_sd(seconds, out.step_seconds_mean, out.step_seconds_sd);

  const int ok = out.runs - out.failed;
  if (ok > 0) {
    for (double& v : out.avg_cost) v /= ok;
    out.x_violation_rate /= ok;
    out.u_violation_rate /= ok;
    const int tail = T - s.transient;
    out.x_violation_freq = out.x_violation_rate.rightCols(tail).rowwise().mean();
    out.u_violation_freq = out.u_violation_rate.rightCols(tail).rowwise().mean();
  }
  return out;
}

}  // namespace sdmpc
