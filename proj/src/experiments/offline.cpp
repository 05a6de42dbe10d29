#include <string>

#include "sdmpc/campaign.hpp"

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd uniform_vector(int n, double a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(-a, a);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = ud(rng);
  return v;
}

DataRecord concat(const DataRecord& a, const DataRecord& b) {
  DataRecord r;
  r.x.resize(a.nx(), a.length() + b.length() + 1);
  r.u.resize(a.nu(), a.length() + b.length());
  r.w.resize(a.nx(), a.length() + b.length());
  r.x << a.x.leftCols(a.length()), b.x;
  r.u << a.u, b.u;
  r.w << a.w, b.w;
  return r;
}

}  // namespace

DataRecord collect_data(const Scenario& s, std::mt19937_64& rng, MatrixXd* prestabilizing_gain) {
  const Plant plant{s.A, s.B, s.disturbance(), s.seed};
  const double a = s.excitation.amplitude;
  const int m = s.nu();
  auto random_input = [&](int, const VectorXd&) -> VectorXd { return uniform_vector(m, a, rng); };
  const VectorXd x0 = VectorXd::Zero(s.nx());
  if (s.excitation.kind == ExcitationSpec::Kind::kOpenLoopRandom) {
    if (prestabilizing_gain) prestabilizing_gain->resize(0, 0);
    return make_record(simulate(plant, random_input, x0, s.T, rng));
  }
  const DataRecord open = make_record(simulate(plant, random_input, x0, s.excitation.count_open, rng));
  const MatrixXd K = synthesize_K_H(with_estimated_disturbances(open), s.Q, s.R).K;
  if (prestabilizing_gain) *prestabilizing_gain = K;
  const DataRecord closed = make_record(simulate(
      plant, [&](int, const VectorXd& x) -> VectorXd { return K * x + uniform_vector(m, a, rng); },
      open.x.col(open.length()), s.excitation.count_closed, rng));
  return concat(open, closed);
}

OfflineArtifacts run_offline(const Scenario& s, int max_attempts) {
  s.validate();
  OfflineArtifacts out;
  out.variant = s.variant;
  out.pe_order = s.horizon + s.nx() + 1;
  const int window_length = s.hankel_window > 0 ? s.hankel_window : s.T;

  // The data do not depend on the variant; only the disturbances used below do.
  DataRecord hankel_record;
  for (out.attempts = 1;; ++out.attempts) {
    std::mt19937_64 rng = make_rng(s.seed, static_cast<std::uint64_t>(out.attempts - 1), 0);
    try {
      out.record = collect_data(s, rng, &out.prestabilizing_gain);
    } catch (const SynthesisError&) {
      if (out.attempts >= max_attempts) throw;
      continue;
    } catch (const InsufficientExcitation&) {
      if (out.attempts >= max_attempts) throw;
      continue;
    }
    out.variant_record =
        s.variant == Variant::kMeasured ? out.record : with_estimated_disturbances(out.record);
    hankel_record = window(out.variant_record, 0, window_length);
    MatrixXd uw(s.nu() + s.nx(), window_length);
    uw << hankel_record.u, hankel_record.w;
    if (is_persistently_exciting(uw, out.pe_order)) break;
    if (out.attempts >= max_attempts)
      throw InsufficientExcitation("run_offline: (u, w) not persistently exciting of order " +
                                   std::to_string(out.pe_order) + " after " + std::to_string(max_attempts) +
                                   " attempts");
  }

  out.sigma_x = s.sigma_x();
  out.sigma_u = s.sigma_u();
  const DisturbanceModel w_model = s.disturbance();
  out.ingredients = data_driven_ingredients(out.variant_record, s.Q, s.R, w_model.covariance());
  out.ingredients.gamma_level =
      s.gamma_level ? *s.gamma_level
                    : select_gamma_level(out.ingredients, s.x_box, s.u_box, out.sigma_x, out.sigma_u);
  out.terminal_report = check_terminal_assumption(out.ingredients, s.x_box, s.u_box, out.sigma_x, out.sigma_u);
  out.alpha = 0.5 * (w_model.covariance() * out.ingredients.P).trace();

  if (s.variant == Variant::kIdentified) {
    out.identified = identify_model(out.record.x, out.record.u);
    out.predictor = make_predictor(out.identified->A, out.identified->B, s.horizon, out.ingredients.K);
  } else {
    out.predictor = make_predictor(build_stack(hankel_record, s.horizon), out.ingredients.K);
  }
  return out;
}

ControllerConfig make_controller_config(const Scenario& s, const OfflineArtifacts& a) {
  ControllerConfig c;
  c.predictor = a.predictor;
  c.ingredients = a.ingredients;
  c.w_model = s.disturbance();
  c.Q = s.Q;
  c.R = s.R;
  c.x_box = s.x_box;
  c.u_box = s.u_box;
  c.sigma_x = a.sigma_x;
  c.sigma_u = a.sigma_u;
  c.covariance_mode = s.covariance_mode;
  c.beta = s.beta;
  c.slack_max = s.slack_max;
  if (s.variant != Variant::kMeasured) c.estimator = DisturbanceEstimator(a.variant_record);
  c.validate();
  return c;
}

}  // namespace sdmpc
