#include "sdmpc/scenario.hpp"

#include <cmath>
#include <stdexcept>

#include "sdmpc/data_io.hpp"

namespace sdmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kMeasured: return "I";
    case Variant::kEstimated: return "II";
    case Variant::kIdentified: return "III";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "I" || s == "1" || s == "measured") return Variant::kMeasured;
  if (s == "II" || s == "2" || s == "estimated") return Variant::kEstimated;
  if (s == "III" || s == "3" || s == "identified") return Variant::kIdentified;
  throw std::invalid_argument("unknown variant '" + s + "' (expected I, II or III)");
}

VectorXd InitialStateSpec::sample(std::mt19937_64& rng) const {
  switch (kind) {
    case Kind::kPoint: return point;
    case Kind::kUniform: {
      VectorXd x(lower.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::uniform_real_distribution<double>(lower[i], upper[i])(rng);
      return x;
    }
    case Kind::kBeta: {
      // X/(X+Y) with X ~ Gamma(a), Y ~ Gamma(b).
      std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
      VectorXd x(lower.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double g1 = ga(rng), g2 = gb(rng);
        x[i] = lower[i] + (upper[i] - lower[i]) * g1 / (g1 + g2);
      }
      return x;
    }
  }
  return {};
}

DisturbanceModel Scenario::disturbance() const {
  return disturbance_kind == DisturbanceKind::kGaussian ? DisturbanceModel::gaussian(disturbance_covariance)
                                                         : DisturbanceModel::uniform(disturbance_half_width);
}

SigmaMode Scenario::resolved_sigma_mode() const {
  if (sigma_mode) return *sigma_mode;
  return disturbance_kind == DisturbanceKind::kGaussian ? SigmaMode::kGaussian : SigmaMode::kDistributionFree;
}

void Scenario::validate() const {
  const int n = nx(), m = nu();
  auto fail = [&](const std::string& what) { throw std::invalid_argument("scenario '" + name + "': " + what); };
  if (n == 0 || A.cols() != n || B.rows() != n || m == 0) fail("A must be square and B must have n_x rows");
  if (Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m) fail("Q or R has the wrong size");
  x_box.validate(n);
  u_box.validate(m);
  if (disturbance_kind == DisturbanceKind::kGaussian) {
    if (disturbance_covariance.rows() != n || disturbance_covariance.cols() != n) fail("disturbance covariance size");
  } else if (disturbance_half_width.size() != n || (disturbance_half_width.array() < 0).any()) {
    fail("disturbance half widths");
  }
  switch (init.kind) {
    case InitialStateSpec::Kind::kPoint:
      if (init.point.size() != n) fail("initial point size");
      break;
    case InitialStateSpec::Kind::kBeta:
      if (!(init.a > 0 && init.b > 0)) fail("Beta shapes must be positive");
      [[fallthrough]];
    case InitialStateSpec::Kind::kUniform:
      if (init.lower.size() != n || init.upper.size() != n || (init.lower.array() > init.upper.array()).any())
        fail("initial-state bounds");
      break;
  }
  if (horizon < 1) fail("horizon must be positive");
  if (!(eps_x > 0 && eps_x < 1 && eps_u > 0 && eps_u < 1)) fail("epsilon must lie in (0, 1)");
  if (gamma_level && !(*gamma_level > 0)) fail("gamma_level must be positive");
  if (excitation.kind == ExcitationSpec::Kind::kPrestabilized) {
    if (excitation.count_open < 1 || excitation.count_open + excitation.count_closed != T)
      fail("count_open + count_closed must equal T with count_open >= 1");
  }
  if (!(excitation.amplitude > 0)) fail("excitation amplitude must be positive");
  if (hankel_window < 0 || hankel_window > T) fail("hankel_window outside [0, T]");
  if (steps < 1 || samples < 1) fail("steps and samples must be positive");
  if (histogram_coordinate < 0 || histogram_coordinate >= n || histogram_bins < 1) fail("histogram settings");
  if (transient < 0 || transient >= steps) fail("transient must lie in [0, steps)");
}

namespace {

MatrixXd m11(double v) { return MatrixXd::Constant(1, 1, v); }
VectorXd v1(double v) { return VectorXd::Constant(1, v); }

Scenario scalar_base() {
  Scenario s;
  s.A = m11(2.0);
  s.B = m11(1.0);
  s.horizon = 25;
  s.Q = s.R = m11(1.0);
  s.x_box = BoxSet::symmetric(v1(2.0));
  s.u_box = BoxSet::symmetric(v1(3.0));
  s.eps_x = s.eps_u = 0.1;
  s.T = 100;
  s.excitation = {ExcitationSpec::Kind::kPrestabilized, 6, 94, 1.0};
  s.steps = 60;
  s.samples = 1000;
  s.histogram_steps = {0, 5, 10, 15, 20, 25, 30};
  return s;
}

}  // namespace

Scenario preset(const std::string& name) {
  if (name == "scalar_case1") {
    Scenario s = scalar_base();
    s.name = name;
    s.disturbance_kind = Scenario::DisturbanceKind::kGaussian;
    s.disturbance_covariance = m11(0.01);
    s.init = {InitialStateSpec::Kind::kUniform, v1(0.0), v1(2.0), 1.0, 1.0, {}};
    return s;
  }
  if (name == "scalar_case2" || name == "scalar_case2_wide") {
    Scenario s = scalar_base();
    s.name = name;
    s.disturbance_kind = Scenario::DisturbanceKind::kUniform;
    s.disturbance_half_width = v1(name == "scalar_case2" ? 0.173 : 0.346);
    s.init = {InitialStateSpec::Kind::kBeta, v1(0.0), v1(1.0), 0.5, 0.5, {}};
    return s;
  }
  if (name == "batch_reactor") {
    Scenario s;
    s.name = name;
    s.A.resize(4, 4);
    s.A << 1.178, 0.001, 0.511, -0.403,  //
        -0.051, 0.661, -0.011, 0.061,    //
        0.076, 0.335, 0.560, 0.382,      //
        0.0, 0.335, 0.089, 0.849;
    s.B.resize(4, 2);
    s.B << 0.004, -0.087,  //
        0.467, 0.001,      //
        0.213, -0.235,     //
        0.213, -0.016;
    s.disturbance_kind = Scenario::DisturbanceKind::kGaussian;
    s.disturbance_covariance = 1e-4 * MatrixXd::Identity(4, 4);
    s.init = {InitialStateSpec::Kind::kUniform, VectorXd::Constant(4, -5.0), VectorXd::Constant(4, 5.0), 1.0, 1.0, {}};
    s.horizon = 10;
    s.Q = MatrixXd::Identity(4, 4);
    s.R = MatrixXd::Identity(2, 2);
    s.x_box = BoxSet::free(4);
    s.u_box = BoxSet::free(2).constrain(0, -2.0, 2.0);
    s.eps_x = s.eps_u = 0.1;
    s.gamma_level = 1e-2;
    s.T = 1000;
    s.excitation = {ExcitationSpec::Kind::kPrestabilized, 20, 980, 1.0};
    s.hankel_window = 120;
    s.steps = 30;
    s.samples = 10;
    s.histogram_steps = {0, 5, 10, 15, 20, 25};
    s.transient = 10;
    return s;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"scalar_case1", "scalar_case2", "scalar_case2_wide", "batch_reactor"}; }

namespace {

nlohmann::json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd vec_from(const nlohmann::json& j) {
  const std::vector<double> v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Disabled coordinates are written as null bounds.
nlohmann::json box_json(const BoxSet& b) {
  nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
  for (int i = 0; i < b.dim(); ++i) {
    lo.push_back(b.enabled[i] ? nlohmann::json(b.lower[i]) : nlohmann::json());
    hi.push_back(b.enabled[i] ? nlohmann::json(b.upper[i]) : nlohmann::json());
  }
  return {{"lower", lo}, {"upper", hi}};
}

BoxSet box_from(const nlohmann::json& j) {
  const nlohmann::json& lo = j.at("lower");
  const nlohmann::json& hi = j.at("upper");
  if (lo.size() != hi.size()) throw std::invalid_argument("box: lower and upper differ in size");
  BoxSet b = BoxSet::free(static_cast<int>(lo.size()));
  for (int i = 0; i < b.dim(); ++i) {
    if (lo[i].is_null() != hi[i].is_null()) throw std::invalid_argument("box: coordinate half disabled");
    if (!lo[i].is_null()) b.constrain(i, lo[i].get<double>(), hi[i].get<double>());
  }
  return b;
}

const char* init_kind_name(InitialStateSpec::Kind k) {
  switch (k) {
    case InitialStateSpec::Kind::kUniform: return "uniform";
    case InitialStateSpec::Kind::kBeta: return "beta";
    case InitialStateSpec::Kind::kPoint: return "point";
  }
  return "?";
}

}  // namespace

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json init{{"kind", init_kind_name(s.init.kind)}};
  if (s.init.kind == InitialStateSpec::Kind::kPoint) {
    init["point"] = vec_json(s.init.point);
  } else {
    init["lower"] = vec_json(s.init.lower);
    init["upper"] = vec_json(s.init.upper);
    if (s.init.kind == InitialStateSpec::Kind::kBeta) {
      init["a"] = s.init.a;
      init["b"] = s.init.b;
    }
  }
  nlohmann::json dist;
  if (s.disturbance_kind == Scenario::DisturbanceKind::kGaussian)
    dist = {{"kind", "gaussian"}, {"covariance", matrix_to_json(s.disturbance_covariance)}};
  else
    dist = {{"kind", "uniform"}, {"half_width", vec_json(s.disturbance_half_width)}};

  nlohmann::json j{
      {"name", s.name},
      {"A", matrix_to_json(s.A)},
      {"B", matrix_to_json(s.B)},
      {"disturbance", dist},
      {"init", init},
      {"horizon", s.horizon},
      {"Q", matrix_to_json(s.Q)},
      {"R", matrix_to_json(s.R)},
      {"x_box", box_json(s.x_box)},
      {"u_box", box_json(s.u_box)},
      {"eps_x", s.eps_x},
      {"eps_u", s.eps_u},
      {"sigma_mode", s.sigma_mode ? (*s.sigma_mode == SigmaMode::kGaussian ? "gaussian" : "distribution_free")
                                  : "auto"},
      {"covariance_mode", s.covariance_mode == CovarianceMode::kSemidefinite ? "semidefinite" : "diagonal"},
      {"gamma_level", s.gamma_level ? nlohmann::json(*s.gamma_level) : nlohmann::json("auto")},
      {"T", s.T},
      {"excitation",
       {{"kind", s.excitation.kind == ExcitationSpec::Kind::kPrestabilized ? "prestabilized" : "open_loop_random"},
        {"count_open", s.excitation.count_open},
        {"count_closed", s.excitation.count_closed},
        {"amplitude", s.excitation.amplitude}}},
      {"hankel_window", s.hankel_window},
      {"variant", to_string(s.variant)},
      {"steps", s.steps},
      {"samples", s.samples},
      {"seed", s.seed},
      {"beta", s.beta},
      {"slack_max", s.slack_max},
      {"histogram_steps", s.histogram_steps},
      {"histogram_coordinate", s.histogram_coordinate},
      {"histogram_bins", s.histogram_bins},
      {"transient", s.transient}};
  return j;
}

Scenario scenario_from_json(const nlohmann::json& j, const Scenario& base) {
  Scenario s = j.contains("preset") ? preset(j.at("preset").get<std::string>()) : base;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  get("name", s.name);
  if (j.contains("A")) s.A = matrix_from_json(j.at("A"));
  if (j.contains("B")) s.B = matrix_from_json(j.at("B"));
  if (j.contains("disturbance")) {
    const nlohmann::json& d = j.at("disturbance");
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "gaussian") {
      s.disturbance_kind = Scenario::DisturbanceKind::kGaussian;
      s.disturbance_covariance = matrix_from_json(d.at("covariance"));
    } else if (kind == "uniform") {
      s.disturbance_kind = Scenario::DisturbanceKind::kUniform;
      s.disturbance_half_width = vec_from(d.at("half_width"));
    } else {
      throw std::invalid_argument("unknown disturbance kind '" + kind + "'");
    }
  }
  if (j.contains("init")) {
    const nlohmann::json& d = j.at("init");
    const std::string kind = d.at("kind").get<std::string>();
    InitialStateSpec init;
    if (kind == "point") {
      init.kind = InitialStateSpec::Kind::kPoint;
      init.point = vec_from(d.at("point"));
    } else if (kind == "uniform" || kind == "beta") {
      init.kind = kind == "uniform" ? InitialStateSpec::Kind::kUniform : InitialStateSpec::Kind::kBeta;
      init.lower = vec_from(d.at("lower"));
      init.upper = vec_from(d.at("upper"));
      init.a = d.value("a", 1.0);
      init.b = d.value("b", 1.0);
    } else {
      throw std::invalid_argument("unknown init kind '" + kind + "'");
    }
    s.init = init;
  }
  get("horizon", s.horizon);
  if (j.contains("Q")) s.Q = matrix_from_json(j.at("Q"));
  if (j.contains("R")) s.R = matrix_from_json(j.at("R"));
  if (j.contains("x_box")) s.x_box = box_from(j.at("x_box"));
  if (j.contains("u_box")) s.u_box = box_from(j.at("u_box"));
  get("eps_x", s.eps_x);
  get("eps_u", s.eps_u);
  if (j.contains("sigma_mode")) {
    const std::string m = j.at("sigma_mode").get<std::string>();
    if (m == "auto") s.sigma_mode.reset();
    else if (m == "gaussian") s.sigma_mode = SigmaMode::kGaussian;
    else if (m == "distribution_free") s.sigma_mode = SigmaMode::kDistributionFree;
    else throw std::invalid_argument("unknown sigma_mode '" + m + "'");
  }
  if (j.contains("covariance_mode")) {
    const std::string m = j.at("covariance_mode").get<std::string>();
    if (m == "semidefinite") s.covariance_mode = CovarianceMode::kSemidefinite;
    else if (m == "diagonal") s.covariance_mode = CovarianceMode::kDiagonal;
    else throw std::invalid_argument("unknown covariance_mode '" + m + "'");
  }
  if (j.contains("gamma_level")) {
    const nlohmann::json& g = j.at("gamma_level");
    if (g.is_string() && g.get<std::string>() == "auto") s.gamma_level.reset();
    else s.gamma_level = g.get<double>();
  }
  get("T", s.T);
  if (j.contains("excitation")) {
    const nlohmann::json& e = j.at("excitation");
    const std::string kind = e.value("kind", std::string("prestabilized"));
    if (kind == "prestabilized") s.excitation.kind = ExcitationSpec::Kind::kPrestabilized;
    else if (kind == "open_loop_random") s.excitation.kind = ExcitationSpec::Kind::kOpenLoopRandom;
    else throw std::invalid_argument("unknown excitation kind '" + kind + "'");
    s.excitation.count_open = e.value("count_open", s.excitation.count_open);
    s.excitation.count_closed = e.value("count_closed", s.excitation.count_closed);
    s.excitation.amplitude = e.value("amplitude", s.excitation.amplitude);
  }
  get("hankel_window", s.hankel_window);
  if (j.contains("variant")) s.variant = variant_from_string(j.at("variant").get<std::string>());
  get("steps", s.steps);
  get("samples", s.samples);
  get("seed", s.seed);
  get("beta", s.beta);
  get("slack_max", s.slack_max);
  get("histogram_steps", s.histogram_steps);
  get("histogram_coordinate", s.histogram_coordinate);
  get("histogram_bins", s.histogram_bins);
  get("transient", s.transient);
  s.validate();
  return s;
}

}  // namespace sdmpc
