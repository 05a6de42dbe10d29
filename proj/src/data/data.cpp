#include "sdmpc/data.hpp"

#include <string>

namespace sdmpc {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t run, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

void check_plant(const Plant& p) {
  if (p.A.rows() != p.A.cols() || p.B.rows() != p.A.rows() || p.disturbance.dim() != p.nx())
    throw std::invalid_argument("Plant: inconsistent dimensions");
}

}  // namespace

Trajectory simulate(const Plant& plant, const Policy& policy, const Eigen::VectorXd& x0, int steps,
                    std::mt19937_64& rng) {
  check_plant(plant);
  if (x0.size() != plant.nx() || steps < 0) throw std::invalid_argument("simulate: bad x0 or step count");
  Trajectory t;
  t.x.resize(plant.nx(), steps + 1);
  t.u.resize(plant.nu(), steps);
  t.w.resize(plant.nx(), steps);
  t.x.col(0) = x0;
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd uk = policy(k, t.x.col(k));
    if (uk.size() != plant.nu()) throw std::invalid_argument("simulate: policy returned wrong input size");
    t.u.col(k) = uk;
    t.w.col(k) = plant.disturbance.realize(plant.disturbance.sample_germ(rng));
    t.x.col(k + 1) = plant.A * t.x.col(k) + plant.B * uk + t.w.col(k);
  }
  return t;
}

Trajectory simulate(const Plant& plant, const Eigen::MatrixXd& u, const Eigen::VectorXd& x0, int steps,
                    std::mt19937_64& rng) {
  if (u.rows() != plant.nu() || u.cols() < steps) throw std::invalid_argument("simulate: input sequence too short");
  return simulate(plant, [&u](int k, const Eigen::VectorXd&) -> Eigen::VectorXd { return u.col(k); }, x0, steps, rng);
}

Trajectory simulate(const Plant& plant, const Eigen::MatrixXd& u, const Eigen::VectorXd& x0, int steps) {
  std::mt19937_64 rng = make_rng(plant.seed);
  return simulate(plant, u, x0, steps, rng);
}

Eigen::MatrixXd DataRecord::D() const {
  Eigen::MatrixXd d(nx() + nu(), length());
  d << X(), u;
  return d;
}

void DataRecord::validate() const {
  if (x.cols() != u.cols() + 1 || w.cols() != u.cols() || w.rows() != x.rows())
    throw std::invalid_argument("DataRecord: inconsistent shapes");
}

DataRecord make_record(const Trajectory& traj, DisturbanceSource source) {
  DataRecord r{traj.x, traj.u, traj.w, source};
  r.validate();
  return r;
}

DataRecord window(const DataRecord& record, int first, int T) {
  if (first < 0 || T < 1 || first + T > record.length()) throw std::invalid_argument("window: out of range");
  return DataRecord{record.x.middleCols(first, T + 1), record.u.middleCols(first, T), record.w.middleCols(first, T),
                    record.source};
}

DataRecord with_estimated_disturbances(const DataRecord& record) {
  DataRecord r = record;
  r.w = estimate_disturbances(record.x, record.u);
  r.source = DisturbanceSource::kEstimated;
  return r;
}

int numerical_rank(const Eigen::MatrixXd& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  return static_cast<int>((s.array() > rel_tol * s[0]).count());
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& m, double rel_tol) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  if (s.size() > 0 && s[0] > 0.0)
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] > rel_tol * s[0]) inv[i] = 1.0 / s[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd hankel(const Eigen::Ref<const Eigen::MatrixXd>& signal, int depth) {
  const Eigen::Index dim = signal.rows(), T = signal.cols();
  if (depth < 1 || T < depth) throw std::invalid_argument("hankel: signal shorter than depth");
  const Eigen::Index cols = T - depth + 1;
  Eigen::MatrixXd h(depth * dim, cols);
  for (int i = 0; i < depth; ++i) h.middleRows(i * dim, dim) = signal.middleCols(i, cols);
  return h;
}

bool is_persistently_exciting(const Eigen::Ref<const Eigen::MatrixXd>& signal, int order, double tol) {
  if (order < 1) throw std::invalid_argument("is_persistently_exciting: order must be positive");
  const Eigen::Index rows = order * signal.rows();
  if (signal.cols() < order || signal.cols() - order + 1 < rows) return false;
  return numerical_rank(hankel(signal, order), tol) == rows;
}

namespace {

Eigen::MatrixXd stacked_data(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& u) {
  if (x.cols() != u.cols() + 1) throw std::invalid_argument("data: x must have one more sample than u");
  Eigen::MatrixXd d(x.rows() + u.rows(), u.cols());
  d << x.leftCols(u.cols()), u;
  if (numerical_rank(d) < d.rows()) throw InsufficientExcitation("data: [X; U] is rank deficient");
  return d;
}

}  // namespace

Eigen::MatrixXd estimate_disturbances(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& u) {
  const Eigen::MatrixXd d = stacked_data(x, u);
  const Eigen::MatrixXd xp = x.rightCols(u.cols());
  return xp - (xp * pinv(d)) * d;
}

LinearModel identify_model(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::MatrixXd>& u) {
  const Eigen::MatrixXd d = stacked_data(x, u);
  const Eigen::MatrixXd theta = x.rightCols(u.cols()) * pinv(d);
  return {theta.leftCols(x.rows()), theta.rightCols(u.rows())};
}

DisturbanceEstimator::DisturbanceEstimator(const DataRecord& record) {
  const Eigen::MatrixXd d = stacked_data(record.x, record.u);
  theta_ = record.Xplus() * pinv(d);
  gram_inv_ = (d * d.transpose()).inverse();
}

Eigen::VectorXd DisturbanceEstimator::estimate(const Eigen::Ref<const Eigen::VectorXd>& x_prev,
                                               const Eigen::Ref<const Eigen::VectorXd>& u_prev,
                                               const Eigen::Ref<const Eigen::VectorXd>& x_now) const {
  Eigen::VectorXd d(x_prev.size() + u_prev.size());
  d << x_prev, u_prev;
  if (d.size() != theta_.cols()) throw std::invalid_argument("DisturbanceEstimator: dimension mismatch");
  return (x_now - theta_ * d) / (1.0 + d.dot(gram_inv_ * d));
}

Eigen::MatrixXd HankelStack::matrix() const {
  Eigen::MatrixXd s(rows(), cols());
  s << Hx, Hu, Hw;
  return s;
}

HankelStack build_stack(const DataRecord& record, int horizon) {
  record.validate();
  const int T = record.length(), nx = record.nx(), nu = record.nu();
  if (horizon < 1 || T < horizon) throw std::invalid_argument("build_stack: horizon exceeds data length");
  Eigen::MatrixXd uw(nu + nx, T);
  uw << record.u, record.w;
  if (!is_persistently_exciting(uw, nx + horizon + 1))
    throw InsufficientExcitation("build_stack: (u, w) not persistently exciting of order " + std::to_string(nx + horizon + 1));
  HankelStack s;
  s.horizon = horizon;
  s.nx = nx;
  s.nu = nu;
  s.Hx = hankel(record.x, horizon + 1);
  s.Hu = hankel(record.u, horizon);
  s.Hw = hankel(record.w, horizon);
  return s;
}

double stack_residual(const HankelStack& stack, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::MatrixXd>& u, const Eigen::Ref<const Eigen::MatrixXd>& w) {
  const int N = stack.horizon;
  if (x.rows() != stack.nx || x.cols() != N + 1 || u.rows() != stack.nu || u.cols() != N || w.rows() != stack.nx ||
      w.cols() != N)
    throw std::invalid_argument("stack_residual: trajectory shape");
  Eigen::VectorXd z(stack.rows());
  z << x.reshaped(), u.reshaped(), w.reshaped();
  const Eigen::MatrixXd s = stack.matrix();
  return (s * (pinv(s) * z) - z).norm();
}

}  // namespace sdmpc
