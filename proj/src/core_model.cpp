#include "tminfer/core_model.hpp"

#include <cmath>
#include <stdexcept>

namespace tminfer {

Dimensions Dimensions::square(int w) {
  if (w < 2) throw std::invalid_argument("frame side w must be at least 2");
  return Dimensions{w};
}

const char* to_string(MatrixRole role) {
  return role == MatrixRole::direct ? "direct" : "inverse";
}

const char* to_string(Direction direction) {
  return direction == Direction::forward ? "forward" : "reversed";
}

Direction parse_direction(const std::string& text) {
  if (text == "forward") return Direction::forward;
  if (text == "reversed") return Direction::reversed;
  throw std::invalid_argument("unknown direction '" + text + "'");
}

TransmissionMatrix::TransmissionMatrix(Dimensions d, Eigen::MatrixXd e, MatrixRole r)
    : dims(d), entries(std::move(e)), role(r) {
  if (entries.rows() != dims.n_half() || entries.cols() != dims.n_half())
    throw std::invalid_argument("transmission matrix must be n_half x n_half");
  if (!entries.allFinite())
    throw std::invalid_argument("transmission matrix has non-finite entries");
}

NoiseSpec::NoiseSpec(Eigen::VectorXd s) : sigma(std::move(s)) {
  if (!sigma.allFinite() || (sigma.array() < 0.0).any())
    throw std::invalid_argument("noise sigma must be finite and nonnegative");
}

NoiseSpec NoiseSpec::homogeneous(double s, Index n_half) {
  return NoiseSpec(Eigen::VectorXd::Constant(n_half, s));
}

double NoiseSpec::nominal() const { return sigma.size() ? sigma.mean() : 0.0; }

Dataset::Dataset(Dimensions dims, Eigen::MatrixXd inputs, Eigen::MatrixXd outputs,
                 Direction direction, DatasetMeta meta)
    : dims_(dims),
      inputs_(std::move(inputs)),
      outputs_(std::move(outputs)),
      direction_(direction),
      meta_(std::move(meta)) {
  if (inputs_.rows() < 1) throw std::invalid_argument("dataset needs at least one sample");
  if (inputs_.rows() != outputs_.rows() || inputs_.cols() != dims_.n_half() ||
      outputs_.cols() != dims_.n_half())
    throw std::invalid_argument("dataset blocks do not match dimensions");
  if (!inputs_.allFinite() || !outputs_.allFinite())
    throw std::invalid_argument("dataset has non-finite values");
}

Sample Dataset::sample(Index m) const {
  return Sample{inputs_.row(m).transpose(), outputs_.row(m).transpose()};
}

Eigen::MatrixXd Dataset::sites() const {
  Eigen::MatrixXd s(size(), dims_.n());
  s << inputs_, outputs_;
  return s;
}

TransmissionMatrix build_random_tm(const Dimensions& dims, double density, Rng& rng) {
  if (!(density > 0.0) || density > 1.0)
    throw std::invalid_argument("density must lie in (0, 1]");
  const Index n = dims.n_half();
  if (density * static_cast<double>(n) < 1.0)
    throw std::invalid_argument("density * n_half must be at least 1");

  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c)
      if (rng.uniform() < density) t(r, c) = 1.0;

  for (Index r = 0; r < n; ++r) {
    if (t.row(r).sum() == 0.0) t(r, static_cast<Index>(rng.index(n))) = 1.0;
    t.row(r) /= t.row(r).sum();
  }
  return TransmissionMatrix(dims, std::move(t), MatrixRole::direct);
}

TransmissionMatrix build_random_tm(const Dimensions& dims, double density, std::uint64_t seed) {
  Rng rng(seed);
  return build_random_tm(dims, density, rng);
}

Eigen::VectorXd transmit(const TransmissionMatrix& tm, const Eigen::VectorXd& input,
                         const NoiseSpec& noise, Rng& rng) {
  const Index n = tm.entries.rows();
  if (input.size() != tm.entries.cols() || noise.sigma.size() != n)
    throw std::invalid_argument("transmit: dimension mismatch");
  Eigen::VectorXd out = tm.entries * input;
  for (Index g = 0; g < n; ++g) out(g) += noise.sigma(g) * rng.normal();
  return out;
}

Dataset generate_dataset(const TransmissionMatrix& tm, Index m_samples, const NoiseSpec& noise,
                         std::uint64_t seed) {
  if (m_samples < 1) throw std::invalid_argument("m_samples must be at least 1");
  const Index n = tm.dims.n_half();
  Rng rng(seed);
  Eigen::MatrixXd inputs(m_samples, n);
  for (Index m = 0; m < m_samples; ++m)
    for (Index a = 0; a < n; ++a) inputs(m, a) = rng.uniform();

  Eigen::MatrixXd outputs(m_samples, n);
  for (Index m = 0; m < m_samples; ++m)
    outputs.row(m) = transmit(tm, inputs.row(m).transpose(), noise, rng).transpose();

  return Dataset(tm.dims, std::move(inputs), std::move(outputs), Direction::forward,
                 DatasetMeta{seed, noise.nominal(), "synthetic"});
}

Dataset reverse_dataset(const Dataset& ds) {
  if (ds.direction() == Direction::reversed)
    throw std::invalid_argument("dataset is already reversed");
  return Dataset(ds.dims(), ds.outputs(), ds.inputs(), Direction::reversed, ds.meta());
}

GroundTruthCoupling assemble_ground_truth_coupling(const TransmissionMatrix& tm) {
  if (tm.role != MatrixRole::direct)
    throw std::invalid_argument("ground-truth coupling needs a direct matrix");
  const Index n = tm.dims.n_half();
  const Eigen::MatrixXd& t = tm.entries;
  Eigen::MatrixXd j(2 * n, 2 * n);
  j.topLeftCorner(n, n) = -(t.transpose() * t);
  j.topRightCorner(n, n) = 2.0 * t.transpose();
  j.bottomLeftCorner(n, n) = 2.0 * t;
  j.bottomRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
  // U = T^T T is symmetric in exact arithmetic; pin it bitwise
  j.topLeftCorner(n, n) = (0.5 * (j.topLeftCorner(n, n) + j.topLeftCorner(n, n).transpose())).eval();
  return GroundTruthCoupling{std::move(j)};
}

Index support_size(const Eigen::MatrixXd& m) { return (m.array() != 0.0).count(); }

}  // namespace tminfer
