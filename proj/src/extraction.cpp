#include "tminfer/extraction.hpp"

#include <cmath>
#include <stdexcept>

namespace tminfer {

namespace {

double mean_output_beta(const CouplingEstimate& est) {
  const Index n_half = est.dims.n_half();
  double sum = 0.0;
  Index count = 0;
  for (std::size_t r = 0; r < est.rows.size(); ++r)
    if (est.fitted_sites[r] >= n_half) {
      sum += est.rows[r].a;
      ++count;
    }
  if (count == 0) throw std::invalid_argument("estimate has no output rows");
  return sum / static_cast<double>(count);
}

void require_all_sites(const CouplingEstimate& est, const char* what) {
  if (est.scope != FitScope::all_sites)
    throw std::invalid_argument(std::string(what) + " needs an all-sites estimate");
}

}  // namespace

TmExtraction extract_tm(const CouplingEstimate& est) {
  const Index n_half = est.dims.n_half();
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n_half, n_half);
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(n_half);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_half);
  Eigen::Array<bool, Eigen::Dynamic, 1> seen = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n_half, false);
  TmExtraction out;
  if (est.scope == FitScope::all_sites) out.output_residual = Eigen::MatrixXd::Zero(n_half, n_half);

  for (std::size_t r = 0; r < est.rows.size(); ++r) {
    const Index site = est.fitted_sites[r];
    if (site < n_half) continue;
    const Index g = site - n_half;
    const auto& p = est.rows[r];
    if (!(p.a > 0.0)) throw std::invalid_argument("extract_tm: non-positive curvature");
    t.row(g) = p.k.head(n_half).transpose() / (2.0 * p.a);
    beta(g) = p.a;
    sigma(g) = 1.0 / std::sqrt(2.0 * p.a);
    if (est.scope == FitScope::all_sites) {
      out.output_residual.row(g) = p.k.tail(n_half).transpose() / (2.0 * p.a);
      out.output_residual(g, g) = 0.0;
    }
    seen(g) = true;
    if (r < est.converged.size() && !est.converged[r]) out.flagged_rows.push_back(g);
  }
  if (!seen.all()) throw std::invalid_argument("extract_tm: estimate is missing output rows");

  const MatrixRole role = est.direction == Direction::forward ? MatrixRole::direct : MatrixRole::inverse;
  out.tm = TransmissionMatrix(est.dims, std::move(t), role);
  out.noise = ChannelNoiseEstimate{std::move(sigma), std::move(beta)};
  return out;
}

GramianExtraction extract_gramian(const CouplingEstimate& est) {
  require_all_sites(est, "extract_gramian");
  const Index n_half = est.dims.n_half();
  const double beta = mean_output_beta(est);

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n_half, n_half);
  for (std::size_t r = 0; r < est.rows.size(); ++r) {
    const Index a = est.fitted_sites[r];
    if (a >= n_half) continue;
    const auto& p = est.rows[r];
    u.row(a) = -p.k.head(n_half).transpose() / (2.0 * beta);
    u(a, a) = p.a / beta;
  }

  const Eigen::MatrixXd t = extract_tm(est).tm.entries;
  const Eigen::MatrixXd gram = t.transpose() * t;
  GramianExtraction out;
  out.balance = (u - gram).norm() / gram.norm();
  out.u = std::move(u);
  out.input_beta = beta;
  return out;
}

CouplingEstimate symmetrize(const CouplingEstimate& est) {
  require_all_sites(est, "symmetrize");
  const Index n = est.dims.n();
  if (Index(est.rows.size()) != n) throw std::invalid_argument("symmetrize: expected one row per site");
  const Index n_half = est.dims.n_half();
  const double input_beta = mean_output_beta(est);

  Eigen::VectorXd beta(n);
  Eigen::MatrixXd j(n, n);
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> active(n, n);
  for (Index r = 0; r < n; ++r) {
    const Index site = est.fitted_sites[r];
    if (site != r) throw std::invalid_argument("symmetrize: rows must be in site order");
    beta(r) = site >= n_half ? est.rows[r].a : input_beta;
    j.row(r) = est.rows[r].k.transpose() / beta(r);
    active.row(r) = est.masks[r].active.transpose();
  }
  const Eigen::MatrixXd j_sym = 0.5 * (j + j.transpose());
  const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> union_mask = active || active.transpose();

  CouplingEstimate out = est;
  for (Index r = 0; r < n; ++r) {
    out.rows[r].k = beta(r) * j_sym.row(r).transpose();
    out.rows[r].k(r) = 0.0;
    out.masks[r].active = union_mask.row(r).transpose();
    out.masks[r].active(r) = false;
  }
  return out;
}

CouplingEstimate parameterize(const TransmissionMatrix& tm, const Eigen::VectorXd& sigma, FitScope scope) {
  const Index n_half = tm.dims.n_half();
  const Index n = tm.dims.n();
  if (sigma.size() != n_half || !(sigma.array() > 0.0).all())
    throw std::invalid_argument("parameterize: sigma must be positive per output channel");
  const Eigen::VectorXd beta = (2.0 * sigma.array().square()).inverse().matrix();
  const Eigen::MatrixXd& t = tm.entries;

  CouplingEstimate est;
  est.dims = tm.dims;
  est.direction = tm.role == MatrixRole::direct ? Direction::forward : Direction::reversed;
  est.scope = scope;

  auto push = [&](RowParamsd p) {
    RowMask m{p.site, p.k.array() != 0.0};
    m.active(p.site) = false;
    est.fitted_sites.push_back(p.site);
    est.rows.push_back(std::move(p));
    est.masks.push_back(std::move(m));
    est.converged.push_back(true);
    est.iterations.push_back(0);
  };

  if (scope == FitScope::all_sites) {
    const double b = beta.mean();
    const Eigen::MatrixXd u = t.transpose() * t;
    for (Index a = 0; a < n_half; ++a) {
      RowParamsd p = RowParamsd::cold(a, n);
      p.a = b * u(a, a);
      if (!(p.a > 0.0)) throw std::invalid_argument("parameterize: input site with an empty column");
      p.k.head(n_half) = -2.0 * b * u.row(a).transpose();
      p.k(a) = 0.0;
      p.k.tail(n_half) = 2.0 * b * t.col(a);
      push(std::move(p));
    }
  }
  for (Index g = 0; g < n_half; ++g) {
    RowParamsd p = RowParamsd::cold(n_half + g, n);
    p.a = beta(g);
    p.k.head(n_half) = 2.0 * beta(g) * t.row(g).transpose();
    push(std::move(p));
  }
  return est;
}

}  // namespace tminfer
