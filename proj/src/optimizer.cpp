#include "tminfer/optimizer.hpp"

#include <cstring>
#include <stdexcept>

#include "tminfer/checksum.hpp"
#include "tminfer/parallel.hpp"

namespace tminfer {

void OptimOptions::validate() const {
  if (max_iters <= 0 || !(grad_tol > 0) || !(decrement_tol > 0) || memory <= 0 || !(a_floor > 0) ||
      !(variance_floor >= 0) || threads < 0)
    throw std::invalid_argument("optimizer options must be positive");
}

LbfgsSettings<double> OptimOptions::lbfgs() const {
  LbfgsSettings<double> s;
  s.max_iters = max_iters;
  s.grad_tol = grad_tol;
  s.decrement_tol = decrement_tol;
  s.memory = memory;
  return s;
}

const char* to_string(FitScope scope) {
  return scope == FitScope::output_sites ? "output" : "all";
}

FitScope parse_scope(const std::string& text) {
  if (text == "output") return FitScope::output_sites;
  if (text == "all") return FitScope::all_sites;
  throw std::invalid_argument("unknown scope '" + text + "' (expected output or all)");
}

Index CouplingEstimate::active_couplings() const {
  Index total = 0;
  for (const auto& m : masks) total += m.count();
  return total;
}

bool CouplingEstimate::all_converged() const {
  for (bool c : converged)
    if (!c) return false;
  return true;
}

std::string dataset_fingerprint(const Dataset& ds) {
  std::string bytes;
  auto append = [&bytes](const Eigen::MatrixXd& m) {
    // row-major sample order, native little-endian doubles
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        char buf[sizeof(double)];
        std::memcpy(buf, &v, sizeof v);
        bytes.append(buf, sizeof buf);
      }
  };
  bytes += "w=" + std::to_string(ds.dims().w) + ";m=" + std::to_string(ds.size()) + ";" +
           to_string(ds.direction()) + ";";
  append(ds.inputs());
  append(ds.outputs());
  return sha256_hex(bytes);
}

FitProblem::FitProblem(const Dataset& ds, FitScope scope)
    : ds_(&ds),
      scope_(scope),
      moments_(SiteMoments<double>::from_sites(ds.sites())),
      fingerprint_(dataset_fingerprint(ds)) {
  const Index n = ds.dims().n();
  const Index first = scope == FitScope::output_sites ? ds.dims().n_half() : 0;
  for (Index i = first; i < n; ++i) sites_.push_back(i);
}

std::vector<RowMask> FitProblem::full_masks() const {
  const Index n = ds_->dims().n();
  std::vector<RowMask> masks;
  masks.reserve(sites_.size());
  for (Index i : sites_)
    masks.push_back(scope_ == FitScope::output_sites ? prefix_mask(i, n, ds_->dims().n_half())
                                                     : full_mask(i, n));
  return masks;
}

RowFit minimize_row(const SiteMoments<double>& moments, const RowMask& mask,
                    const std::optional<RowParamsd>& init, const OptimOptions& opts) {
  opts.validate();
  if (moments.samples() < 1) throw std::invalid_argument("minimize_row: empty dataset");
  const Index n = moments.sites();
  RowParamsd start = init ? *init : RowParamsd::cold(mask.site, n);
  if (start.site != mask.site || start.k.size() != n)
    throw std::invalid_argument("minimize_row: initial parameters do not match the row");
  if (!(start.a > opts.a_floor)) throw std::invalid_argument("minimize_row: initial a must be positive");
  start.k = mask.active.select(start.k, 0.0);

  const RowObjective<double> objective(moments, mask, opts.variance_floor, opts.a_floor);
  Eigen::VectorXd x = objective.pack(start);
  const auto report = lbfgs_minimize<double>(objective, x, opts.lbfgs());

  RowFit fit;
  fit.params = objective.unpack(x);
  fit.converged = report.status == LbfgsStatus::converged;
  fit.iterations = report.iterations;
  fit.neg_logpl = objective.neg_logpl(x);
  return fit;
}

RowFit minimize_row(Index site, const Dataset& ds, const RowMask& mask,
                    const std::optional<RowParamsd>& init, const OptimOptions& opts) {
  if (mask.site != site) throw std::invalid_argument("minimize_row: mask belongs to another site");
  const auto moments = SiteMoments<double>::from_sites(ds.sites());
  return minimize_row(moments, mask, init, opts);
}

CouplingEstimate fit_all_rows(const FitProblem& problem, const std::vector<RowMask>& masks,
                              const OptimOptions& opts, const CouplingEstimate* warm) {
  opts.validate();
  const auto& sites = problem.fitted_sites();
  if (sites.empty() || masks.empty()) throw std::invalid_argument("fit_all_rows: empty scope");
  if (masks.size() != sites.size()) throw std::invalid_argument("fit_all_rows: one mask per fitted site");
  for (std::size_t r = 0; r < sites.size(); ++r)
    if (masks[r].site != sites[r]) throw std::invalid_argument("fit_all_rows: mask order mismatch");
  if (warm && warm->fitted_sites != sites)
    throw std::invalid_argument("fit_all_rows: warm start fitted different sites");

  const std::size_t rows = sites.size();
  std::vector<RowFit> fits(rows);
  parallel_for(rows, resolve_threads(opts.threads), [&](std::size_t r) {
    std::optional<RowParamsd> init;
    if (warm) init = warm->rows[r];
    fits[r] = minimize_row(problem.moments(), masks[r], init, opts);
  });

  const Dataset& ds = problem.dataset();
  CouplingEstimate est;
  est.dims = ds.dims();
  est.direction = ds.direction();
  est.scope = problem.scope();
  est.samples = ds.size();
  est.dataset_fingerprint = problem.fingerprint();
  est.fitted_sites = sites;
  est.masks = masks;
  est.rows.reserve(rows);
  double neg = 0.0;
  for (auto& f : fits) {
    neg += f.neg_logpl;
    est.rows.push_back(std::move(f.params));
    est.converged.push_back(f.converged);
    est.iterations.push_back(f.iterations);
  }
  est.total_pl = -static_cast<double>(ds.size()) * neg;
  return est;
}

CouplingEstimate fit_all_rows(const Dataset& ds, const std::vector<RowMask>& masks, FitScope scope,
                              const OptimOptions& opts, const CouplingEstimate* warm) {
  const FitProblem problem(ds, scope);
  return fit_all_rows(problem, masks, opts, warm);
}

}  // namespace tminfer
