#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tminfer/core_model.hpp"
#include "tminfer/lbfgs.hpp"
#include "tminfer/pseudolikelihood.hpp"

namespace tminfer {

struct OptimOptions {
  int max_iters = 500;
  double grad_tol = 1e-6;
  double decrement_tol = 1e-12;
  int memory = 10;
  /// Trial points with a <= a_floor are rejected by the line search.
  double a_floor = 1e-12;
  /// Added to the residual variance inside the fitted objective; caps the
  /// curvature of exactly determined rows at 1 / (2 variance_floor).
  double variance_floor = 1e-12;
  /// 0 = TMINFER_THREADS or hardware concurrency.
  int threads = 0;

  void validate() const;
  LbfgsSettings<double> lbfgs() const;
};

/// Which sites get a conditional model: the output half only (regressors are
/// the inputs), or every site against all others.
enum class FitScope { output_sites, all_sites };

const char* to_string(FitScope scope);
FitScope parse_scope(const std::string& text);

struct RowFit {
  RowParamsd params;
  bool converged = false;
  int iterations = 0;
  /// Sample-averaged negative log-pseudolikelihood at params.
  double neg_logpl = 0.0;
};

/// Fitted rows plus their supports. rows[r], masks[r] belong to fitted_sites[r].
struct CouplingEstimate {
  Dimensions dims;
  Direction direction = Direction::forward;
  FitScope scope = FitScope::output_sites;
  Index samples = 0;
  std::string dataset_fingerprint;
  std::vector<Index> fitted_sites;
  std::vector<RowParamsd> rows;
  std::vector<RowMask> masks;
  std::vector<bool> converged;
  std::vector<int> iterations;
  /// Sum over samples and fitted rows of the log-pseudolikelihood.
  double total_pl = 0.0;

  Index active_couplings() const;
  bool all_converged() const;
};

/// Dataset prepared for repeated row fits: the site factor is computed once.
class FitProblem {
 public:
  FitProblem(const Dataset& ds, FitScope scope);

  const Dataset& dataset() const { return *ds_; }
  const SiteMoments<double>& moments() const { return moments_; }
  FitScope scope() const { return scope_; }
  const std::vector<Index>& fitted_sites() const { return sites_; }
  const std::string& fingerprint() const { return fingerprint_; }

  /// Largest mask the scope allows, one per fitted site.
  std::vector<RowMask> full_masks() const;

 private:
  const Dataset* ds_;
  FitScope scope_;
  SiteMoments<double> moments_;
  std::vector<Index> sites_;
  std::string fingerprint_;
};

/// Content hash of the sample values and dimensions.
std::string dataset_fingerprint(const Dataset& ds);

RowFit minimize_row(const SiteMoments<double>& moments, const RowMask& mask,
                    const std::optional<RowParamsd>& init, const OptimOptions& opts);
RowFit minimize_row(Index site, const Dataset& ds, const RowMask& mask,
                    const std::optional<RowParamsd>& init, const OptimOptions& opts);

/// Fits every row in scope. `warm` (same sites) seeds each row with its
/// previous parameters, restricted to the new mask; otherwise a = 1, k = 0.
CouplingEstimate fit_all_rows(const FitProblem& problem, const std::vector<RowMask>& masks,
                              const OptimOptions& opts, const CouplingEstimate* warm = nullptr);
CouplingEstimate fit_all_rows(const Dataset& ds, const std::vector<RowMask>& masks, FitScope scope,
                              const OptimOptions& opts, const CouplingEstimate* warm = nullptr);

}  // namespace tminfer
