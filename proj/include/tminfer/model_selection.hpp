#pragma once

#include <memory>
#include <vector>

#include "tminfer/optimizer.hpp"

namespace tminfer {

/// How the BIC counts parameters and scales the pseudolikelihood. The
/// default counts one curvature per fitted row and uses the sample-summed PL.
struct BicConvention {
  bool count_curvatures = true;
  bool mean_pl = false;
};

/// k ln(M) - 2 PL.
double bic_score(double k_free, Index m_samples, double total_pl);

struct DecimationRecord {
  Index active_couplings = 0;
  /// Free parameters entering the BIC.
  Index k_free = 0;
  double total_pl = 0.0;
  double bic = 0.0;
  bool all_converged = true;
  /// Refit estimate at this support (its masks are the snapshot).
  std::shared_ptr<const CouplingEstimate> estimate;
};

struct DecimationPath {
  std::vector<DecimationRecord> records;
  std::size_t selected = 0;
};

struct DecimationOptions {
  /// Coarse batch: this fraction of the remaining active couplings.
  double fraction = 0.1;
  Index min_batch = 1;
  /// Revisit the bracket around the coarse BIC minimum with smaller batches
  /// until neighbouring records differ by one coupling.
  bool refine = true;
  int max_refine_passes = 64;
  FitScope scope = FitScope::output_sites;
  BicConvention bic;
  OptimOptions optim;

  void validate() const;
};

/// Deactivates the `batch` active couplings of smallest |k| over all fitted
/// rows (ties broken by row, then column). Curvatures are never removed.
std::vector<RowMask> decimate_step(const CouplingEstimate& estimate, Index batch);

/// Index of the minimum-BIC record; ties go to the smaller model.
std::size_t select_min_bic(const std::vector<DecimationRecord>& records);

DecimationRecord make_record(const CouplingEstimate& estimate, const BicConvention& bic);

struct DecimationResult {
  DecimationPath path;
  CouplingEstimate best;
};

/// Fit, score, decimate, refit (warm) until no couplings remain. `initial`
/// must be a full-support fit of the same dataset and scope; it is computed
/// when absent.
DecimationResult run_decimation(const Dataset& ds, const DecimationOptions& opts,
                                const CouplingEstimate* initial = nullptr);

}  // namespace tminfer
