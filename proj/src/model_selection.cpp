#include "tminfer/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace tminfer {

double bic_score(double k_free, Index m_samples, double total_pl) {
  if (k_free < 0 || m_samples < 1) throw std::invalid_argument("bic_score: invalid arguments");
  return k_free * std::log(static_cast<double>(m_samples)) - 2.0 * total_pl;
}

void DecimationOptions::validate() const {
  if (!(fraction > 0.0) || fraction > 1.0) throw std::invalid_argument("decimation fraction must lie in (0, 1]");
  if (min_batch < 1) throw std::invalid_argument("decimation min_batch must be at least 1");
  if (max_refine_passes < 0) throw std::invalid_argument("max_refine_passes must be nonnegative");
  optim.validate();
}

std::vector<RowMask> decimate_step(const CouplingEstimate& estimate, Index batch) {
  if (batch < 1) throw std::invalid_argument("decimate_step: batch must be at least 1");
  using Entry = std::tuple<double, std::size_t, Index>;
  std::vector<Entry> active;
  for (std::size_t r = 0; r < estimate.masks.size(); ++r) {
    const auto& mask = estimate.masks[r];
    for (Index j = 0; j < mask.active.size(); ++j)
      if (mask.active(j)) active.emplace_back(std::abs(estimate.rows[r].k(j)), r, j);
  }
  if (active.empty()) throw std::invalid_argument("decimate_step: no active couplings left");
  if (batch > Index(active.size())) throw std::invalid_argument("decimate_step: batch exceeds active couplings");

  std::partial_sort(active.begin(), active.begin() + batch, active.end());
  std::vector<RowMask> masks = estimate.masks;
  for (Index b = 0; b < batch; ++b) {
    const auto& [mag, r, j] = active[b];
    masks[r].active(j) = false;
  }
  return masks;
}

std::size_t select_min_bic(const std::vector<DecimationRecord>& records) {
  if (records.empty()) throw std::invalid_argument("select_min_bic: empty path");
  std::size_t best = 0;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto& b = records[best];
    if (r.bic < b.bic || (r.bic == b.bic && r.active_couplings < b.active_couplings)) best = i;
  }
  return best;
}

DecimationRecord make_record(const CouplingEstimate& estimate, const BicConvention& bic) {
  DecimationRecord rec;
  rec.active_couplings = estimate.active_couplings();
  rec.k_free = rec.active_couplings + (bic.count_curvatures ? Index(estimate.rows.size()) : 0);
  rec.total_pl = estimate.total_pl;
  const double pl = bic.mean_pl ? estimate.total_pl / static_cast<double>(estimate.samples) : estimate.total_pl;
  rec.bic = bic_score(static_cast<double>(rec.k_free), estimate.samples, pl);
  rec.all_converged = estimate.all_converged();
  rec.estimate = std::make_shared<const CouplingEstimate>(estimate);
  return rec;
}

namespace {

// Decimates from `start` in batches of `batch` and returns the records whose
// active count lies strictly above `floor_count`.
std::vector<DecimationRecord> descend(const FitProblem& problem, const CouplingEstimate& start,
                                      Index batch, Index floor_count, const DecimationOptions& opts) {
  std::vector<DecimationRecord> out;
  CouplingEstimate current = start;
  for (;;) {
    const Index active = current.active_couplings();
    const Index step = std::min(batch, active - floor_count - 1);
    if (step < 1) break;
    auto masks = decimate_step(current, step);
    current = fit_all_rows(problem, masks, opts.optim, &current);
    out.push_back(make_record(current, opts.bic));
  }
  return out;
}

}  // namespace

DecimationResult run_decimation(const Dataset& ds, const DecimationOptions& opts,
                                const CouplingEstimate* initial) {
  opts.validate();
  const FitProblem problem(ds, opts.scope);

  CouplingEstimate start;
  if (initial) {
    if (initial->fitted_sites != problem.fitted_sites() || initial->scope != opts.scope)
      throw std::invalid_argument("run_decimation: initial fit has a different scope");
    if (initial->dataset_fingerprint != problem.fingerprint())
      throw std::invalid_argument("run_decimation: initial fit belongs to another dataset");
    start = *initial;
  } else {
    start = fit_all_rows(problem, problem.full_masks(), opts.optim);
  }

  std::vector<DecimationRecord> records;
  records.push_back(make_record(start, opts.bic));

  // coarse geometric pass down to the empty support
  {
    CouplingEstimate current = start;
    while (current.active_couplings() > 0) {
      const Index active = current.active_couplings();
      Index batch = std::max(opts.min_batch, static_cast<Index>(std::floor(opts.fraction * double(active))));
      batch = std::min(batch, active);
      auto masks = decimate_step(current, batch);
      current = fit_all_rows(problem, masks, opts.optim, &current);
      records.push_back(make_record(current, opts.bic));
    }
  }

  for (int pass = 0; opts.refine && pass < opts.max_refine_passes; ++pass) {
    const std::size_t s = select_min_bic(records);
    const std::size_t lo = s > 0 ? s - 1 : s;
    const std::size_t hi = s + 1 < records.size() ? s + 1 : s;
    const bool gap_above = lo != s && records[lo].active_couplings - records[s].active_couplings > 1;
    const bool gap_below = hi != s && records[s].active_couplings - records[hi].active_couplings > 1;
    if (!gap_above && !gap_below) break;

    const Index width = records[lo].active_couplings - records[hi].active_couplings;
    const Index batch = std::max<Index>(1, (width + 15) / 16);
    auto fresh = descend(problem, *records[lo].estimate, batch, records[hi].active_couplings, opts);
    records.erase(records.begin() + static_cast<std::ptrdiff_t>(lo) + 1,
                  records.begin() + static_cast<std::ptrdiff_t>(hi));
    records.insert(records.begin() + static_cast<std::ptrdiff_t>(lo) + 1, fresh.begin(), fresh.end());
  }

  DecimationResult result;
  result.path.records = std::move(records);
  result.path.selected = select_min_bic(result.path.records);
  result.best = *result.path.records[result.path.selected].estimate;
  return result;
}

}  // namespace tminfer
