#include "tminfer/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace tminfer {

namespace {

constexpr std::uint64_t kTagChannel = 0x100000;
constexpr std::uint64_t kTagData = 0x200000;
constexpr std::uint64_t kTagFocus = 0x300000;
constexpr std::uint64_t kTagImage = 0x400000;

constexpr int kGlyphSize = 5;
constexpr const char* kGlyph[kGlyphSize] = {"11111", "10000", "11110", "10000", "11111"};

std::vector<RowMask> true_support_masks(const TransmissionMatrix& tm) {
  const Index n_half = tm.dims.n_half();
  const Index n = tm.dims.n();
  std::vector<RowMask> masks;
  for (Index g = 0; g < n_half; ++g) {
    RowMask m{n_half + g, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false)};
    m.active.head(n_half) = tm.entries.row(g).transpose().array() != 0.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

void append_path(ExperimentReport& report, const DecimationPath& path, double sigma, int rep,
                 Direction direction) {
  for (std::size_t i = 0; i < path.records.size(); ++i) {
    const auto& r = path.records[i];
    report.paths.push_back(PathPoint{sigma, rep, direction, r.active_couplings, r.total_pl, r.bic,
                                     i == path.selected});
  }
}

}  // namespace

Eigen::VectorXd gaussian_spot(const Dimensions& dims, double width_px) {
  if (!(width_px > 0.0)) throw std::invalid_argument("gaussian_spot: width must be positive");
  const double c = 0.5 * (dims.w - 1);
  Eigen::VectorXd v(dims.n_half());
  for (int r = 0; r < dims.w; ++r)
    for (int col = 0; col < dims.w; ++col) {
      const double d2 = (r - c) * (r - c) + (col - c) * (col - c);
      v(Index(r) * dims.w + col) = std::exp(-d2 / (2.0 * width_px * width_px));
    }
  return v / v.maxCoeff();
}

Eigen::VectorXd glyph_image(const Dimensions& dims) {
  Eigen::VectorXd v(dims.n_half());
  for (int r = 0; r < dims.w; ++r)
    for (int c = 0; c < dims.w; ++c) {
      const int gr = r * kGlyphSize / dims.w;
      const int gc = c * kGlyphSize / dims.w;
      v(Index(r) * dims.w + c) = kGlyph[gr][gc] == '1' ? 1.0 : 0.0;
    }
  return v;
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m) {
  return Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(m).pseudoInverse();
}

Eigen::VectorXd focusing_target(const TransmissionMatrix& channel, const Eigen::VectorXd& spot,
                                double pedestal, double margin) {
  if (!(pedestal > 0.0 && pedestal < 1.0)) throw std::invalid_argument("focusing_target: pedestal in (0, 1)");
  if (!(margin > 0.0 && margin <= 1.0)) throw std::invalid_argument("focusing_target: margin in (0, 1]");
  if (spot.size() != channel.dims.n_half()) throw std::invalid_argument("focusing_target: spot size");

  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(channel.entries);
  const Eigen::VectorXd flat = Eigen::VectorXd::Constant(spot.size(), pedestal);
  Eigen::VectorXd x0 = flat;
  if ((channel.entries * x0 - flat).norm() > 1e-12 * flat.norm()) x0 = cod.solve(flat);
  const Eigen::VectorXd v = cod.solve(spot);

  double h = (1.0 - pedestal) / std::max(spot.maxCoeff(), std::numeric_limits<double>::min());
  for (Index j = 0; j < v.size(); ++j) {
    if (x0(j) < 0.0 || x0(j) > 1.0) {
      h = 0.0;
      break;
    }
    if (v(j) > 0.0) h = std::min(h, (1.0 - x0(j)) / v(j));
    if (v(j) < 0.0) h = std::min(h, -x0(j) / v(j));
  }
  const Eigen::VectorXd design = (x0 + margin * h * v).cwiseMax(0.0).cwiseMin(1.0);
  return channel.entries * design;
}

FocusingResult focusing_experiment(const TransmissionMatrix& t_true, const TransmissionMatrix& t_inf,
                                   const Eigen::VectorXd& target, const NoiseSpec& noise, Rng& rng) {
  if (target.size() != t_inf.entries.rows()) throw std::invalid_argument("focusing_experiment: target size");
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(t_inf.entries);
  FocusingResult out;
  out.rank_deficient = cod.rank() < t_inf.entries.cols();
  out.input = cod.solve(target).cwiseMax(0.0).cwiseMin(1.0);
  out.achieved = transmit(t_true, out.input, noise, rng);
  out.quality = quality_q(target, out.achieved, "focus target vs achieved");

  Index peak = 0;
  target.maxCoeff(&peak);
  const double lo = target.minCoeff();
  const double cut = lo + 0.1 * (target.maxCoeff() - lo);
  double bg = 0.0;
  Index count = 0;
  for (Index j = 0; j < target.size(); ++j)
    if (target(j) <= cut) {
      bg += out.achieved(j);
      ++count;
    }
  out.peak_to_background = count > 0 && bg != 0.0 ? out.achieved(peak) / (bg / double(count))
                                                   : std::numeric_limits<double>::quiet_NaN();
  return out;
}

ReconstructionResult image_reconstruction(const Eigen::MatrixXd& op, const TransmissionMatrix& t_true,
                                          const Eigen::VectorXd& object, const NoiseSpec& noise, Rng& rng) {
  if (op.cols() != t_true.entries.rows() || op.rows() != object.size())
    throw std::invalid_argument("image_reconstruction: shape mismatch");
  ReconstructionResult out;
  out.measured = transmit(t_true, object, noise, rng);
  out.reconstructed = op * out.measured;
  out.quality = quality_q(object, out.reconstructed, "object vs reconstruction");
  return out;
}

std::vector<double> SweepConfig::default_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(0.05 * i);
  return g;
}

void SweepConfig::validate() const {
  if (sigma_grid.empty()) throw std::invalid_argument("sweep: empty sigma grid");
  for (double s : sigma_grid)
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("sweep: sigma must be finite and >= 0");
  Dimensions::square(dims.w);
  if (!(density > 0.0) || density > 1.0) throw std::invalid_argument("sweep: density must lie in (0, 1]");
  if (m_samples < 1) throw std::invalid_argument("sweep: m_samples must be positive");
  if (replicates < 1) throw std::invalid_argument("sweep: replicates must be positive");
  if (!(spot_width_px > 0.0)) throw std::invalid_argument("sweep: spot width must be positive");
  decimation.validate();
}

ExperimentReport run_sweep(const SweepConfig& config) {
  config.validate();
  const Dimensions dims = config.dims;
  const Index n_half = dims.n_half();
  const Eigen::VectorXd spot = gaussian_spot(dims, config.spot_width_px);
  const Eigen::VectorXd glyph = glyph_image(dims);

  DecimationOptions dec = config.decimation;
  dec.scope = FitScope::output_sites;

  ExperimentReport report;
  for (int rep = 0; rep < config.replicates; ++rep) {
    const auto urep = static_cast<std::uint64_t>(rep);
    const TransmissionMatrix t_true =
        build_random_tm(dims, config.density, derive_seed(config.master_seed, kTagChannel + urep));
    const Eigen::VectorXd target = focusing_target(t_true, spot);
    const auto true_masks = true_support_masks(t_true);

    for (std::size_t s = 0; s < config.sigma_grid.size(); ++s) {
      const auto start = std::chrono::steady_clock::now();
      SweepRecord rec;
      rec.sigma = config.sigma_grid[s];
      rec.replicate = rep;
      rec.true_couplings = support_size(t_true.entries);
      try {
        const NoiseSpec noise = NoiseSpec::homogeneous(rec.sigma, n_half);
        const Dataset ds = generate_dataset(
            t_true, config.m_samples, noise,
            derive_seed(config.master_seed, kTagData + urep * 4096 + static_cast<std::uint64_t>(s)));

        const FitProblem problem(ds, FitScope::output_sites);
        const CouplingEstimate full = fit_all_rows(problem, problem.full_masks(), dec.optim);
        const DecimationResult forward = run_decimation(ds, dec, &full);
        append_path(report, forward.path, rec.sigma, rep, Direction::forward);
        const TmExtraction ext = extract_tm(forward.best);
        rec.selected_couplings = forward.best.active_couplings();
        rec.q_t_bic = quality_q(t_true.entries, ext.tm.entries).q;
        rec.sigma_hat_mean = ext.noise.sigma_hat.mean();

        const CouplingEstimate oracle = fit_all_rows(problem, true_masks, dec.optim, &full);
        rec.q_t_true_support = quality_q(t_true.entries, extract_tm(oracle).tm.entries).q;

        Rng focus_rng(derive_seed(config.master_seed, kTagFocus + urep));
        const FocusingResult focus = focusing_experiment(t_true, ext.tm, target, noise, focus_rng);
        rec.q_focus = focus.quality.q;
        rec.focus_peak_to_background = focus.peak_to_background;

        if (config.inverse) {
          const Dataset rds = reverse_dataset(ds);
          const DecimationResult inverse = run_decimation(rds, dec);
          append_path(report, inverse.path, rec.sigma, rep, Direction::reversed);
          const Eigen::MatrixXd t_inv = extract_tm(inverse.best).tm.entries;
          rec.inverse_selected = inverse.best.active_couplings();
          rec.inverse_density = double(rec.inverse_selected) / double(n_half * n_half);
          const Eigen::MatrixXd pinv = pseudo_inverse(ext.tm.entries);

          const std::uint64_t image_seed = derive_seed(config.master_seed, kTagImage + urep);
          Rng r1(image_seed), r2(image_seed), r3(image_seed ^ 1), r4(image_seed ^ 1);
          rec.q_img_inverse = image_reconstruction(t_inv, t_true, glyph, noise, r1).quality.q;
          rec.q_img_pinv = image_reconstruction(pinv, t_true, glyph, noise, r2).quality.q;
          rec.q_spot_inverse = image_reconstruction(t_inv, t_true, spot, noise, r3).quality.q;
          rec.q_spot_pinv = image_reconstruction(pinv, t_true, spot, noise, r4).quality.q;
        }

        if (config.gramian) {
          const FitProblem all(ds, FitScope::all_sites);
          rec.balance = extract_gramian(fit_all_rows(all, all.full_masks(), dec.optim)).balance;
        }
      } catch (const std::exception& e) {
        rec.ok = false;
        rec.failure = e.what();
      }
      rec.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report.records.push_back(std::move(rec));
    }
  }
  return report;
}

std::vector<SweepRecord> summarize(const std::vector<SweepRecord>& records) {
  std::map<double, std::vector<const SweepRecord*>> groups;
  for (const auto& r : records) groups[r.sigma];
  for (const auto& r : records)
    if (r.ok) groups[r.sigma].push_back(&r);

  std::vector<SweepRecord> out;
  for (const auto& [sigma, group] : groups) {
    SweepRecord m;
    m.sigma = sigma;
    m.replicate = -1;
    if (group.empty()) {
      m.ok = false;
      m.failure = "all replicates failed";
      out.push_back(m);
      continue;
    }
    const double c = double(group.size());
    double tc = 0, sc = 0, ic = 0;
    for (const SweepRecord* r : group) {
      tc += double(r->true_couplings);
      sc += double(r->selected_couplings);
      ic += double(r->inverse_selected);
      m.q_t_bic += r->q_t_bic / c;
      m.q_t_true_support += r->q_t_true_support / c;
      m.sigma_hat_mean += r->sigma_hat_mean / c;
      m.balance += r->balance / c;
      m.inverse_density += r->inverse_density / c;
      m.q_img_inverse += r->q_img_inverse / c;
      m.q_img_pinv += r->q_img_pinv / c;
      m.q_spot_inverse += r->q_spot_inverse / c;
      m.q_spot_pinv += r->q_spot_pinv / c;
      m.q_focus += r->q_focus / c;
      m.focus_peak_to_background += r->focus_peak_to_background / c;
      m.runtime_s += r->runtime_s / c;
    }
    m.true_couplings = static_cast<Index>(std::llround(tc / c));
    m.selected_couplings = static_cast<Index>(std::llround(sc / c));
    m.inverse_selected = static_cast<Index>(std::llround(ic / c));
    out.push_back(m);
  }
  return out;
}

}  // namespace tminfer
