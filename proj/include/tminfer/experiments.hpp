#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tminfer/extraction.hpp"
#include "tminfer/model_selection.hpp"

namespace tminfer {

/// Unit-peak Gaussian centred on the frame, flattened row-major.
Eigen::VectorXd gaussian_spot(const Dimensions& dims, double width_px);

/// Binary "E" glyph resampled to the frame.
Eigen::VectorXd glyph_image(const Dimensions& dims);

/// Minimum-norm least-squares pseudo-inverse.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m);

/// Focusing target T x for the input x = x0 + h v, where T x0 = pedestal and
/// T v = spot (least squares), and h is the largest contrast (times `margin`)
/// keeping x inside [0, 1]. For invertible T this is pedestal + h * spot;
/// otherwise it is the part of that image the channel can produce.
Eigen::VectorXd focusing_target(const TransmissionMatrix& channel, const Eigen::VectorXd& spot,
                                double pedestal = 0.5, double margin = 0.5);

struct FocusingResult {
  Eigen::VectorXd input;
  Eigen::VectorXd achieved;
  QualityReport quality;
  /// Achieved intensity at the target peak over the mean achieved intensity
  /// where the target sits within 10% of its minimum.
  double peak_to_background = 0.0;
  bool rank_deficient = false;
};

/// Solves T_inf x = target in the least-squares sense (minimum norm),
/// clamps x into [0, 1], sends it through the true channel with noise.
FocusingResult focusing_experiment(const TransmissionMatrix& t_true, const TransmissionMatrix& t_inf,
                                   const Eigen::VectorXd& target, const NoiseSpec& noise, Rng& rng);

struct ReconstructionResult {
  Eigen::VectorXd measured;
  Eigen::VectorXd reconstructed;
  QualityReport quality;
};

/// measured = transmit(T_true, object), reconstructed = op * measured.
ReconstructionResult image_reconstruction(const Eigen::MatrixXd& op, const TransmissionMatrix& t_true,
                                          const Eigen::VectorXd& object, const NoiseSpec& noise, Rng& rng);

struct SweepConfig {
  std::vector<double> sigma_grid;
  Dimensions dims;
  double density = 0.20;
  Index m_samples = 5000;
  std::uint64_t master_seed = 1;
  int replicates = 3;
  DecimationOptions decimation;
  /// Also fit all sites at full support for the Gramian balance.
  bool gramian = true;
  bool inverse = true;
  double spot_width_px = 1.0;

  /// 11 points on [0, 0.5].
  static std::vector<double> default_grid();
  void validate() const;
};

struct SweepRecord {
  double sigma = 0.0;
  int replicate = 0;
  bool ok = true;
  std::string failure;

  Index true_couplings = 0;
  Index selected_couplings = 0;
  double q_t_bic = 0.0;
  double q_t_true_support = 0.0;
  double sigma_hat_mean = 0.0;
  double balance = 0.0;

  Index inverse_selected = 0;
  double inverse_density = 0.0;
  double q_img_inverse = 0.0;
  double q_img_pinv = 0.0;
  double q_spot_inverse = 0.0;
  double q_spot_pinv = 0.0;

  double q_focus = 0.0;
  double focus_peak_to_background = 0.0;

  double runtime_s = 0.0;
};

/// One point of a decimation path, for PL/BIC surface plots.
struct PathPoint {
  double sigma = 0.0;
  int replicate = 0;
  Direction direction = Direction::forward;
  Index active_couplings = 0;
  double total_pl = 0.0;
  double bic = 0.0;
  bool selected = false;
};

struct ExperimentReport {
  std::vector<SweepRecord> records;
  std::vector<PathPoint> paths;
};

/// Per replicate: one channel; per noise level: fresh data, decimation with
/// BIC selection, true-support refit, inverse inference on the reversed data,
/// focusing and image reconstruction. Probe noise for focusing and imaging is
/// shared across noise levels of a replicate. A failing grid point is
/// recorded with ok = false and the sweep continues.
ExperimentReport run_sweep(const SweepConfig& config);

/// Replicate means per noise level (failed records skipped).
std::vector<SweepRecord> summarize(const std::vector<SweepRecord>& records);

}  // namespace tminfer
