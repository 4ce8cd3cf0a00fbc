#pragma once

#include <string>
#include <vector>

#include "tminfer/optimizer.hpp"

namespace tminfer {

struct ChannelNoiseEstimate {
  Eigen::VectorXd sigma_hat;
  /// beta = 1 / (2 sigma^2), read off the fitted curvature.
  Eigen::VectorXd beta_hat;
};

struct TmExtraction {
  /// Direct matrix for forward data, inverse matrix for reversed data.
  TransmissionMatrix tm;
  ChannelNoiseEstimate noise;
  /// Output rows whose fit did not converge; their entries are still filled.
  std::vector<Index> flagged_rows;
  /// Output-to-output couplings k / 2a (all-sites scope only, else empty).
  /// Absent from the ground-truth structure; kept as a residual diagnostic.
  Eigen::MatrixXd output_residual;
};

/// For every output row g: beta_g = a_g, T[g, j] = k_gj / (2 a_g),
/// sigma_hat_g = (2 a_g)^(-1/2).
TmExtraction extract_tm(const CouplingEstimate& estimate);

struct GramianExtraction {
  Eigen::MatrixXd u;
  /// |U_inf - T_inf^T T_inf|_F / |T_inf^T T_inf|_F
  double balance = 0.0;
  /// Shared inverse temperature assumed for the input rows.
  double input_beta = 0.0;
};

/// Input self-coupling block of an all-sites fit. Input rows share the mean
/// output beta; diagonal U = a / beta, off-diagonal U = -k / (2 beta), the
/// same per-row convention under which output rows carry k = 2 beta T.
GramianExtraction extract_gramian(const CouplingEstimate& estimate);

/// Averages the all-sites coupling matrix J = k / beta with its transpose
/// and maps back to k. Masks become the union of both directions.
CouplingEstimate symmetrize(const CouplingEstimate& estimate);

/// Natural parameters the fit converges to for channel T and noise sigma:
/// output rows a = beta, k = 2 beta T; in all-sites scope input rows get
/// a = beta U_aa, k_aa' = -2 beta U_aa', k_ag = 2 beta T_ga, with beta the
/// mean output beta. Masks follow the nonzero pattern.
CouplingEstimate parameterize(const TransmissionMatrix& tm, const Eigen::VectorXd& sigma,
                              FitScope scope = FitScope::output_sites);

struct QualityReport {
  double q = 0.0;
  std::string norm_kind = "frobenius";
  std::string operands;
};

/// q = (|ref - cand|_F / |ref|_F)^(1/2).
template <typename DerivedA, typename DerivedB>
QualityReport quality_q(const Eigen::MatrixBase<DerivedA>& ref, const Eigen::MatrixBase<DerivedB>& cand,
                        std::string operands = {}) {
  if (ref.rows() != cand.rows() || ref.cols() != cand.cols())
    throw std::invalid_argument("quality_q: shape mismatch");
  const double denom = ref.norm();
  if (denom == 0.0) throw std::invalid_argument("quality_q: reference has zero norm");
  return QualityReport{std::sqrt((ref - cand).norm() / denom), "frobenius", std::move(operands)};
}

}  // namespace tminfer
