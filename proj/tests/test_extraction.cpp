#include <gtest/gtest.h>

#include <cmath>

#include "tminfer/extraction.hpp"

using namespace tminfer;

namespace {

CouplingEstimate fit_full(const Dataset& ds, FitScope scope) {
  const FitProblem problem(ds, scope);
  return fit_all_rows(problem, problem.full_masks(), OptimOptions{});
}

}  // namespace

TEST(ExtractTm, InvertsTheParameterization) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t = build_random_tm(Dimensions::square(4), 0.3, seed);
    Rng rng(seed);
    Eigen::VectorXd sigma(16);
    for (Index g = 0; g < 16; ++g) sigma(g) = 0.01 + 0.3 * rng.uniform();
    for (FitScope scope : {FitScope::output_sites, FitScope::all_sites}) {
      const auto ex = extract_tm(parameterize(t, sigma, scope));
      EXPECT_LE((ex.tm.entries - t.entries).norm(), 1e-14 * t.entries.norm());
      EXPECT_LE((ex.noise.sigma_hat - sigma).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_EQ(ex.tm.role, MatrixRole::direct);
      EXPECT_TRUE(ex.flagged_rows.empty());
    }
  }
}

TEST(ExtractTm, ReportsRoleAndUnconvergedRows) {
  const auto t = build_random_tm(Dimensions::square(2), 0.5, 4);
  auto est = parameterize(TransmissionMatrix(t.dims, t.entries, MatrixRole::inverse), Eigen::VectorXd::Constant(4, 0.1));
  est.converged[2] = false;
  const auto ex = extract_tm(est);
  EXPECT_EQ(ex.tm.role, MatrixRole::inverse);
  ASSERT_EQ(ex.flagged_rows.size(), 1u);
  EXPECT_EQ(ex.flagged_rows[0], 2);
  EXPECT_EQ(ex.tm.entries.row(2), t.entries.row(2));

  est.rows.pop_back();
  est.fitted_sites.pop_back();
  est.masks.pop_back();
  EXPECT_THROW(extract_tm(est), std::invalid_argument);
}

TEST(ExtractTm, NoiseEstimateTracksTheTrueLevel) {
  const auto t = build_random_tm(Dimensions::square(4), 0.25, 5);
  for (double sigma : {0.02, 0.05, 0.2}) {
    const auto ds = generate_dataset(t, 2000, NoiseSpec::homogeneous(sigma, 16), 6);
    const auto ex = extract_tm(fit_full(ds, FitScope::output_sites));
    for (Index g = 0; g < 16; ++g) EXPECT_NEAR(ex.noise.sigma_hat(g) / sigma, 1.0, 0.1);
    EXPECT_NEAR(ex.noise.beta_hat(0), 1.0 / (2.0 * ex.noise.sigma_hat(0) * ex.noise.sigma_hat(0)), 1e-9 * ex.noise.beta_hat(0));
  }
}

TEST(Quality, Axioms) {
  Rng rng(7);
  Eigen::MatrixXd a(5, 5), b(5, 5);
  for (Index i = 0; i < 25; ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  EXPECT_EQ(quality_q(a, a).q, 0.0);
  EXPECT_NEAR(quality_q(a, Eigen::MatrixXd::Zero(5, 5)).q, 1.0, 1e-15);
  EXPECT_NEAR(quality_q(a, 2.0 * a).q, 1.0, 1e-15);
  EXPECT_NEAR(quality_q(a, 1.25 * a).q, 0.5, 1e-15);
  EXPECT_NEAR(quality_q(3.0 * a, 3.0 * b).q, quality_q(a, b).q, 1e-14);
  EXPECT_GT(quality_q(a, b).q, 0.0);
  const auto rep = quality_q(a, b, "T_true vs T_inf");
  EXPECT_EQ(rep.norm_kind, "frobenius");
  EXPECT_EQ(rep.operands, "T_true vs T_inf");
  EXPECT_THROW(quality_q(Eigen::MatrixXd::Zero(2, 2), a.topLeftCorner(2, 2)), std::invalid_argument);
  EXPECT_THROW(quality_q(a, b.topRows(2)), std::invalid_argument);
}

TEST(ExtractGramian, ExactParametersBalance) {
  const auto t = build_random_tm(Dimensions::square(3), 0.4, 8);
  const auto g = extract_gramian(parameterize(t, Eigen::VectorXd::Constant(9, 0.1), FitScope::all_sites));
  EXPECT_LE(g.balance, 1e-14);
  EXPECT_LE((g.u - t.entries.transpose() * t.entries).norm(), 1e-14);
  EXPECT_NEAR(g.input_beta, 50.0, 1e-12);
}

TEST(ExtractGramian, UnrelatedInputRowsDoNotBalance) {
  const auto t = build_random_tm(Dimensions::square(3), 0.4, 9);
  auto est = parameterize(t, Eigen::VectorXd::Constant(9, 0.1), FitScope::all_sites);
  Rng rng(1);
  for (Index a = 0; a < 9; ++a) {
    est.rows[std::size_t(a)].a = 50.0 * rng.uniform();
    for (Index j = 0; j < 9; ++j)
      if (j != a) est.rows[std::size_t(a)].k(j) = 20.0 * rng.normal();
  }
  EXPECT_GT(extract_gramian(est).balance, 0.5);
}

TEST(ExtractGramian, FittedBalanceAtLargeSampleSize) {
  const auto t = build_random_tm(Dimensions::square(4), 0.25, 2);
  const auto ds = generate_dataset(t, 20000, NoiseSpec::homogeneous(0.01, 16), 3);
  const auto g = extract_gramian(fit_full(ds, FitScope::all_sites));
  EXPECT_LE(g.balance, 0.05);
}

TEST(ExtractGramian, NeedsAllSites) {
  const auto t = build_random_tm(Dimensions::square(2), 0.5, 1);
  const auto est = parameterize(t, Eigen::VectorXd::Constant(4, 0.1));
  EXPECT_THROW(extract_gramian(est), std::invalid_argument);
  EXPECT_THROW(symmetrize(est), std::invalid_argument);
}

TEST(Symmetrize, Examples) {
  Eigen::MatrixXd m(4, 4);
  m << 0.5, 0.5, 0, 0, 0, 1, 0, 0, 0, 0, 0.5, 0.5, 0.25, 0.25, 0.25, 0.25;
  const TransmissionMatrix t(Dimensions::square(2), m);
  const auto exact = parameterize(t, Eigen::VectorXd::Constant(4, 0.2), FitScope::all_sites);
  // consistent parameters are already symmetric
  const auto same = symmetrize(exact);
  for (std::size_t r = 0; r < 8; ++r)
    EXPECT_LE((same.rows[r].k - exact.rows[r].k).cwiseAbs().maxCoeff(), 1e-12);

  auto skew = exact;
  for (auto& row : skew.rows) row.k.setZero();
  skew.rows[4].k(0) = 1.0;  // output 0 to input 0 only
  for (auto& m : skew.masks) m.active.setConstant(false);
  skew.masks[4].active(0) = true;
  const auto sym = symmetrize(skew);
  const double beta = skew.rows[4].a;
  EXPECT_NEAR(sym.rows[4].k(0), 0.5, 1e-15);
  EXPECT_NEAR(sym.rows[0].k(4), 0.5, 1e-15);  // input beta equals the output beta here
  EXPECT_TRUE(sym.masks[0].active(4));
  EXPECT_EQ(sym.masks[0].count(), 1);
  EXPECT_EQ(sym.rows[4].a, beta);
}

TEST(Symmetrize, BarelyMovesALowNoiseFit) {
  // without noise the all-sites fit is not identifiable (outputs are exact
  // linear functions of the inputs), so the comparison is made just above it
  for (int w : {3, 4}) {
    const auto t = build_random_tm(Dimensions::square(w), 0.4, 4);
    const auto ds = generate_dataset(t, 2000, NoiseSpec::homogeneous(0.001, Index(w) * w), 5);
    const auto est = fit_full(ds, FitScope::all_sites);
    const double q = quality_q(t.entries, extract_tm(est).tm.entries).q;
    const double q_sym = quality_q(t.entries, extract_tm(symmetrize(est)).tm.entries).q;
    EXPECT_LE(q_sym - q, 1e-3) << "w " << w;
  }
}
