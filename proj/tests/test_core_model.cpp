#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tminfer/core_model.hpp"

using namespace tminfer;

namespace {

// Independent restatement of the draw contract, written against the engine
// directly rather than through Rng.
struct ReferenceStream {
  std::mt19937_64 engine;
  explicit ReferenceStream(std::uint64_t seed) : engine(seed) {}
  double uniform() { return double(engine() >> 11) / 9007199254740992.0; }
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * M_PI * u2);
  }
};

std::uint64_t reference_splitmix(std::uint64_t state) {
  std::uint64_t z = state + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TEST(Rng, SplitmixMatchesPublishedFirstOutput) {
  // first output of the splitmix64 reference generator seeded with 0
  EXPECT_EQ(splitmix64(0), 0xE220A8397B1DCDAFULL);
  EXPECT_EQ(splitmix64(12345), reference_splitmix(12345));
}

TEST(Rng, UniformAndNormalFollowTheContract) {
  Rng rng(42);
  ReferenceStream ref(42);
  for (int i = 0; i < 1000; ++i) {
    if (i % 2) {
      EXPECT_EQ(rng.uniform(), ref.uniform());
    } else {
      EXPECT_EQ(rng.normal(), ref.normal());
    }
  }
}

TEST(Rng, SplitStreamsAreSeededByDeriveSeed) {
  Rng a(7);
  Rng b = a.split(3);
  EXPECT_EQ(b.seed(), derive_seed(7, 3));
  EXPECT_NE(derive_seed(7, 3), derive_seed(7, 4));
  EXPECT_NE(derive_seed(7, 3), derive_seed(8, 3));
}

TEST(Rng, IndexStaysInRange) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) EXPECT_LT(rng.index(7), 7u);
}

TEST(Dimensions, RejectsTinyFrames) {
  EXPECT_THROW(Dimensions::square(1), std::invalid_argument);
  const auto d = Dimensions::square(3);
  EXPECT_EQ(d.n_half(), 9);
  EXPECT_EQ(d.n(), 18);
}

TEST(BuildRandomTm, LargeFrameDensityAndRowSums) {
  const auto t = build_random_tm(Dimensions::square(12), 0.20, 99);
  const double nnz = double(support_size(t.entries));
  EXPECT_NEAR(nnz / 20736.0, 0.20, 0.01);
  for (Index r = 0; r < t.entries.rows(); ++r) EXPECT_NEAR(t.entries.row(r).sum(), 1.0, 1e-12);
  EXPECT_TRUE((t.entries.array() >= 0.0).all());
}

TEST(BuildRandomTm, FullDensityIsUniform) {
  const auto t = build_random_tm(Dimensions::square(2), 1.0, 5);
  EXPECT_TRUE((t.entries.array() == 0.25).all());
}

TEST(BuildRandomTm, RecountMatchesReferenceDraws) {
  const auto dims = Dimensions::square(4);
  const auto t = build_random_tm(dims, 0.25, 7);
  ReferenceStream ref(7);
  Eigen::MatrixXd active = Eigen::MatrixXd::Zero(16, 16);
  for (Index r = 0; r < 16; ++r)
    for (Index c = 0; c < 16; ++c) active(r, c) = ref.uniform() < 0.25 ? 1.0 : 0.0;
  for (Index r = 0; r < 16; ++r) {
    if (active.row(r).sum() == 0.0) {
      auto idx = Index(ref.uniform() * 16.0);
      active(r, idx) = 1.0;
    }
    const double count = active.row(r).sum();
    for (Index c = 0; c < 16; ++c) EXPECT_EQ(t.entries(r, c), active(r, c) / count);
  }
}

TEST(BuildRandomTm, RepairsEmptyRows) {
  // density 1/n_half leaves many rows empty before repair
  const auto t = build_random_tm(Dimensions::square(3), 1.0 / 9.0, 11);
  for (Index r = 0; r < 9; ++r) {
    EXPECT_GE(support_size(t.entries.row(r)), 1);
    EXPECT_NEAR(t.entries.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(BuildRandomTm, RejectsInvalidDensity) {
  const auto d = Dimensions::square(4);
  EXPECT_THROW(build_random_tm(d, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(build_random_tm(d, 1.5, 1), std::invalid_argument);
  EXPECT_THROW(build_random_tm(d, 0.01, 1), std::invalid_argument);
}

TEST(Transmit, IdentityChannelIsExact) {
  const auto d = Dimensions::square(2);
  TransmissionMatrix t(d, Eigen::MatrixXd::Identity(4, 4));
  Eigen::VectorXd x(4);
  x << 0.1, 0.2, 0.3, 0.4;
  Rng rng(3);
  EXPECT_EQ(transmit(t, x, NoiseSpec::homogeneous(0.0, 4), rng), x);
}

TEST(Transmit, RowStochasticKeepsUnitRange) {
  const auto t = build_random_tm(Dimensions::square(4), 0.3, 2);
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x(16);
    for (Index a = 0; a < 16; ++a) x(a) = rng.uniform();
    const auto y = transmit(t, x, NoiseSpec::homogeneous(0.0, 16), rng);
    EXPECT_TRUE((y.array() >= 0.0).all() && (y.array() <= 1.0 + 1e-15).all());
  }
}

TEST(Transmit, NoisyOutputMatchesReferenceTrace) {
  const auto t = build_random_tm(Dimensions::square(3), 0.4, 4);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(9, 0.0, 1.0);
  Rng rng(2024);
  const auto y = transmit(t, x, NoiseSpec::homogeneous(0.1, 9), rng);
  ReferenceStream ref(2024);
  for (Index g = 0; g < 9; ++g) {
    double expect = 0.0;
    for (Index a = 0; a < 9; ++a) expect += t.entries(g, a) * x(a);
    expect += 0.1 * ref.normal();
    EXPECT_NEAR(y(g), expect, 1e-15);
  }
}

TEST(GenerateDataset, DrawOrderAndExactness) {
  const auto t = build_random_tm(Dimensions::square(3), 0.4, 4);
  const auto ds = generate_dataset(t, 20, NoiseSpec::homogeneous(0.05, 9), 77);
  ReferenceStream ref(77);
  for (Index m = 0; m < 20; ++m)
    for (Index a = 0; a < 9; ++a) ASSERT_EQ(ds.inputs()(m, a), ref.uniform());
  for (Index m = 0; m < 20; ++m)
    for (Index g = 0; g < 9; ++g) {
      const double clean = t.entries.row(g).dot(ds.inputs().row(m));
      EXPECT_NEAR(ds.outputs()(m, g), clean + 0.05 * ref.normal(), 1e-15);
    }
  EXPECT_EQ(ds.meta().seed, 77u);
  EXPECT_EQ(ds.meta().sigma, 0.05);
}

TEST(GenerateDataset, ZeroNoiseIsLinearAndDeterministic) {
  const auto t = build_random_tm(Dimensions::square(4), 0.25, 1);
  const auto a = generate_dataset(t, 5000, NoiseSpec::homogeneous(0.0, 16), 3);
  const auto b = generate_dataset(t, 5000, NoiseSpec::homogeneous(0.0, 16), 3);
  EXPECT_EQ(a.size(), 5000);
  const Eigen::MatrixXd resid = a.outputs() - a.inputs() * t.entries.transpose();
  EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_TRUE(a.inputs() == b.inputs());
  EXPECT_TRUE(a.outputs() == b.outputs());
  EXPECT_EQ(generate_dataset(t, 1, NoiseSpec::homogeneous(0.0, 16), 3).size(), 1);
}

TEST(ReverseDataset, SwapsAndGuards) {
  const auto t = build_random_tm(Dimensions::square(2), 0.5, 1);
  const auto ds = generate_dataset(t, 10, NoiseSpec::homogeneous(0.1, 4), 2);
  const auto r = reverse_dataset(ds);
  EXPECT_EQ(r.direction(), Direction::reversed);
  EXPECT_TRUE(r.inputs() == ds.outputs());
  EXPECT_TRUE(r.outputs() == ds.inputs());
  EXPECT_THROW(reverse_dataset(r), std::invalid_argument);
  const Dataset back(r.dims(), r.outputs(), r.inputs(), Direction::forward, r.meta());
  EXPECT_TRUE(back.inputs() == ds.inputs());
  EXPECT_TRUE(back.outputs() == ds.outputs());
}

TEST(GroundTruthCoupling, IdentityAndZeroChannels) {
  const auto d = Dimensions::square(2);
  const auto j = assemble_ground_truth_coupling(TransmissionMatrix(d, Eigen::MatrixXd::Identity(4, 4))).j;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  EXPECT_TRUE(j.topLeftCorner(4, 4) == -eye);
  EXPECT_TRUE(j.topRightCorner(4, 4) == 2.0 * eye);
  EXPECT_TRUE(j.bottomLeftCorner(4, 4) == 2.0 * eye);
  EXPECT_TRUE(j.bottomRightCorner(4, 4) == -eye);

  const auto z = assemble_ground_truth_coupling(TransmissionMatrix(d, Eigen::MatrixXd::Zero(4, 4))).j;
  Eigen::VectorXd diag(8);
  diag << 0, 0, 0, 0, -1, -1, -1, -1;
  EXPECT_TRUE(z == Eigen::MatrixXd(diag.asDiagonal()));
}

TEST(GroundTruthCoupling, RandomChannelBlocks) {
  const auto t = build_random_tm(Dimensions::square(3), 0.3, 9);
  const auto j = assemble_ground_truth_coupling(t).j;
  EXPECT_EQ((j - j.transpose()).cwiseAbs().maxCoeff(), 0.0);
  for (Index a = 0; a < 9; ++a)
    for (Index b = 0; b < 9; ++b) {
      double u = 0.0;
      for (Index g = 0; g < 9; ++g) u += t.entries(g, a) * t.entries(g, b);
      EXPECT_NEAR(j(a, b), -u, 1e-15);
      EXPECT_EQ(j(9 + a, b), 2.0 * t.entries(a, b));
      EXPECT_EQ(j(9 + a, 9 + b), a == b ? -1.0 : 0.0);
    }
  EXPECT_THROW(assemble_ground_truth_coupling(TransmissionMatrix(t.dims, t.entries, MatrixRole::inverse)),
               std::invalid_argument);
}

TEST(TransmissionMatrix, ValidatesShape) {
  EXPECT_THROW(TransmissionMatrix(Dimensions::square(2), Eigen::MatrixXd::Zero(3, 4)), std::invalid_argument);
}
