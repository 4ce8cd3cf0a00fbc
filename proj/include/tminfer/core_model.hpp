#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "tminfer/rng.hpp"

namespace tminfer {

using Eigen::Index;

/// Square w x w input and output frames; sites are numbered inputs first,
/// then outputs, each half in row-major pixel order.
struct Dimensions {
  int w = 0;

  Index n_half() const { return Index(w) * w; }
  Index n() const { return 2 * n_half(); }

  /// Throws std::invalid_argument for w < 2.
  static Dimensions square(int w);
  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

enum class MatrixRole { direct, inverse };
enum class Direction { forward, reversed };

const char* to_string(MatrixRole role);
const char* to_string(Direction direction);
Direction parse_direction(const std::string& text);

/// Dense n_half x n_half intensity map; entries(out, in).
struct TransmissionMatrix {
  Dimensions dims;
  Eigen::MatrixXd entries;
  MatrixRole role = MatrixRole::direct;

  TransmissionMatrix() = default;
  TransmissionMatrix(Dimensions dims, Eigen::MatrixXd entries,
                     MatrixRole role = MatrixRole::direct);
};

/// Per-channel noise standard deviations (length n_half).
struct NoiseSpec {
  Eigen::VectorXd sigma;

  static NoiseSpec homogeneous(double sigma, Index n_half);
  explicit NoiseSpec(Eigen::VectorXd sigma);
  NoiseSpec() = default;

  /// Mean standard deviation, used as the nominal level in metadata.
  double nominal() const;
};

struct Sample {
  Eigen::VectorXd input;
  Eigen::VectorXd output;
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  double sigma = 0.0;
  std::string source;
};

/// M paired samples stored as M x n_half row blocks.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Dimensions dims, Eigen::MatrixXd inputs, Eigen::MatrixXd outputs,
          Direction direction, DatasetMeta meta);

  const Dimensions& dims() const { return dims_; }
  Index size() const { return inputs_.rows(); }
  Direction direction() const { return direction_; }
  const DatasetMeta& meta() const { return meta_; }

  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::MatrixXd& outputs() const { return outputs_; }

  Sample sample(Index m) const;
  /// M x n site matrix [inputs | outputs].
  Eigen::MatrixXd sites() const;

 private:
  Dimensions dims_;
  Eigen::MatrixXd inputs_;
  Eigen::MatrixXd outputs_;
  Direction direction_ = Direction::forward;
  DatasetMeta meta_;
};

/// Block coupling matrix [[-U, 2T^T], [2T, -I]] with U = T^T T.
struct GroundTruthCoupling {
  Eigen::MatrixXd j;
};

TransmissionMatrix build_random_tm(const Dimensions& dims, double density, Rng& rng);
TransmissionMatrix build_random_tm(const Dimensions& dims, double density, std::uint64_t seed);

/// output = T input + sigma .* eps, eps drawn channel by channel from rng.
/// Noise is always drawn, even where sigma is zero.
Eigen::VectorXd transmit(const TransmissionMatrix& tm, const Eigen::VectorXd& input,
                         const NoiseSpec& noise, Rng& rng);

/// Inputs i.i.d. uniform on [0, 1]; all inputs are drawn first (sample-major,
/// channel-minor), then the noise of each sample in order.
Dataset generate_dataset(const TransmissionMatrix& tm, Index m_samples,
                         const NoiseSpec& noise, std::uint64_t seed);

Dataset reverse_dataset(const Dataset& ds);

GroundTruthCoupling assemble_ground_truth_coupling(const TransmissionMatrix& tm);

/// Number of nonzero entries.
Index support_size(const Eigen::MatrixXd& m);

}  // namespace tminfer
