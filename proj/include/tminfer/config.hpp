#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "tminfer/experiments.hpp"

namespace tminfer {

/// Everything a CLI run needs. Parsed from JSON with unknown keys rejected;
/// missing keys keep their defaults.
struct RunConfig {
  int w = 6;
  double density = 0.20;
  Index m_samples = 2000;
  /// Noise level for single runs (generate).
  double sigma = 0.05;
  /// Noise levels for sweeps.
  std::vector<double> sigma_grid = SweepConfig::default_grid();
  std::uint64_t seed = 1;
  int replicates = 3;
  FitScope scope = FitScope::output_sites;
  OptimOptions optim;
  DecimationOptions decimation;
  bool gramian = true;
  bool inverse = true;
  double spot_width_px = 1.0;
  int threads = 0;
  std::string out = "run";
  bool binary_io = false;

  /// Throws std::invalid_argument on a malformed document or unknown key.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
  /// to_json without the invocation-only fields (out, threads); this is the
  /// copy stored in a run directory.
  nlohmann::json result_json() const;

  void validate() const;

  /// SHA-256 of the canonical JSON, leaving out the fields that do not
  /// change results (out, threads, scope, binary_io).
  std::string fingerprint() const;

  Dimensions dims() const { return Dimensions::square(w); }
  DecimationOptions decimation_options() const;
  SweepConfig sweep_config() const;
};

}  // namespace tminfer
