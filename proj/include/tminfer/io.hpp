#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tminfer/experiments.hpp"

namespace tminfer::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Failure reading or writing an artifact (maps to the runtime exit code).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double x);
double parse_real(std::string_view text);

std::string read_file(const fs::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const fs::path& path, std::string_view content);

// Matrices: "# rows cols" header, then one comma-separated row per line.
std::string format_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd parse_matrix(const std::string& text);
void write_matrix(const fs::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const fs::path& path);

// Datasets: one sample per line, inputs then outputs (text), or a packed
// little-endian binary block.
std::string format_dataset_csv(const Dataset& ds);
std::string format_dataset_binary(const Dataset& ds);
Dataset parse_dataset(const std::string& content, bool binary, const Dimensions& dims,
                      Direction direction, const DatasetMeta& meta);

json dataset_meta_json(const Dataset& ds, bool binary, const std::string& checksum);

json estimate_to_json(const CouplingEstimate& est);
CouplingEstimate estimate_from_json(const json& j);

/// One line per decimation step; `sigma` is the nominal noise of the data.
std::string format_path_csv(const DecimationPath& path, double sigma);

std::string format_report_csv(const std::vector<SweepRecord>& records);
std::vector<SweepRecord> parse_report_csv(const std::string& text);
std::string format_paths_csv(const std::vector<PathPoint>& paths);
std::string format_timing_csv(const std::vector<SweepRecord>& records);

/// Maps artifact file names to their SHA-256 and carries the fingerprint of
/// the configuration that produced them. Stored as manifest.json in the run
/// directory; every stage verifies its inputs against it.
class Manifest {
 public:
  static constexpr const char* kFileName = "manifest.json";

  explicit Manifest(fs::path dir);

  /// Loads manifest.json; throws IoError when absent.
  static Manifest load(const fs::path& dir);

  const std::string& config_fingerprint() const { return config_fingerprint_; }
  void set_config_fingerprint(std::string fp) { config_fingerprint_ = std::move(fp); }

  /// Throws std::invalid_argument if `fp` differs from the recorded one.
  void require_fingerprint(const std::string& fp) const;

  /// Reads `name`, checking its content against the recorded hash.
  std::string read_verified(const std::string& name) const;
  bool has(const std::string& name) const { return files_.contains(name); }

  /// Writes `name` atomically and records its hash (the manifest itself is
  /// rewritten by commit()).
  void write(const std::string& name, std::string_view content);
  void commit() const;

 private:
  fs::path dir_;
  std::string config_fingerprint_;
  std::map<std::string, std::string> files_;
};

}  // namespace tminfer::io
