#include "tminfer/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "tminfer/checksum.hpp"

namespace tminfer::io {

namespace {

constexpr char kBinaryMagic[8] = {'T', 'M', 'D', 'S', '0', '0', '0', '1'};

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

long long parse_int(std::string_view text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw IoError("not an integer: '" + std::string(text) + "'");
  return v;
}

void append_row(std::string& out, const auto& values) {
  for (Index j = 0; j < values.size(); ++j) {
    if (j) out += ',';
    out += format_real(values(j));
  }
  out += '\n';
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

template <typename T>
void put_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_raw(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("binary dataset truncated");
  char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace

std::string format_real(double x) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf, std::size_t(len));
}

double parse_real(std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw IoError("not a number: '" + std::string(text) + "'");
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, std::string_view content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  std::error_code ec;
  fs::create_directories(dir, ec);
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), std::streamsize(content.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::string format_matrix(const Eigen::MatrixXd& m) {
  std::string out = "# " + std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (Index r = 0; r < m.rows(); ++r) append_row(out, m.row(r));
  return out;
}

Eigen::MatrixXd parse_matrix(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0].front() != '#') throw IoError("matrix file lacks a shape header");
  std::istringstream header{std::string(lines[0].substr(1))};
  long long rows = -1, cols = -1;
  header >> rows >> cols;
  if (!header || rows < 0 || cols < 0) throw IoError("malformed matrix shape header");
  if (Index(lines.size()) - 1 != rows) throw IoError("matrix row count does not match its header");
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto fields = split(lines[std::size_t(r) + 1], ',');
    if (Index(fields.size()) != cols) throw IoError("matrix column count does not match its header");
    for (Index c = 0; c < cols; ++c) m(r, c) = parse_real(fields[std::size_t(c)]);
  }
  return m;
}

void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) { write_atomic(path, format_matrix(m)); }

Eigen::MatrixXd read_matrix(const fs::path& path) { return parse_matrix(read_file(path)); }

std::string format_dataset_csv(const Dataset& ds) {
  std::string out;
  const Eigen::MatrixXd sites = ds.sites();
  for (Index m = 0; m < sites.rows(); ++m) append_row(out, sites.row(m));
  return out;
}

std::string format_dataset_binary(const Dataset& ds) {
  const Eigen::MatrixXd sites = ds.sites();
  std::string out(kBinaryMagic, sizeof kBinaryMagic);
  put_raw<std::uint64_t>(out, std::uint64_t(sites.rows()));
  put_raw<std::uint64_t>(out, std::uint64_t(sites.cols()));
  for (Index m = 0; m < sites.rows(); ++m)
    for (Index j = 0; j < sites.cols(); ++j) put_raw<double>(out, sites(m, j));
  return out;
}

Dataset parse_dataset(const std::string& content, bool binary, const Dimensions& dims, Direction direction,
                      const DatasetMeta& meta) {
  const Index n = dims.n();
  Eigen::MatrixXd sites;
  if (binary) {
    if (content.size() < sizeof kBinaryMagic || std::memcmp(content.data(), kBinaryMagic, sizeof kBinaryMagic))
      throw IoError("not a binary dataset");
    std::size_t pos = sizeof kBinaryMagic;
    const auto rows = get_raw<std::uint64_t>(content, pos);
    const auto cols = get_raw<std::uint64_t>(content, pos);
    if (Index(cols) != n) throw IoError("binary dataset width does not match its metadata");
    sites.resize(Index(rows), n);
    for (Index m = 0; m < Index(rows); ++m)
      for (Index j = 0; j < n; ++j) sites(m, j) = get_raw<double>(content, pos);
    if (pos != content.size()) throw IoError("trailing bytes in binary dataset");
  } else {
    const auto lines = lines_of(content);
    sites.resize(Index(lines.size()), n);
    for (std::size_t m = 0; m < lines.size(); ++m) {
      const auto fields = split(lines[m], ',');
      if (Index(fields.size()) != n)
        throw IoError("dataset line " + std::to_string(m + 1) + " has the wrong number of columns");
      for (Index j = 0; j < n; ++j) sites(Index(m), j) = parse_real(fields[std::size_t(j)]);
    }
  }
  const Index h = dims.n_half();
  return Dataset(dims, sites.leftCols(h), sites.rightCols(h), direction, meta);
}

json dataset_meta_json(const Dataset& ds, bool binary, const std::string& checksum) {
  return json{{"w", ds.dims().w},
              {"samples", ds.size()},
              {"direction", to_string(ds.direction())},
              {"seed", ds.meta().seed},
              {"sigma", ds.meta().sigma},
              {"source", ds.meta().source},
              {"format", binary ? "binary" : "csv"},
              {"file", binary ? "dataset.bin" : "dataset.csv"},
              {"sha256", checksum}};
}

json estimate_to_json(const CouplingEstimate& est) {
  json rows = json::array();
  for (std::size_t r = 0; r < est.rows.size(); ++r) {
    const auto& p = est.rows[r];
    json active = json::array();
    json k = json::array();
    for (Index j : est.masks[r].indices()) {
      active.push_back(j);
      k.push_back(p.k(j));
    }
    rows.push_back(json{{"site", p.site},
                        {"a", p.a},
                        {"active", std::move(active)},
                        {"k", std::move(k)},
                        {"converged", bool(est.converged[r])},
                        {"iterations", est.iterations[r]}});
  }
  return json{{"w", est.dims.w},
              {"direction", to_string(est.direction)},
              {"scope", to_string(est.scope)},
              {"samples", est.samples},
              {"dataset_fingerprint", est.dataset_fingerprint},
              {"total_pl", est.total_pl},
              {"active_couplings", est.active_couplings()},
              {"rows", std::move(rows)}};
}

CouplingEstimate estimate_from_json(const json& j) {
  try {
    CouplingEstimate est;
    est.dims = Dimensions::square(j.at("w").get<int>());
    est.direction = parse_direction(j.at("direction").get<std::string>());
    est.scope = parse_scope(j.at("scope").get<std::string>());
    est.samples = j.at("samples").get<Index>();
    est.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    est.total_pl = j.at("total_pl").get<double>();
    const Index n = est.dims.n();
    for (const auto& row : j.at("rows")) {
      const Index site = row.at("site").get<Index>();
      if (site < 0 || site >= n) throw IoError("estimate row site out of range");
      RowParamsd p = RowParamsd::cold(site, n);
      p.a = row.at("a").get<double>();
      RowMask mask{site, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false)};
      const auto& active = row.at("active");
      const auto& k = row.at("k");
      if (active.size() != k.size()) throw IoError("estimate row has mismatched active/k lists");
      for (std::size_t i = 0; i < active.size(); ++i) {
        const Index c = active[i].get<Index>();
        if (c < 0 || c >= n || c == site) throw IoError("estimate coupling index out of range");
        mask.active(c) = true;
        p.k(c) = k[i].get<double>();
      }
      est.fitted_sites.push_back(site);
      est.rows.push_back(std::move(p));
      est.masks.push_back(std::move(mask));
      est.converged.push_back(row.at("converged").get<bool>());
      est.iterations.push_back(row.at("iterations").get<int>());
    }
    return est;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed estimate: ") + e.what());
  }
}

std::string format_path_csv(const DecimationPath& path, double sigma) {
  std::string out = "step,sigma,active_couplings,k_free,total_pl,bic,all_converged,selected\n";
  for (std::size_t i = 0; i < path.records.size(); ++i) {
    const auto& r = path.records[i];
    out += std::to_string(i) + ',' + format_real(sigma) + ',' + std::to_string(r.active_couplings) + ',' + std::to_string(r.k_free) + ',' +
           format_real(r.total_pl) + ',' + format_real(r.bic) + ',' + (r.all_converged ? "1" : "0") + ',' +
           (i == path.selected ? "1" : "0") + '\n';
  }
  return out;
}

namespace {

constexpr const char* kReportHeader =
    "sigma,replicate,ok,failure,true_couplings,selected_couplings,q_t_bic,q_t_true_support,sigma_hat_mean,"
    "balance,inverse_selected,inverse_density,q_img_inverse,q_img_pinv,q_spot_inverse,q_spot_pinv,q_focus,"
    "focus_peak_to_background";

}  // namespace

std::string format_report_csv(const std::vector<SweepRecord>& records) {
  std::string out = std::string(kReportHeader) + '\n';
  for (const auto& r : records) {
    out += format_real(r.sigma) + ',' + std::to_string(r.replicate) + ',' + (r.ok ? "1" : "0") + ',' +
           sanitize(r.failure) + ',' + std::to_string(r.true_couplings) + ',' +
           std::to_string(r.selected_couplings) + ',' + format_real(r.q_t_bic) + ',' +
           format_real(r.q_t_true_support) + ',' + format_real(r.sigma_hat_mean) + ',' + format_real(r.balance) +
           ',' + std::to_string(r.inverse_selected) + ',' + format_real(r.inverse_density) + ',' +
           format_real(r.q_img_inverse) + ',' + format_real(r.q_img_pinv) + ',' + format_real(r.q_spot_inverse) +
           ',' + format_real(r.q_spot_pinv) + ',' + format_real(r.q_focus) + ',' +
           format_real(r.focus_peak_to_background) + '\n';
  }
  return out;
}

std::vector<SweepRecord> parse_report_csv(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kReportHeader) throw IoError("report.csv has an unexpected header");
  std::vector<SweepRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 18) throw IoError("report.csv line " + std::to_string(i + 1) + " has the wrong width");
    SweepRecord r;
    r.sigma = parse_real(f[0]);
    r.replicate = int(parse_int(f[1]));
    r.ok = parse_int(f[2]) != 0;
    r.failure = std::string(f[3]);
    r.true_couplings = parse_int(f[4]);
    r.selected_couplings = parse_int(f[5]);
    r.q_t_bic = parse_real(f[6]);
    r.q_t_true_support = parse_real(f[7]);
    r.sigma_hat_mean = parse_real(f[8]);
    r.balance = parse_real(f[9]);
    r.inverse_selected = parse_int(f[10]);
    r.inverse_density = parse_real(f[11]);
    r.q_img_inverse = parse_real(f[12]);
    r.q_img_pinv = parse_real(f[13]);
    r.q_spot_inverse = parse_real(f[14]);
    r.q_spot_pinv = parse_real(f[15]);
    r.q_focus = parse_real(f[16]);
    r.focus_peak_to_background = parse_real(f[17]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_paths_csv(const std::vector<PathPoint>& paths) {
  std::string out = "sigma,replicate,direction,active_couplings,total_pl,bic,selected\n";
  for (const auto& p : paths)
    out += format_real(p.sigma) + ',' + std::to_string(p.replicate) + ',' + to_string(p.direction) + ',' +
           std::to_string(p.active_couplings) + ',' + format_real(p.total_pl) + ',' + format_real(p.bic) + ',' +
           (p.selected ? "1" : "0") + '\n';
  return out;
}

std::string format_timing_csv(const std::vector<SweepRecord>& records) {
  std::string out = "sigma,replicate,runtime_s\n";
  for (const auto& r : records)
    out += format_real(r.sigma) + ',' + std::to_string(r.replicate) + ',' + format_real(r.runtime_s) + '\n';
  return out;
}

Manifest::Manifest(fs::path dir) : dir_(std::move(dir)) {}

Manifest Manifest::load(const fs::path& dir) {
  const fs::path path = dir / kFileName;
  if (!fs::exists(path)) throw IoError("no " + std::string(kFileName) + " in " + dir.string());
  Manifest m(dir);
  try {
    const json j = json::parse(read_file(path));
    m.config_fingerprint_ = j.at("config_fingerprint").get<std::string>();
    for (const auto& [name, hash] : j.at("files").items()) m.files_[name] = hash.get<std::string>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

void Manifest::require_fingerprint(const std::string& fp) const {
  if (fp != config_fingerprint_)
    throw std::invalid_argument("config fingerprint mismatch: run directory was produced by another config");
}

std::string Manifest::read_verified(const std::string& name) const {
  const auto it = files_.find(name);
  if (it == files_.end()) throw std::invalid_argument(name + " is not recorded in the run manifest");
  std::string content = read_file(dir_ / name);
  if (sha256_hex(content) != it->second) throw std::invalid_argument("checksum mismatch for " + name);
  return content;
}

void Manifest::write(const std::string& name, std::string_view content) {
  write_atomic(dir_ / name, content);
  files_[name] = sha256_hex(content);
}

void Manifest::commit() const {
  json files = json::object();
  for (const auto& [name, hash] : files_) files[name] = hash;
  const json j{{"config_fingerprint", config_fingerprint_}, {"files", std::move(files)}};
  write_atomic(dir_ / kFileName, j.dump(2) + "\n");
}

}  // namespace tminfer::io
