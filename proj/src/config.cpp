#include "tminfer/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tminfer/checksum.hpp"

namespace tminfer {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + where + "." + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& into, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config key '" + where + "." + key + "' has the wrong type");
  }
}

json optim_json(const OptimOptions& o) {
  return json{{"max_iters", o.max_iters},     {"grad_tol", o.grad_tol}, {"decrement_tol", o.decrement_tol},
              {"memory", o.memory},           {"a_floor", o.a_floor},   {"variance_floor", o.variance_floor}};
}

json decimation_json(const DecimationOptions& d) {
  return json{{"fraction", d.fraction},
              {"min_batch", d.min_batch},
              {"refine", d.refine},
              {"max_refine_passes", d.max_refine_passes},
              {"bic_count_curvatures", d.bic.count_curvatures},
              {"bic_mean_pl", d.bic.mean_pl}};
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"w", "density", "m_samples", "sigma", "sigma_grid", "seed", "replicates", "scope", "optimizer",
                  "decimation", "experiments", "threads", "out", "binary_io"},
                 "config");
  RunConfig c;
  read(j, "w", c.w, "config");
  read(j, "density", c.density, "config");
  read(j, "m_samples", c.m_samples, "config");
  read(j, "sigma", c.sigma, "config");
  read(j, "sigma_grid", c.sigma_grid, "config");
  read(j, "seed", c.seed, "config");
  read(j, "replicates", c.replicates, "config");
  read(j, "threads", c.threads, "config");
  read(j, "out", c.out, "config");
  read(j, "binary_io", c.binary_io, "config");
  if (j.contains("scope")) {
    std::string s;
    read(j, "scope", s, "config");
    c.scope = parse_scope(s);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    reject_unknown(o, {"max_iters", "grad_tol", "decrement_tol", "memory", "a_floor", "variance_floor"}, "optimizer");
    read(o, "max_iters", c.optim.max_iters, "optimizer");
    read(o, "grad_tol", c.optim.grad_tol, "optimizer");
    read(o, "decrement_tol", c.optim.decrement_tol, "optimizer");
    read(o, "memory", c.optim.memory, "optimizer");
    read(o, "a_floor", c.optim.a_floor, "optimizer");
    read(o, "variance_floor", c.optim.variance_floor, "optimizer");
  }
  if (j.contains("decimation")) {
    const json& d = j.at("decimation");
    reject_unknown(d,
                   {"fraction", "min_batch", "refine", "max_refine_passes", "bic_count_curvatures", "bic_mean_pl"},
                   "decimation");
    read(d, "fraction", c.decimation.fraction, "decimation");
    read(d, "min_batch", c.decimation.min_batch, "decimation");
    read(d, "refine", c.decimation.refine, "decimation");
    read(d, "max_refine_passes", c.decimation.max_refine_passes, "decimation");
    read(d, "bic_count_curvatures", c.decimation.bic.count_curvatures, "decimation");
    read(d, "bic_mean_pl", c.decimation.bic.mean_pl, "decimation");
  }
  if (j.contains("experiments")) {
    const json& e = j.at("experiments");
    reject_unknown(e, {"gramian", "inverse", "spot_width_px"}, "experiments");
    read(e, "gramian", c.gramian, "experiments");
    read(e, "inverse", c.inverse, "experiments");
    read(e, "spot_width_px", c.spot_width_px, "experiments");
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  return json{{"w", w},
              {"density", density},
              {"m_samples", m_samples},
              {"sigma", sigma},
              {"sigma_grid", sigma_grid},
              {"seed", seed},
              {"replicates", replicates},
              {"scope", to_string(scope)},
              {"optimizer", optim_json(optim)},
              {"decimation", decimation_json(decimation)},
              {"experiments", {{"gramian", gramian}, {"inverse", inverse}, {"spot_width_px", spot_width_px}}},
              {"threads", threads},
              {"out", out},
              {"binary_io", binary_io}};
}

void RunConfig::validate() const {
  Dimensions::square(w);
  if (!(density > 0.0) || density > 1.0) throw std::invalid_argument("density must lie in (0, 1]");
  if (density * double(w) * double(w) < 1.0) throw std::invalid_argument("density too small for w");
  if (m_samples < 1) throw std::invalid_argument("m_samples must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be finite and >= 0");
  if (sigma_grid.empty()) throw std::invalid_argument("sigma_grid must not be empty");
  for (double s : sigma_grid)
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("sigma_grid entries must be finite and >= 0");
  if (!std::is_sorted(sigma_grid.begin(), sigma_grid.end()))
    throw std::invalid_argument("sigma_grid must be sorted ascending");
  if (replicates < 1) throw std::invalid_argument("replicates must be positive");
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (!(spot_width_px > 0.0)) throw std::invalid_argument("spot_width_px must be positive");
  if (out.empty()) throw std::invalid_argument("out must not be empty");
  optim.validate();
  decimation_options().validate();
}

json RunConfig::result_json() const {
  json j = to_json();
  j.erase("out");
  j.erase("threads");
  return j;
}

std::string RunConfig::fingerprint() const {
  json j = result_json();
  j.erase("scope");
  j.erase("binary_io");
  return sha256_hex(j.dump());
}

DecimationOptions RunConfig::decimation_options() const {
  DecimationOptions d = decimation;
  d.scope = scope;
  d.optim = optim;
  d.optim.threads = threads;
  return d;
}

SweepConfig RunConfig::sweep_config() const {
  SweepConfig s;
  s.sigma_grid = sigma_grid;
  s.dims = dims();
  s.density = density;
  s.m_samples = m_samples;
  s.master_seed = seed;
  s.replicates = replicates;
  s.decimation = decimation_options();
  s.gramian = gramian;
  s.inverse = inverse;
  s.spot_width_px = spot_width_px;
  return s;
}

}  // namespace tminfer
