#include "cli.hpp"

#include <chrono>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "tminfer/checksum.hpp"
#include "tminfer/config.hpp"
#include "tminfer/io.hpp"

namespace tminfer::cli {

namespace {

using io::json;
using io::Manifest;
namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";
constexpr std::uint64_t kTagChannel = 0x100000;
constexpr std::uint64_t kTagData = 0x200000;
constexpr std::uint64_t kTagFocus = 0x300000;
constexpr std::uint64_t kTagImage = 0x400000;

struct Common {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string scope;
  bool binary_io = false;
  bool reverse = false;
  bool gramian = false;
  std::string timing;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::from_file(c.config_path);
  if (!c.out.empty()) cfg.out = c.out;
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (!c.scope.empty()) cfg.scope = parse_scope(c.scope);
  if (c.binary_io) cfg.binary_io = true;
  cfg.validate();
  return cfg;
}

json provenance(const RunConfig& cfg, const Manifest& m, const std::vector<std::string>& inputs) {
  json in = json::object();
  for (const auto& name : inputs) in[name] = sha256_hex(m.read_verified(name));
  return json{{"tool", "tminfer"}, {"version", kVersion}, {"config_fingerprint", cfg.fingerprint()},
              {"inputs", std::move(in)}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string suffixed(const std::string& stem, const std::string& ext, bool reverse) {
  return stem + (reverse ? ".inverse" : "") + ext;
}

Manifest open_run(const RunConfig& cfg) {
  Manifest m = Manifest::load(cfg.out);
  m.require_fingerprint(cfg.fingerprint());
  return m;
}

struct LoadedDataset {
  Dataset ds;
  std::vector<std::string> files;
};

LoadedDataset load_dataset(const Manifest& m, bool reverse) {
  const json meta = json::parse(m.read_verified("dataset.meta.json"));
  const std::string file = meta.at("file").get<std::string>();
  const std::string content = m.read_verified(file);
  if (sha256_hex(content) != meta.at("sha256").get<std::string>())
    throw std::invalid_argument("dataset checksum does not match its metadata");
  DatasetMeta dm{meta.at("seed").get<std::uint64_t>(), meta.at("sigma").get<double>(),
                 meta.at("source").get<std::string>()};
  Dataset ds = io::parse_dataset(content, meta.at("format") == "binary", Dimensions::square(meta.at("w").get<int>()),
                                 parse_direction(meta.at("direction").get<std::string>()), dm);
  if (ds.size() != meta.at("samples").get<Index>()) throw std::invalid_argument("dataset sample count mismatch");
  if (reverse) ds = reverse_dataset(ds);
  return {std::move(ds), {"dataset.meta.json", file}};
}

void cmd_generate(const RunConfig& cfg, std::ostream& out) {
  const Dimensions dims = cfg.dims();
  const TransmissionMatrix t = build_random_tm(dims, cfg.density, derive_seed(cfg.seed, kTagChannel));
  const Dataset ds = generate_dataset(t, cfg.m_samples, NoiseSpec::homogeneous(cfg.sigma, dims.n_half()),
                                      derive_seed(cfg.seed, kTagData));
  const std::string data = cfg.binary_io ? io::format_dataset_binary(ds) : io::format_dataset_csv(ds);

  Manifest m(cfg.out);
  m.set_config_fingerprint(cfg.fingerprint());
  m.write("config.json", dump(cfg.result_json()));
  m.write("T_true.csv", io::format_matrix(t.entries));
  m.write(cfg.binary_io ? "dataset.bin" : "dataset.csv", data);
  m.write("dataset.meta.json", dump(io::dataset_meta_json(ds, cfg.binary_io, sha256_hex(data))));
  m.commit();
  out << "generate: w=" << dims.w << " samples=" << ds.size() << " true couplings=" << support_size(t.entries)
      << "\n";
}

void cmd_fit(const RunConfig& cfg, bool reverse, std::ostream& out) {
  Manifest m = open_run(cfg);
  auto [ds, inputs] = load_dataset(m, reverse);
  const FitProblem problem(ds, cfg.scope);
  OptimOptions opts = cfg.optim;
  opts.threads = cfg.threads;
  const CouplingEstimate est = fit_all_rows(problem, problem.full_masks(), opts);
  json j = io::estimate_to_json(est);
  j["provenance"] = provenance(cfg, m, inputs);
  m.write(suffixed("estimate_full", ".json", reverse), dump(j));
  m.commit();
  out << "fit: " << est.rows.size() << " rows, " << est.active_couplings() << " couplings, "
      << (est.all_converged() ? "all converged" : "some rows did not converge") << "\n";
}

void cmd_select(const RunConfig& cfg, bool reverse, std::ostream& out) {
  Manifest m = open_run(cfg);
  auto [ds, inputs] = load_dataset(m, reverse);
  const std::string full_name = suffixed("estimate_full", ".json", reverse);
  const CouplingEstimate full = io::estimate_from_json(json::parse(m.read_verified(full_name)));
  inputs.push_back(full_name);

  DecimationOptions opts = cfg.decimation_options();
  opts.scope = full.scope;
  const DecimationResult res = run_decimation(ds, opts, &full);
  json j = io::estimate_to_json(res.best);
  j["provenance"] = provenance(cfg, m, inputs);
  m.write(suffixed("path", ".csv", reverse), io::format_path_csv(res.path, ds.meta().sigma));
  m.write(suffixed("estimate_selected", ".json", reverse), dump(j));
  m.commit();
  out << "select: " << res.path.records.size() << " path points, selected " << res.best.active_couplings()
      << " couplings\n";
}

void cmd_extract(const RunConfig& cfg, bool reverse, bool gramian, std::ostream& out) {
  Manifest m = open_run(cfg);
  const std::string name = suffixed("estimate_selected", ".json", reverse);
  const CouplingEstimate est = io::estimate_from_json(json::parse(m.read_verified(name)));
  if (gramian && est.scope != FitScope::all_sites)
    throw std::invalid_argument("scope error: the Gramian needs an estimate fitted with --scope all");

  const TmExtraction ext = extract_tm(est);
  m.write(reverse ? "Tinv_inf.csv" : "T_inf.csv", io::format_matrix(ext.tm.entries));
  m.write(suffixed("sigma_hat", ".csv", reverse), io::format_matrix(ext.noise.sigma_hat));
  json summary{{"role", to_string(ext.tm.role)},
               {"flagged_rows", ext.flagged_rows},
               {"sigma_hat_mean", ext.noise.sigma_hat.mean()},
               {"active_couplings", est.active_couplings()}};
  if (est.scope == FitScope::all_sites)
    m.write(suffixed("output_residual", ".csv", reverse), io::format_matrix(ext.output_residual));
  if (gramian) {
    const GramianExtraction g = extract_gramian(est);
    m.write(suffixed("U_inf", ".csv", reverse), io::format_matrix(g.u));
    summary["balance"] = g.balance;
    summary["input_beta"] = g.input_beta;
  }
  summary["provenance"] = provenance(cfg, m, {name});
  m.write(suffixed("extract", ".json", reverse), dump(summary));
  m.commit();
  out << "extract: " << to_string(ext.tm.role) << " matrix, mean sigma_hat " << ext.noise.sigma_hat.mean();
  if (gramian) out << ", balance " << summary["balance"].get<double>();
  out << "\n";
}

void cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Manifest m = open_run(cfg);
  const Dimensions dims = cfg.dims();
  const TransmissionMatrix t_true(dims, io::parse_matrix(m.read_verified("T_true.csv")));
  const TransmissionMatrix t_inf(dims, io::parse_matrix(m.read_verified("T_inf.csv")));
  const json meta = json::parse(m.read_verified("dataset.meta.json"));
  const double sigma = meta.at("sigma").get<double>();
  const NoiseSpec noise = NoiseSpec::homogeneous(sigma, dims.n_half());
  std::vector<std::string> inputs{"T_true.csv", "T_inf.csv", "dataset.meta.json"};

  const auto true_pattern = t_true.entries.array() != 0.0;
  const auto inf_pattern = t_inf.entries.array() != 0.0;
  json j{{"sigma", sigma},
         {"q_t", quality_q(t_true.entries, t_inf.entries).q},
         {"true_couplings", support_size(t_true.entries)},
         {"selected_couplings", support_size(t_inf.entries)},
         {"support_mismatch", (true_pattern != inf_pattern).count()}};
  if (m.has("sigma_hat.csv")) {
    j["sigma_hat_mean"] = io::parse_matrix(m.read_verified("sigma_hat.csv")).mean();
    inputs.push_back("sigma_hat.csv");
  }

  const Eigen::VectorXd target = focusing_target(t_true, gaussian_spot(dims, cfg.spot_width_px));
  Rng focus_rng(derive_seed(cfg.seed, kTagFocus));
  const FocusingResult focus = focusing_experiment(t_true, t_inf, target, noise, focus_rng);
  if (focus.rank_deficient) err << "warning: inferred T is rank deficient; minimum-norm focusing input used\n";
  j["q_focus"] = focus.quality.q;
  j["focus_peak_to_background"] = focus.peak_to_background;

  const Eigen::VectorXd glyph = glyph_image(dims);
  const std::uint64_t image_seed = derive_seed(cfg.seed, kTagImage);
  Rng r_pinv(image_seed);
  j["q_img_pinv"] = image_reconstruction(pseudo_inverse(t_inf.entries), t_true, glyph, noise, r_pinv).quality.q;
  if (m.has("Tinv_inf.csv")) {
    const Eigen::MatrixXd t_inv = io::parse_matrix(m.read_verified("Tinv_inf.csv"));
    Rng r_inv(image_seed);
    j["q_img_inverse"] = image_reconstruction(t_inv, t_true, glyph, noise, r_inv).quality.q;
    j["inverse_density"] = double(support_size(t_inv)) / double(dims.n_half() * dims.n_half());
    inputs.push_back("Tinv_inf.csv");
  }
  j["provenance"] = provenance(cfg, m, inputs);
  m.write("eval.json", dump(j));
  m.commit();
  out << "eval: Q(T)=" << j["q_t"].get<double>() << " support mismatch=" << j["support_mismatch"].get<Index>()
      << " Q(focus)=" << focus.quality.q << "\n";
}

void print_summary(const std::vector<SweepRecord>& summary, std::ostream& out) {
  out << std::setw(6) << "sigma" << std::setw(8) << "k_true" << std::setw(8) << "k_bic" << std::setw(10) << "Q_bic"
      << std::setw(10) << "Q_true" << std::setw(10) << "Q_inv" << std::setw(10) << "Q_pinv" << std::setw(10)
      << "Q_focus" << "\n";
  for (const auto& r : summary) {
    out << std::fixed << std::setprecision(3) << std::setw(6) << r.sigma << std::setw(8) << r.true_couplings
        << std::setw(8) << r.selected_couplings << std::setw(10) << r.q_t_bic << std::setw(10)
        << r.q_t_true_support << std::setw(10) << r.q_img_inverse << std::setw(10) << r.q_img_pinv
        << std::setw(10) << r.q_focus << (r.ok ? "" : "  (failed)") << "\n";
  }
  out.unsetf(std::ios::floatfield);
}

void cmd_sweep(const RunConfig& cfg, const std::string& timing, std::ostream& out, std::ostream& err) {
  const ExperimentReport report = run_sweep(cfg.sweep_config());
  Manifest m(cfg.out);
  if (fs::exists(fs::path(cfg.out) / Manifest::kFileName)) {
    Manifest existing = Manifest::load(cfg.out);
    if (existing.config_fingerprint() == cfg.fingerprint()) m = std::move(existing);
  }
  m.set_config_fingerprint(cfg.fingerprint());
  m.write("config.json", dump(cfg.result_json()));
  m.write("report.csv", io::format_report_csv(report.records));
  m.write("paths.csv", io::format_paths_csv(report.paths));
  m.commit();
  if (!timing.empty()) io::write_atomic(timing, io::format_timing_csv(report.records));
  std::size_t failed = 0;
  for (const auto& r : report.records) {
    if (!r.ok) {
      ++failed;
      err << "sweep: sigma=" << r.sigma << " replicate=" << r.replicate << " failed: " << r.failure << "\n";
    }
  }
  out << "sweep: " << report.records.size() << " records, " << failed << " failed\n";
}

void cmd_report(const RunConfig& cfg, std::ostream& out) {
  Manifest m = open_run(cfg);
  const auto records = io::parse_report_csv(m.read_verified("report.csv"));
  const auto summary = summarize(records);
  json rows = json::array();
  for (const auto& r : summary)
    rows.push_back(json{{"sigma", r.sigma},
                        {"ok", r.ok},
                        {"true_couplings", r.true_couplings},
                        {"selected_couplings", r.selected_couplings},
                        {"q_t_bic", r.q_t_bic},
                        {"q_t_true_support", r.q_t_true_support},
                        {"sigma_hat_mean", r.sigma_hat_mean},
                        {"balance", r.balance},
                        {"inverse_density", r.inverse_density},
                        {"q_img_inverse", r.q_img_inverse},
                        {"q_img_pinv", r.q_img_pinv},
                        {"q_spot_inverse", r.q_spot_inverse},
                        {"q_spot_pinv", r.q_spot_pinv},
                        {"q_focus", r.q_focus},
                        {"focus_peak_to_background", r.focus_peak_to_background}});
  m.write("summary.csv", io::format_report_csv(summary));
  m.write("report.json",
          dump(json{{"summary", std::move(rows)}, {"provenance", provenance(cfg, m, {"report.csv"})}}));
  m.commit();
  print_summary(summary, out);
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "run directory");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--threads", c.threads, "worker threads (0: TMINFER_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--scope", c.scope, "fitted sites")->check(CLI::IsMember({"output", "all"}));
  sub->add_flag("--binary-io", c.binary_io, "packed binary dataset file");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transmission-matrix inference by pseudolikelihood maximization", "tminfer"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common c;

  auto* gen = app.add_subcommand("generate", "draw a channel and a synthetic dataset");
  auto* fit = app.add_subcommand("fit", "fit every row at full support");
  auto* sel = app.add_subcommand("select", "decimate and select the support by BIC");
  auto* ext = app.add_subcommand("extract", "recover T (or its inverse), noise and the Gramian");
  auto* ev = app.add_subcommand("eval", "quality, focusing and imaging against the generated channel");
  auto* sw = app.add_subcommand("sweep", "noise sweep over the configured grid");
  auto* rep = app.add_subcommand("report", "replicate-averaged summary of a sweep");
  for (auto* sub : {gen, fit, sel, ext, ev, sw, rep}) add_common(sub, c);
  for (auto* sub : {fit, sel, ext}) sub->add_flag("--reverse", c.reverse, "use the reversed dataset (inverse matrix)");
  ext->add_flag("--gramian", c.gramian, "also extract U and the balance");
  sw->add_option("--timing", c.timing, "write per-record runtimes to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    const RunConfig cfg = resolve(c);
    if (gen->parsed()) cmd_generate(cfg, out);
    else if (fit->parsed()) cmd_fit(cfg, c.reverse, out);
    else if (sel->parsed()) cmd_select(cfg, c.reverse, out);
    else if (ext->parsed()) cmd_extract(cfg, c.reverse, c.gramian, out);
    else if (ev->parsed()) cmd_eval(cfg, out, err);
    else if (sw->parsed()) cmd_sweep(cfg, c.timing, out, err);
    else if (rep->parsed()) cmd_report(cfg, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  err << "done in " << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
  return kOk;
}

}  // namespace tminfer::cli
