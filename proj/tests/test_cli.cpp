#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "tminfer/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tminfer");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = tminfer::cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tminfer_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "input.json";
  std::ofstream(p) << j.dump();
  return p;
}

json small_config() {
  return json{{"w", 3}, {"density", 0.4}, {"m_samples", 300}, {"sigma", 0.05}, {"replicates", 2},
              {"sigma_grid", {0.0, 0.1}}};
}

std::string slurp(const fs::path& p) { return tminfer::io::read_file(p); }

}  // namespace

TEST(Cli, FullChainProducesEveryArtifact) {
  const auto dir = fresh_dir("chain");
  const auto cfg = write_config(dir, small_config()).string();
  const auto run = (dir / "run").string();
  for (const std::vector<std::string> args :
       {std::vector<std::string>{"generate"}, {"fit"}, {"select"}, {"extract"}, {"fit", "--reverse"},
        {"select", "--reverse"}, {"extract", "--reverse"}, {"eval"}}) {
    auto full = args;
    full.insert(full.end(), {"--config", cfg, "--out", run});
    const auto r = run_cli(full);
    ASSERT_EQ(r.code, 0) << args[0] << ": " << r.err;
    EXPECT_NE(r.err.find("done in"), std::string::npos);
  }
  for (const char* name : {"manifest.json", "config.json", "T_true.csv", "dataset.csv", "dataset.meta.json",
                           "estimate_full.json", "path.csv", "estimate_selected.json", "T_inf.csv",
                           "sigma_hat.csv", "extract.json", "estimate_full.inverse.json", "path.inverse.csv",
                           "Tinv_inf.csv", "eval.json"})
    EXPECT_TRUE(fs::exists(fs::path(run) / name)) << name;

  const json ev = json::parse(slurp(fs::path(run) / "eval.json"));
  EXPECT_LT(ev.at("q_t").get<double>(), 0.5);
  EXPECT_EQ(ev.at("provenance").at("tool"), "tminfer");
  EXPECT_EQ(slurp(fs::path(run) / "eval.json").find("runtime"), std::string::npos);
}

TEST(Cli, RegenerationIsByteIdentical) {
  const auto dir = fresh_dir("regen");
  const auto cfg = write_config(dir, small_config()).string();
  const auto a = dir / "a";
  const char* names[] = {"T_true.csv", "dataset.csv", "dataset.meta.json", "config.json", "manifest.json"};
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", a.string()}).code, 0);
  std::vector<std::string> first;
  for (const char* name : names) first.push_back(slurp(a / name));
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", a.string()}).code, 0);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(slurp(a / names[i]), first[i]) << names[i];
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", (dir / "c").string(), "--threads", "3"}).code, 0);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(slurp(dir / "c" / names[i]), first[i]) << names[i];

  // another directory and format: same channel and samples
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", (dir / "b").string(), "--binary-io"}).code, 0);
  EXPECT_EQ(slurp(dir / "b" / "T_true.csv"), first[0]);
  EXPECT_TRUE(fs::exists(dir / "b" / "dataset.bin"));
  const json meta_a = json::parse(first[2]);
  const json meta_b = json::parse(slurp(dir / "b" / "dataset.meta.json"));
  EXPECT_EQ(meta_a.at("samples"), meta_b.at("samples"));
  EXPECT_EQ(meta_a.at("seed"), meta_b.at("seed"));
}

TEST(Cli, InvalidConfigurationsExitWithValidationCodeAndWriteNothing) {
  const auto dir = fresh_dir("invalid");
  std::ofstream(dir / "broken.json") << "{\"w\": 3,";
  auto r = run_cli({"generate", "--config", (dir / "broken.json").string(), "--out", (dir / "r1").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "r1"));

  auto bad = small_config();
  bad["optimizer"] = json{{"max_iter", 10}};
  r = run_cli({"generate", "--config", write_config(dir, bad).string(), "--out", (dir / "r2").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("max_iter"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "r2"));

  bad = small_config();
  bad["w"] = 1;
  r = run_cli({"generate", "--config", write_config(dir, bad).string(), "--out", (dir / "r3").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "r3"));

  EXPECT_EQ(run_cli({"generate", "--bogus"}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"fit", "--scope", "half"}).code, 1);
}

TEST(Cli, TamperedArtifactIsRejected) {
  const auto dir = fresh_dir("tamper");
  const auto cfg = write_config(dir, small_config()).string();
  const auto run = (dir / "run").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", run}).code, 0);
  {
    std::ofstream f(fs::path(run) / "dataset.csv", std::ios::app);
    f << "0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n";
  }
  const auto r = run_cli({"fit", "--config", cfg, "--out", run});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("checksum mismatch"), std::string::npos);
  EXPECT_FALSE(fs::exists(fs::path(run) / "estimate_full.json"));
}

TEST(Cli, ForeignConfigurationIsRejected) {
  const auto dir = fresh_dir("foreign");
  const auto cfg = write_config(dir, small_config()).string();
  const auto run = (dir / "run").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", run}).code, 0);
  const auto r = run_cli({"fit", "--config", cfg, "--out", run, "--seed", "2"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("fingerprint"), std::string::npos);
  // thread count and scope do not change the fingerprint
  EXPECT_EQ(run_cli({"fit", "--config", cfg, "--out", run, "--threads", "2", "--scope", "all"}).code, 0);
}

TEST(Cli, GramianNeedsAnAllSitesFit) {
  const auto dir = fresh_dir("gramian");
  const auto cfg = write_config(dir, small_config()).string();
  const auto run = (dir / "run").string();
  ASSERT_EQ(run_cli({"generate", "--config", cfg, "--out", run}).code, 0);
  ASSERT_EQ(run_cli({"fit", "--config", cfg, "--out", run}).code, 0);
  ASSERT_EQ(run_cli({"select", "--config", cfg, "--out", run}).code, 0);
  auto r = run_cli({"extract", "--config", cfg, "--out", run, "--gramian"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("scope"), std::string::npos);

  ASSERT_EQ(run_cli({"fit", "--config", cfg, "--out", run, "--scope", "all"}).code, 0);
  ASSERT_EQ(run_cli({"select", "--config", cfg, "--out", run, "--scope", "all"}).code, 0);
  r = run_cli({"extract", "--config", cfg, "--out", run, "--scope", "all", "--gramian"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(run) / "U_inf.csv"));
}

TEST(Cli, MissingRunDirectoryIsARuntimeError) {
  const auto dir = fresh_dir("missing");
  EXPECT_EQ(run_cli({"fit", "--out", (dir / "nowhere").string()}).code, 2);
}

TEST(Cli, SweepAndReport) {
  const auto dir = fresh_dir("sweep");
  const auto cfg = write_config(dir, small_config()).string();
  const auto run = (dir / "run").string();
  auto r = run_cli({"sweep", "--config", cfg, "--out", run, "--timing", (dir / "timing.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto records = tminfer::io::parse_report_csv(slurp(fs::path(run) / "report.csv"));
  ASSERT_EQ(records.size(), 4u);
  for (int rep = 0; rep < 2; ++rep)
    for (int s = 0; s < 2; ++s) {
      const auto& rec = records[std::size_t(rep * 2 + s)];
      EXPECT_EQ(rec.replicate, rep);
      EXPECT_EQ(rec.sigma, s == 0 ? 0.0 : 0.1);
      EXPECT_TRUE(rec.ok);
    }
  EXPECT_TRUE(fs::exists(dir / "timing.csv"));
  EXPECT_EQ(slurp(fs::path(run) / "report.csv").find("runtime"), std::string::npos);

  r = run_cli({"report", "--config", cfg, "--out", run});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(tminfer::io::parse_report_csv(slurp(fs::path(run) / "summary.csv")).size(), 2u);
  EXPECT_TRUE(fs::exists(fs::path(run) / "report.json"));
}
