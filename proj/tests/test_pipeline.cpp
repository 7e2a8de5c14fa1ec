#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hspsim/hspsim.hpp"

namespace {

using namespace hspsim;
namespace fs = std::filesystem;

fs::path temp_dir(const char* tag) {
  const auto dir = fs::temp_directory_path() /
                   (std::string("hspsim_pipe_") + tag + "_" +
                    std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Operating-point counting config, scaled down to unit-test size.
RunConfig counting_config(const fs::path& out, uint64_t n_pulses = 200000) {
  RunConfig c = parse_config_text(
      "[run]\nseed=11\nn_pulses=1\n"
      "[source]\ns1=0.025686\npump_photons=1.0\nschmidt_k=1.33\nn_modes=8\n"
      "[detector]\neta_spd=0.8\ndark_prob=1.35e-5\nsplitter_ratio=0.5\n"
      "eta_channel_s=0.5\neta_channel_i=0.45\n",
      std::nullopt, n_pulses, out.string());
  return c;
}

// Homodyne config with a smaller record count than the instrument default.
RunConfig homodyne_config(const fs::path& out, uint64_t n_records = 6000) {
  RunConfig c = parse_config_text(
      "[run]\nseed=21\nn_pulses=1\n"
      "[source]\ns1=0.025686\npump_photons=1.0\nschmidt_k=1.33\nn_modes=8\n"
      "[detector]\neta_spd=0.8\ndark_prob=1.35e-5\nsplitter_ratio=0.5\n"
      "eta_channel_s=0.5\neta_channel_i=0.45\n"
      "[homodyne]\neta_total=0.192\ncutoff=16\n",
      std::nullopt, n_records, out.string());
  c.n_records = n_records;
  refresh_config_hash(c);
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(HSPSIM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

TEST(CountingPipelineTest, WritesProvenancedOutputs) {
  const auto dir = temp_dir("count");
  const RunConfig cfg = counting_config(dir);
  const CountingSummary s = run_counting_pipeline(cfg);

  EXPECT_TRUE(s.defined);
  EXPECT_NEAR(s.ratio, 0.40, 0.03);
  EXPECT_NEAR(s.eta_h, 0.50, 0.04);
  EXPECT_GT(s.record.N_h, 1000u);
  EXPECT_NEAR(s.herald_rate_hz, 3.4e5, 0.4e5);

  for (const char* f : {"counts.csv", "counts.json", "counting_summary.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const json summary = read_json_file((dir / "counting_summary.json").string());
  for (const char* key :
       {"n_pulses", "ratio", "eta_h", "eta_h_warning", "g2_h", "g2_s", "M_s",
        "herald_rate_hz", "estimators_defined", "provenance"})
    EXPECT_TRUE(summary.contains(key)) << key;
  EXPECT_EQ(summary["provenance"]["seed"].get<uint64_t>(), 11u);
  EXPECT_EQ(summary["provenance"]["config_hash"].get<std::string>(),
            cfg.config_hash);
  EXPECT_FALSE(summary.contains("s1_fit"));  // no sweep requested

  const json counts = read_json_file((dir / "counts.json").string());
  EXPECT_EQ(counts["N_h"].get<uint64_t>(), s.record.N_h);
  fs::remove_all(dir);
}

TEST(CountingPipelineTest, SweepConfigAddsQuadraticFitBlock) {
  const auto dir = temp_dir("sweep");
  RunConfig cfg = parse_config_text(
      "[run]\nseed=31\nn_pulses=1000\n"
      "[source]\ns1=0.025686\npump_photons=1.0\nschmidt_k=1.33\nn_modes=8\n"
      "[detector]\neta_spd=0.8\ndark_prob=1.35e-5\nsplitter_ratio=0.5\n"
      "eta_channel_s=0.5\neta_channel_i=0.45\n"
      "[pump_sweep]\npump_levels=0.5,1.0,1.5\npulses_per_level=200000\n",
      std::nullopt, std::nullopt, dir.string());
  const CountingSummary s = run_counting_pipeline(cfg);
  ASSERT_TRUE(s.has_sweep);
  // The sweep fit is in herald-probability units: s1 * idler arm efficiency.
  const double expected = 0.025686 * 0.45 * 0.8;
  EXPECT_NEAR(s.sweep.fit.s1, expected, 0.1 * expected);

  const json summary = read_json_file((dir / "counting_summary.json").string());
  ASSERT_TRUE(summary.contains("s1_fit"));
  EXPECT_TRUE(summary["s1_fit"].contains("s1"));
  EXPECT_TRUE(summary["s1_fit"].contains("rms_residual"));
  ASSERT_EQ(summary["s1_fit"]["points"].size(), 3u);
  EXPECT_DOUBLE_EQ(summary["s1_fit"]["points"][1]["pump_photons"].get<double>(),
                   1.0);
  fs::remove_all(dir);
}

TEST(CountingPipelineTest, SilentDetectorsYieldUndefinedSummary) {
  const auto dir = temp_dir("zero");
  RunConfig cfg = parse_config_text(
      "[run]\nseed=41\nn_pulses=5000\n"
      "[source]\ns1=0.0\npump_photons=1.0\nschmidt_weights=1.0\n"
      "[detector]\ndark_prob=0.0\n",
      std::nullopt, std::nullopt, dir.string());
  const CountingSummary s = run_counting_pipeline(cfg);
  EXPECT_FALSE(s.defined);
  EXPECT_EQ(s.record.N_h, 0u);
  EXPECT_DOUBLE_EQ(s.ratio, 0.0);
  EXPECT_DOUBLE_EQ(s.eta_h, 0.0);
  EXPECT_DOUBLE_EQ(s.herald_rate_hz, 0.0);
  const json summary = read_json_file((dir / "counting_summary.json").string());
  EXPECT_FALSE(summary["estimators_defined"].get<bool>());
  fs::remove_all(dir);
}

TEST(HomodynePipelineTest, RecoversGeneratingEfficiency) {
  const auto dir = temp_dir("homo");
  const RunConfig cfg = homodyne_config(dir);
  const HomodyneSummary s = run_homodyne_pipeline(cfg);

  EXPECT_TRUE(s.fit.converged);
  EXPECT_NEAR(s.fit.eta, 0.192, 0.05);
  EXPECT_NEAR(s.variance_db, 1.41, 0.30);
  EXPECT_GT(s.scale_gain, 0.0);
  EXPECT_EQ(s.heralded_calibrated.size(), cfg.n_records);

  for (const char* f :
       {"vacuum.csv", "heralded.csv", "histogram.csv", "fit.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "budget.json"));  // no budget block given

  const json fit = read_json_file((dir / "fit.json").string());
  const std::vector<std::string> expected_keys = {
      "eta",     "stderr_eta", "log_likelihood", "variance_db", "chi2",
      "dof",     "p_value",    "n_samples",      "seed",        "provenance"};
  ASSERT_EQ(fit.size(), expected_keys.size());
  for (const auto& key : expected_keys) EXPECT_TRUE(fit.contains(key)) << key;
  EXPECT_EQ(fit["n_samples"].get<uint64_t>(), cfg.n_records);

  // histogram.csv: provenance comment + column header + one row per bin.
  const std::string hist_text = slurp(dir / "histogram.csv");
  EXPECT_EQ(std::count(hist_text.begin(), hist_text.end(), '\n'),
            2 + cfg.n_bins);
  fs::remove_all(dir);
}

TEST(HomodynePipelineTest, BudgetBlockDividesOutKnownFactors) {
  const auto dir = temp_dir("budget");
  RunConfig cfg = homodyne_config(dir, 4000);
  cfg.has_budget = true;
  cfg.eta_heralding = 0.5;
  cfg.eta_hd = 0.95;
  cfg.eta_transmission = 0.9;
  refresh_config_hash(cfg);
  const HomodyneSummary s = run_homodyne_pipeline(cfg);

  const json budget = read_json_file((dir / "budget.json").string());
  EXPECT_DOUBLE_EQ(budget["eta_total"].get<double>(), s.fit.eta);
  EXPECT_NEAR(budget["mode_match"].get<double>(),
              s.fit.eta / (0.5 * 0.95 * 0.9), 1e-12);
  EXPECT_FALSE(budget["warning"].get<bool>());
  fs::remove_all(dir);
}

TEST(HomodynePipelineTest, ZeroEfficiencyFitsToVacuum) {
  const auto dir = temp_dir("dark");
  RunConfig cfg = homodyne_config(dir, 4000);
  cfg.eta_total = 0.0;
  refresh_config_hash(cfg);
  const HomodyneSummary s = run_homodyne_pipeline(cfg);
  EXPECT_LE(s.fit.eta, 0.02);
  EXPECT_NEAR(s.variance_db, 0.0, 0.10);
  fs::remove_all(dir);
}

TEST(HomodynePipelineTest, SimulatedPeaksAreAPureFunctionOfSeedAndIndex) {
  const FockMixture mix{{0.8, 0.2}};
  PulseShapeParams shape;
  shape.leak_amplitude = 0.05;
  const uint64_t seed = 90210;
  const std::vector<double> peaks = simulate_peaks(mix, shape, 50, seed, 2);
  ASSERT_EQ(peaks.size(), 50u);

  // Each record must equal the hand-built chain at its own index.
  const WaveformSynthesizer synth(shape);
  Waveform wf;
  for (uint64_t i : {0ul, 7ul, 49ul}) {
    const double x = sample_quadrature(mix, 0.0, i, seed);
    synth.synthesize(x, i, seed, &wf);
    EXPECT_EQ(peaks[i], extract_peak(wf, shape.window_ns)) << i;
  }
}

TEST(DeterminismTest, CountingOutputsAreByteIdenticalAcrossThreadCounts) {
  const auto dir1 = temp_dir("det_c1");
  const auto dir4 = temp_dir("det_c4");
  RunConfig cfg = counting_config(dir1, 50000);
  cfg.n_threads = 1;
  run_counting_pipeline(cfg);
  cfg.output_dir = dir4.string();
  cfg.n_threads = 4;
  run_counting_pipeline(cfg);
  for (const char* f : {"counts.csv", "counts.json", "counting_summary.json"})
    EXPECT_EQ(slurp(dir1 / f), slurp(dir4 / f)) << f;
  fs::remove_all(dir1);
  fs::remove_all(dir4);
}

TEST(DeterminismTest, HomodyneOutputsAreByteIdenticalAcrossThreadCounts) {
  const auto dir1 = temp_dir("det_h1");
  const auto dir4 = temp_dir("det_h4");
  RunConfig cfg = homodyne_config(dir1, 2000);
  cfg.n_threads = 1;
  run_homodyne_pipeline(cfg);
  cfg.output_dir = dir4.string();
  cfg.n_threads = 4;
  run_homodyne_pipeline(cfg);
  for (const char* f :
       {"vacuum.csv", "heralded.csv", "fit.json", "histogram.csv"})
    EXPECT_EQ(slurp(dir1 / f), slurp(dir4 / f)) << f;
  fs::remove_all(dir1);
  fs::remove_all(dir4);
}

TEST(AnalyzePipelineTest, ReanalysisReproducesTheRunFitExactly) {
  const auto run_dir = temp_dir("an_run");
  const auto re_dir = temp_dir("an_re");
  const RunConfig cfg = homodyne_config(run_dir, 3000);
  run_homodyne_pipeline(cfg);

  bool seeds_match = false;
  const HomodyneSummary s = analyze_pipeline(
      (run_dir / "vacuum.csv").string(), (run_dir / "heralded.csv").string(),
      cfg.n_bins, re_dir.string(), &seeds_match);
  EXPECT_TRUE(seeds_match);
  EXPECT_TRUE(s.fit.converged);
  EXPECT_EQ(slurp(run_dir / "fit.json"), slurp(re_dir / "fit.json"));
  EXPECT_EQ(slurp(run_dir / "histogram.csv"), slurp(re_dir / "histogram.csv"));
  fs::remove_all(run_dir);
  fs::remove_all(re_dir);
}

TEST(AnalyzePipelineTest, FlagsSeedMismatchBetweenDatasets) {
  const auto dir = temp_dir("an_mix");
  QuadratureDataset vac, her;
  PulseRng rng(1, RngStream::kQuadrature, 0);
  for (int i = 0; i < 500; ++i) {
    vac.values.push_back(0.3 * rng.gaussian());
    her.values.push_back(0.3 * rng.gaussian());
  }
  vac.label = "vacuum";
  her.label = "heralded";
  vac.n_records = her.n_records = 500;
  write_quadrature_csv((dir / "v.csv").string(), vac, Provenance{1, "aa"});
  write_quadrature_csv((dir / "h.csv").string(), her, Provenance{2, "bb"});

  bool seeds_match = true;
  analyze_pipeline((dir / "v.csv").string(), (dir / "h.csv").string(), 40,
                   dir.string(), &seeds_match);
  EXPECT_FALSE(seeds_match);
  // Outputs inherit the heralded file's provenance.
  const json fit = read_json_file((dir / "fit.json").string());
  EXPECT_EQ(fit["provenance"]["seed"].get<uint64_t>(), 2u);
  fs::remove_all(dir);
}

TEST(PipelineErrorTest, UnwritableOutputDirIsAnIoError) {
  RunConfig cfg = counting_config("/proc/hspsim_cannot_write", 4096);
  EXPECT_THROW(run_counting_pipeline(cfg), IoError);
}

TEST(ReportTest, PairsCountingAndFitInputsIntoSevenRows) {
  const auto dir = temp_dir("report");
  RunConfig ccfg = counting_config(dir / "c", 400000);
  run_counting_pipeline(ccfg);
  RunConfig hcfg = homodyne_config(dir / "h", 6000);
  hcfg.seed = ccfg.seed;  // same acquisition seed: unmixed provenance
  refresh_config_hash(hcfg);
  run_homodyne_pipeline(hcfg);

  const Report rep = build_report({(dir / "c" / "counting_summary.json").string(),
                                   (dir / "h" / "fit.json").string()});
  ASSERT_EQ(rep.rows.size(), 7u);
  EXPECT_FALSE(rep.provenance_mixed);
  const std::vector<std::string> names = {
      "coincidence_ratio", "heralding_efficiency", "g2_heralded",
      "g2_unheralded",     "mode_number",          "mixture_eta",
      "variance_db"};
  for (size_t i = 0; i < names.size(); ++i) EXPECT_EQ(rep.rows[i].name, names[i]);

  // The rows that are statistically solid at this scale must pass.
  EXPECT_TRUE(rep.rows[0].within) << rep.rows[0].simulated;
  EXPECT_TRUE(rep.rows[1].within) << rep.rows[1].simulated;
  EXPECT_TRUE(rep.rows[5].within) << rep.rows[5].simulated;
  EXPECT_TRUE(rep.rows[6].within) << rep.rows[6].simulated;

  // The instrument gap between the published dB and the mixture model is
  // spelled out rather than hidden.
  EXPECT_NE(rep.rows[6].note.find("model gap"), std::string::npos);
  EXPECT_DOUBLE_EQ(rep.rows[6].published, 1.2);
  EXPECT_DOUBLE_EQ(rep.rows[6].target, 1.41);

  const json j = report_json(rep);
  ASSERT_EQ(j["rows"].size(), 7u);
  EXPECT_FALSE(j["provenance_mixed"].get<bool>());
  ASSERT_EQ(j["inputs"].size(), 2u);
  for (const char* key : {"name", "published", "simulated", "target",
                          "tolerance", "within_tolerance", "note"})
    EXPECT_TRUE(j["rows"][0].contains(key)) << key;

  const std::string table = render_report(rep);
  EXPECT_NE(table.find("metric"), std::string::npos);
  EXPECT_NE(table.find("mixture_eta"), std::string::npos);
  EXPECT_EQ(table.find("WARNING"), std::string::npos);
  fs::remove_all(dir);
}

TEST(ReportTest, MixedSeedsRaiseTheProvenanceFlag) {
  const auto dir = temp_dir("repmix");
  RunConfig ccfg = counting_config(dir / "c", 50000);
  run_counting_pipeline(ccfg);
  RunConfig hcfg = homodyne_config(dir / "h", 2000);  // different seed (21)
  run_homodyne_pipeline(hcfg);
  const Report rep =
      build_report({(dir / "c" / "counting_summary.json").string(),
                    (dir / "h" / "fit.json").string()});
  EXPECT_TRUE(rep.provenance_mixed);
  EXPECT_NE(render_report(rep).find("WARNING"), std::string::npos);
  fs::remove_all(dir);
}

TEST(ReportTest, RejectsEmptyAndMalformedInputs) {
  EXPECT_THROW(build_report({}), ConfigError);
  EXPECT_THROW(build_report({"/nonexistent/summary.json"}), IoError);

  const auto dir = temp_dir("repbad");
  const auto not_a_summary = dir / "other.json";
  write_json_file(not_a_summary.string(),
                  json{{"hello", 1}, {"provenance", json{{"seed", 1}}}});
  EXPECT_THROW(build_report({not_a_summary.string()}), IoError);

  const auto no_prov = dir / "no_prov.json";
  write_json_file(no_prov.string(), json{{"ratio", 0.4}, {"g2_h", 0.1}});
  EXPECT_THROW(build_report({no_prov.string()}), IoError);
  fs::remove_all(dir);
}

TEST(CliTest, ExitCodesFollowTheErrorContract) {
  const auto dir = temp_dir("cli");
  const std::string cfgs = "/root/proj/configs";

  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli(""), 2);           // missing subcommand
  EXPECT_EQ(run_cli("run-counting"), 2);  // missing --config
  EXPECT_EQ(run_cli("run-counting --config /missing.ini"), 3);
  EXPECT_EQ(run_cli("report"), 2);     // no input paths
  EXPECT_EQ(run_cli("report /missing.json"), 3);
  EXPECT_EQ(run_cli("analyze /missing_v.csv /missing_h.csv"), 3);

  const auto bad_cfg = dir / "bad.ini";
  std::ofstream(bad_cfg) << "[run]\nseed=1\n";  // n_pulses and source missing
  EXPECT_EQ(run_cli("run-counting --config " + bad_cfg.string()), 2);

  const auto run_out = dir / "out";
  EXPECT_EQ(run_cli("run-counting --config " + cfgs +
                    "/counting_reference.ini --pulses 50000 --out " +
                    run_out.string()),
            0);
  EXPECT_TRUE(fs::exists(run_out / "counting_summary.json"));

  // Homodyne --pulses override shrinks the record count too.
  const auto homo_out = dir / "homo";
  EXPECT_EQ(run_cli("run-homodyne --config " + cfgs +
                    "/homodyne_reference.ini --pulses 2000 --out " +
                    homo_out.string()),
            0);
  const json fit = read_json_file((homo_out / "fit.json").string());
  EXPECT_EQ(fit["n_samples"].get<uint64_t>(), 2000u);

  EXPECT_EQ(run_cli("analyze " + (homo_out / "vacuum.csv").string() + " " +
                    (homo_out / "heralded.csv").string() + " --out " +
                    (dir / "an").string()),
            0);
  EXPECT_EQ(run_cli("report " + (homo_out / "fit.json").string() + " --out " +
                    (dir / "report.json").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));

  // The undefined-estimator operating point still exits cleanly; the
  // summary carries the flag instead.
  EXPECT_EQ(run_cli("run-counting --config " + cfgs +
                    "/counting_zero.ini --out " + (dir / "z").string()),
            0);
  const json z = read_json_file((dir / "z" / "counting_summary.json").string());
  EXPECT_FALSE(z["estimators_defined"].get<bool>());
  fs::remove_all(dir);
}

}  // namespace
