#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hspsim/hspsim.hpp"

namespace {

using namespace hspsim;

std::optional<uint64_t> opt_u64(const CLI::Option* opt, uint64_t value) {
  return opt->count() ? std::optional<uint64_t>(value) : std::nullopt;
}

std::optional<std::string> opt_str(const CLI::Option* opt,
                                   const std::string& value) {
  return opt->count() ? std::optional<std::string>(value) : std::nullopt;
}

void print_counting_summary(const CountingSummary& s, const RunConfig& cfg) {
  std::cout << "counting run: " << s.record.n_pulses << " pulses, N_h = "
            << s.record.N_h << " (rate " << s.herald_rate_hz << " Hz)\n";
  if (s.defined) {
    std::cout << "  ratio N_c/N_h = " << s.ratio << "\n"
              << "  eta_h = " << s.eta_h
              << (s.eta_warning ? "  [WARNING: above 1]" : "") << "\n"
              << "  g2_h = " << s.g2_h << "\n"
              << "  g2_s = " << s.g2_s << " (M_s = " << s.mode_count << ")\n";
  } else {
    std::cout << "  estimators undefined at this operating point "
                 "(all-zero summary written)\n";
  }
  if (s.has_sweep)
    std::cout << "  pump sweep: s1 = " << s.sweep.fit.s1
              << ", rms residual = " << s.sweep.fit.rms_residual << "\n";
  std::cout << "  outputs in " << cfg.output_dir << "\n";
}

void print_homodyne_summary(const HomodyneSummary& s,
                            const std::string& out_dir) {
  std::cout << "homodyne run: " << s.heralded.n_records
            << " records per dataset\n"
            << "  fitted eta = " << s.fit.eta << " +/- " << s.fit.stderr_eta
            << (s.fit.converged ? "" : "  [NOT CONVERGED]") << "\n"
            << "  variance_db = " << s.variance_db << " dB\n"
            << "  chi2/dof = " << s.gof.chi2 << "/" << s.gof.dof
            << " (p = " << s.gof.p_value << ")\n"
            << "  outputs in " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "hspsim: Monte-Carlo twin of a fiber-based heralded single-photon "
      "source with photon-counting and homodyne characterization"};
  app.set_version_flag("--version", hspsim::kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, vacuum_csv, heralded_csv, report_out;
  std::vector<std::string> report_paths;
  uint64_t seed = 0, pulses = 0;
  int bins = 80;

  CLI::App* rc = app.add_subcommand(
      "run-counting", "Simulate the counting experiment and write estimators");
  rc->add_option("--config", config_path, "run configuration file")
      ->required();
  const CLI::Option* rc_seed =
      rc->add_option("--seed", seed, "override run.seed");
  const CLI::Option* rc_pulses =
      rc->add_option("--pulses", pulses, "override run.n_pulses");
  const CLI::Option* rc_out =
      rc->add_option("--out", out_dir, "override run.output_dir");

  CLI::App* rh = app.add_subcommand(
      "run-homodyne",
      "Simulate vacuum + heralded homodyne datasets and fit the mixture");
  rh->add_option("--config", config_path, "run configuration file")
      ->required();
  const CLI::Option* rh_seed =
      rh->add_option("--seed", seed, "override run.seed");
  const CLI::Option* rh_pulses = rh->add_option(
      "--pulses", pulses, "override run.n_pulses and run.n_records");
  const CLI::Option* rh_out =
      rh->add_option("--out", out_dir, "override run.output_dir");

  CLI::App* an = app.add_subcommand(
      "analyze", "Re-fit stored vacuum/heralded quadrature datasets");
  an->add_option("vacuum", vacuum_csv, "vacuum dataset CSV")->required();
  an->add_option("heralded", heralded_csv, "heralded dataset CSV")->required();
  an->add_option("--bins", bins, "histogram bin count")
      ->check(CLI::Range(2, 100000));
  an->add_option("--out", out_dir, "output directory")->default_val(".");

  CLI::App* rp = app.add_subcommand(
      "report", "Compare summary files against the published values");
  rp->add_option("paths", report_paths, "summary/fit JSON files")
      ->required()
      ->expected(-1);
  rp->add_option("--out", report_out, "also write the table as JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems are config errors
  }

  try {
    if (rc->parsed()) {
      const RunConfig cfg =
          load_run_config(config_path, opt_u64(rc_seed, seed),
                          opt_u64(rc_pulses, pulses), opt_str(rc_out, out_dir));
      print_counting_summary(run_counting_pipeline(cfg), cfg);
    } else if (rh->parsed()) {
      RunConfig cfg =
          load_run_config(config_path, opt_u64(rh_seed, seed),
                          opt_u64(rh_pulses, pulses), opt_str(rh_out, out_dir));
      if (rh_pulses->count()) {
        cfg.n_records = pulses;
        refresh_config_hash(cfg);
      }
      print_homodyne_summary(run_homodyne_pipeline(cfg), cfg.output_dir);
    } else if (an->parsed()) {
      bool seeds_match = true;
      const HomodyneSummary s = analyze_pipeline(vacuum_csv, heralded_csv,
                                                 bins, out_dir, &seeds_match);
      if (!seeds_match)
        std::cerr << "warning: vacuum and heralded datasets carry different "
                     "seeds\n";
      print_homodyne_summary(s, out_dir);
    } else if (rp->parsed()) {
      const Report rep = build_report(report_paths);
      std::cout << render_report(rep);
      if (!report_out.empty()) write_json_file(report_out, report_json(rep));
    }
    return 0;
  } catch (const hspsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const hspsim::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const hspsim::EstimatorUndefined& e) {
    std::cerr << "estimator undefined: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
