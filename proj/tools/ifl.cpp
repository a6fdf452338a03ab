#include "ifl/config.hpp"
#include "ifl/harness.hpp"
#include "ifl/stability.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int run_and_write(const ifl::ExperimentConfig& cfg) {
  const ifl::ExperimentResult res = ifl::run_experiment(cfg);
  ifl::write_outputs(res, cfg);
  std::cout << "experiment " << res.experiment << ": " << res.runs_used << "/" << res.runs_requested
            << " runs used, outputs in " << cfg.output_dir << "\n";
  if (res.stability) std::cout << res.stability->text();
  const int code = ifl::exit_code(res, cfg);
  if (code == 3)
    std::cerr << "error: " << res.excluded.size() << " of " << res.runs_requested
              << " runs diverged (limit " << cfg.divergence_limit << ")\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverse filtering experiments"};
  app.require_subcommand(1);

  std::string sim_config;
  auto* sim = app.add_subcommand("simulate", "run the experiment described by a config file");
  sim->add_option("config", sim_config, "config file")->required();

  std::string exp_id, exp_config, out_dir;
  int runs = -1, horizon = -1, workers = -1;
  long long seed = -1;
  auto* exp = app.add_subcommand("experiment", "run a named experiment");
  exp->add_option("id", exp_id, "fm-demod | bearing | rkhs-fm | stability-sweep")
      ->required()
      ->check(CLI::IsMember({"fm-demod", "bearing", "rkhs-fm", "stability-sweep"}));
  exp->add_option("--config", exp_config, "config file overriding the defaults");
  exp->add_option("--runs", runs, "Monte-Carlo runs");
  exp->add_option("--seed", seed, "master seed");
  exp->add_option("--horizon", horizon, "time steps per run");
  exp->add_option("--workers", workers, "worker threads");
  exp->add_option("--out", out_dir, "output directory");

  std::string bounds_path, check_out;
  auto* chk = app.add_subcommand("stability-check", "evaluate the stability conditions for a bounds file");
  chk->add_option("bounds-file", bounds_path, "key=value bounds file")->required();
  chk->add_option("--out", check_out, "write the report to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) return run_and_write(ifl::load_config(sim_config));

    if (*exp) {
      ifl::ExperimentConfig cfg = exp_config.empty() ? ifl::default_config(exp_id) : ifl::load_config(exp_config);
      if (!exp_config.empty() && cfg.experiment != exp_id)
        throw ifl::ConfigError("config file is for experiment '" + cfg.experiment + "'");
      if (runs >= 0) cfg.runs = runs;
      if (horizon >= 0) cfg.horizon = horizon;
      if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
      if (workers >= 0) cfg.workers = workers;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      cfg.validate();
      return run_and_write(cfg);
    }

    std::ifstream is(bounds_path);
    if (!is) throw ifl::ConfigError("cannot read bounds file '" + bounds_path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    ifl::InverseBoundsExt ext;
    bool has_ext = false;
    ifl::SoekfBounds b;
    try {
      b = ifl::parse_bounds(ss.str(), &ext, &has_ext);
    } catch (const std::invalid_argument& e) {
      throw ifl::ConfigError(e.what());
    }
    const ifl::StabilityReport r = has_ext ? ifl::check_theorem2(b, ext) : ifl::check_theorem1(b);
    const std::string text = r.text() + "record: " + r.record() + "\n";
    if (!check_out.empty()) {
      std::ofstream os(check_out, std::ios::binary);
      if (!os) throw ifl::ConfigError("cannot write '" + check_out + "'");
      os << text;
    }
    std::cout << text;
    return 0;
  } catch (const ifl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
