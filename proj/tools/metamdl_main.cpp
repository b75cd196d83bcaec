// Command-line front end: run experiment matrices and the built-in
// estimator/expansion self-checks.
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metamdl/checks.hpp"
#include "metamdl/error.hpp"
#include "metamdl/harness.hpp"
#include "metamdl/rng.hpp"

namespace {

std::vector<double> parse_eta_list(const std::string& csv) {
  std::vector<double> etas;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    etas.push_back(std::stod(item));
  }
  if (etas.empty()) throw metamdl::ConfigError("empty eta sweep");
  for (double e : etas) {
    if (!(e > 0.0)) throw metamdl::ConfigError("eta values must be positive");
  }
  return etas;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            int repeats_override, std::int64_t seed_override) {
  metamdl::ExperimentConfig cfg = config_path.empty()
                                      ? metamdl::default_config()
                                      : metamdl::load_config(config_path);
  if (repeats_override > 0) cfg.repeats = repeats_override;
  if (seed_override >= 0) cfg.seed_base = static_cast<std::uint64_t>(seed_override);
  cfg.validate();

  const metamdl::MatrixResult result = metamdl::run_matrix(cfg);
  metamdl::emit_results(result, cfg, out_dir);
  std::cout << metamdl::format_table(result.table);
  std::cout << "wrote results.csv, runs.csv, trajectories and manifest.json to "
            << out_dir << "\n";
  return 0;
}

int cmd_map_check(std::uint64_t seed, int cases) {
  const metamdl::MapCheckReport report = metamdl::run_map_check(seed, cases);
  std::printf("posterior-mode check: %d random windowed configurations\n",
              report.cases);
  std::printf("  grid step      %.1e\n", report.grid_step);
  std::printf("  max |closed - grid|  %.3e (tolerance %.1e)\n",
              report.max_abs_err, report.tolerance);
  std::printf("  elapsed        %.3f s\n", report.seconds);
  std::printf("  %s\n", report.pass ? "PASS" : "FAIL");
  return report.pass ? 0 : 1;
}

int cmd_taylor_check(const std::string& sweep_csv, int instances,
                     std::uint64_t seed) {
  const std::vector<double> etas = parse_eta_list(sweep_csv);
  std::printf("first-order surrogate residuals, %d random instances\n",
              instances);
  std::printf("%-9s", "instance");
  for (double e : etas) std::printf("  res@%-8.2e", e);
  std::printf("  ratios  sign@min\n");
  int sign_hits = 0;
  for (int i = 0; i < instances; ++i) {
    const metamdl::TaylorInstance inst =
        metamdl::make_taylor_instance(metamdl::mix_seed(seed, static_cast<std::uint64_t>(i)));
    const metamdl::TaylorSweep s = metamdl::taylor_sweep(inst, etas);
    std::printf("%-9d", i);
    for (double r : s.residuals) std::printf("  %-12.3e", r);
    std::printf("  ");
    for (std::size_t j = 0; j < s.ratios.size(); ++j) {
      std::printf("%s%.2f", j ? "/" : "", s.ratios[j]);
    }
    std::printf("  %s\n", s.sign_match_smallest ? "yes" : "no");
    sign_hits += s.sign_match_smallest ? 1 : 0;
  }
  std::printf("sign agreement at smallest eta: %d/%d\n", sign_hits, instances);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-domain training with dynamic loss weighting"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int repeats = -1;
  std::int64_t seed_override = -1;
  CLI::App* run = app.add_subcommand("run", "run an experiment matrix");
  run->add_option("--config", config_path, "JSON experiment config (defaults apply if omitted)");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--repeats", repeats, "override repeat count");
  run->add_option("--seed", seed_override, "override base seed");

  std::uint64_t map_seed = 7;
  int map_cases = 500;
  CLI::App* mapchk = app.add_subcommand(
      "map-check", "compare the closed-form posterior mode against grid search");
  mapchk->add_option("--cases", map_cases, "number of random configurations");
  mapchk->add_option("--seed", map_seed, "random seed");

  std::string sweep = "1e-2,5e-3,2.5e-3,1.25e-3";
  int taylor_instances = 20;
  std::uint64_t taylor_seed = 11;
  CLI::App* taylor = app.add_subcommand(
      "taylor-check", "print first-order surrogate residuals over a rate sweep");
  taylor->add_option("--eta-sweep", sweep, "comma-separated learning rates");
  taylor->add_option("--instances", taylor_instances, "number of random instances");
  taylor->add_option("--seed", taylor_seed, "random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, repeats, seed_override);
    if (mapchk->parsed()) return cmd_map_check(map_seed, map_cases);
    if (taylor->parsed()) return cmd_taylor_check(sweep, taylor_instances, taylor_seed);
  } catch (const metamdl::ConfigError& e) {
    std::cerr << R"({"error":"config","message":")" << e.what() << "\"}\n";
    return 1;
  } catch (const metamdl::IoError& e) {
    std::cerr << R"({"error":"io","message":")" << e.what() << "\"}\n";
    return 1;
  } catch (const metamdl::ShapeError& e) {
    std::cerr << R"({"error":"shape","message":")" << e.what() << "\"}\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << R"({"error":"internal","message":")" << e.what() << "\"}\n";
    return 1;
  }
  return 0;
}
