// mirror-opt: train mirror maps, run optimizers and check the theory from JSON configs.

#include <cstdio>
#include <exception>
#include <filesystem>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "mirror_opt/error.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kDivergence = 3, kIo = 4 };

int fail(int code, const char* kind, const char* what) {
  fmt::print(stderr, "mirror-opt: {}: {}\n", kind, what);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = mirror_opt::cli;
  CLI::App app{"Learned mirror descent toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  cli::GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "JSON config (schema_version 1)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "Run a single seed instead of the config's seeds list");
  app.add_option("--threads", g.threads, "Worker threads (default: MIRROR_OPT_THREADS, then 1)")
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train-map", "Meta-train a mirror map and step sizes");
  auto* optimize = app.add_subcommand("optimize", "Run algorithms over seeds and write one trace CSV per run");
  auto* bench = app.add_subcommand("benchmark", "Grid-tune baselines, run everything, write an f-at-k table");
  auto* rate = app.add_subcommand("rate-check", "Fit the log-log convergence slope of a trace");
  cli::RateCheckOptions rate_opts;
  double f_star = 0.0;
  rate->add_option("--trace", rate_opts.trace, "Trace CSV")->required();
  auto* f_star_opt = rate->add_option("--f-star", f_star, "Optimal value (otherwise from the config's problem)");
  rate->add_option("--k-lo", rate_opts.k_lo, "Window start")->capture_default_str();
  rate->add_option("--k-hi", rate_opts.k_hi, "Window end")->capture_default_str();
  rate->add_option("--threshold", rate_opts.threshold, "Pass when slope <= threshold")->capture_default_str();
  auto* equi = app.add_subcommand("equivariance-check", "Check optimizer steps against network permutations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  if (f_star_opt->count() > 0) rate_opts.f_star = f_star;

  try {
    if (train->parsed()) return cli::cmd_train_map(g);
    if (optimize->parsed()) return cli::cmd_optimize(g);
    if (bench->parsed()) return cli::cmd_benchmark(g);
    if (rate->parsed()) return cli::cmd_rate_check(g, rate_opts);
    if (equi->parsed()) return cli::cmd_equivariance_check(g);
  } catch (const mirror_opt::DivergenceError& e) {
    return fail(kDivergence, "diverged", e.what());
  } catch (const mirror_opt::NonFiniteError& e) {
    return fail(kDivergence, "non-finite value", e.what());
  } catch (const mirror_opt::IoError& e) {
    return fail(kIo, "I/O error", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(kIo, "I/O error", e.what());
  } catch (const mirror_opt::Error& e) {
    return fail(kConfig, "config error", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(kConfig, "config error", e.what());
  }
  return kOk;
}
