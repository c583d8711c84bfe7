#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "deepsdf/cli/commands.hpp"
#include "deepsdf/core/allocator.hpp"

namespace {

using namespace deepsdf;

struct Flags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<double> size_filter;
  std::optional<std::string> weighting;
  bool l1_normalize = false;
};

cli::RunConfig resolve(const Flags& f) {
  cli::RunConfig cfg = cli::make_run_config(cli::ConfigFile::load(f.config));
  if (f.out) cfg.out_dir = *f.out;
  if (f.seed) {
    cfg.seed = *f.seed;
    if (cfg.sim) cfg.sim->seed = *f.seed;
  }
  if (f.workers) {
    if (*f.workers == 0) throw UsageError("--workers must be at least 1");
    cfg.workers = *f.workers;
  }
  if (f.size_filter) {
    if (*f.size_filter < 0.0 || *f.size_filter >= 1.0) throw UsageError("--size-filter must lie in [0, 1)");
    cfg.size_filter = *f.size_filter;
  }
  if (f.weighting) cfg.weighting = eval::parse_weighting(*f.weighting);
  if (f.l1_normalize) cfg.l1_normalize = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  deepsdf::tune_allocator();
  CLI::App app{"Deep-learning SDF estimation: simulate, train, evaluate and report"};
  app.require_subcommand(1, 1);
  app.fallthrough();  // global flags may follow the subcommand
  Flags flags;
  app.add_option("-c,--config", flags.config, "Run configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("-o,--out", flags.out, "Output directory (overrides output.dir)");
  app.add_option("--seed", flags.seed, "Base seed (overrides run.seed and sim.seed)");
  app.add_option("--workers", flags.workers, "Maximum concurrent model fits");
  app.add_option("--size-filter", flags.size_filter, "Evaluate only assets above this share of total market cap");
  app.add_option("--weighting", flags.weighting, "Portfolio weighting: equal or value");
  app.add_flag("--l1-normalize", flags.l1_normalize, "Also report the SR of l1-normalized SDF weights");

  using Command = void (*)(const cli::RunConfig&, std::ostream&);
  Command command = nullptr;
  auto sub = [&](const char* name, const char* help, Command c) {
    app.add_subcommand(name, help)->callback([&command, c] { command = c; });
  };
  sub("simulate", "Write a simulated panel and truth file", cli::cmd_simulate);
  sub("train", "Fit the configured models and write checkpoints", cli::cmd_train);
  sub("evaluate", "Evaluate checkpoints on every split", cli::cmd_evaluate);
  sub("importance", "Variable importance of the fitted models", cli::cmd_importance);
  sub("report", "Comparison table from evaluation artifacts", cli::cmd_report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    command(resolve(flags), std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
