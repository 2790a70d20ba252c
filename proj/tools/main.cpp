#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "ctpipe/errors.hpp"
#include "ctpipe/version.hpp"
#include "run_config.hpp"

namespace {

using ctpipe::cli::RunConfig;

struct GlobalFlags {
  std::string config_path;
  std::string seed;
  std::string out_dir;
};

RunConfig resolve(const GlobalFlags& flags) {
  std::optional<std::filesystem::path> file;
  if (!flags.config_path.empty()) file = flags.config_path;
  RunConfig cfg = RunConfig::load(file);
  if (!flags.seed.empty()) cfg.set("seed", flags.seed);
  if (!flags.out_dir.empty()) cfg.set("out_dir", flags.out_dir);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camera-trap labeling pipeline engine"};
  app.set_version_flag("--version", std::string("ctpipe ") + ctpipe::kVersion);
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  GlobalFlags flags;
  app.add_option("--config", flags.config_path, "run configuration file (flat JSON)");
  app.add_option("--seed", flags.seed, "override the config seed");
  app.add_option("--out", flags.out_dir, "override the output directory");

  int (*handler)(const RunConfig&) = nullptr;
  app.add_subcommand("synth", "generate a synthetic dataset manifest")
      ->callback([&] { handler = ctpipe::cli::cmd_synth; });
  app.add_subcommand("train", "train stage models on a manifest")
      ->callback([&] { handler = ctpipe::cli::cmd_train; });
  app.add_subcommand("eval", "evaluate checkpoints and write reports/predictions")
      ->callback([&] { handler = ctpipe::cli::cmd_eval; });
  app.add_subcommand("sweep", "confidence-threshold sweep and automation analysis")
      ->callback([&] { handler = ctpipe::cli::cmd_sweep; });
  app.add_subcommand("report", "combine eval/sweep outputs into a markdown report")
      ->callback([&] { handler = ctpipe::cli::cmd_report; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    return handler(resolve(flags));
  } catch (const ctpipe::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const ctpipe::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const ctpipe::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
