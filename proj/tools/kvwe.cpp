// kvwe: lexicon acquisition, projection training, evaluation and export.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "kvwe/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-based word embedding enhancement toolkit"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kvwe::kVersion));

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<double> lambda;
  std::optional<int> epochs;
  std::optional<std::string> center_loss;
  bool verify = false;
  bool strict = false;

  app.add_option("--config", config_path, "JSON run config")->required();
  app.add_option("--seed", seed, "RNG seed (overrides config)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides config)");
  app.add_option("--lambda", lambda, "Center loss weight (overrides config)");
  app.add_option("--epochs", epochs, "Training epochs (overrides config)");
  app.add_option("--center-loss", center_loss, "euclidean or cosine (overrides config)")
      ->check(CLI::IsMember({"euclidean", "cosine"}));
  app.add_flag("--verify", verify, "Run a gradient check before training");
  app.add_flag("--strict", strict, "Fail eval when a class does not improve");

  app.add_subcommand("acquire", "Build the labeled lexicon from word-graph sources");
  app.add_subcommand("train", "Train the projection model");
  app.add_subcommand("eval", "Report similarity before/after projection");
  app.add_subcommand("export", "Write enhanced word and sentence embeddings");
  app.add_subcommand("probe", "Compare a linear classifier on raw vs enhanced sentence vectors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kvwe::kExitConfig;
  }

  kvwe::ConfigOverrides ov;
  ov.seed = seed;
  ov.out_dir = out_dir;
  ov.center_loss_weight = lambda;
  ov.epochs = epochs;
  ov.center_loss = center_loss;
  ov.verify = verify;
  ov.strict = strict;

  kvwe::RunConfig rc;
  try {
    rc = kvwe::load_run_config(config_path, ov);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kvwe::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  return kvwe::run_command(command, rc, std::cout, std::cerr);
}
