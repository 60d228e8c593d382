#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "waverora/cli.hpp"

namespace cli = waverora::cli;

int main(int argc, char** argv) {
  cli::tune_allocator();
  CLI::App app{"Wavelet-domain multivariate forecaster with rotary route attention"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_file, "Run config JSON file")->check(CLI::ExistingFile);
  app.add_option("--set", assignments, "Override a config value, key=value (repeatable)")->take_all();
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out_dir, "Output directory");

  std::string dataset;
  auto* train = app.add_subcommand("train", "Train a model and write checkpoint, history and config");
  train->add_option("--data", dataset, "Dataset registry key or CSV path");

  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the test split");
  std::vector<std::string> checkpoints;
  eval->add_option("--data", dataset, "Dataset registry key or CSV path");
  eval->add_option("--checkpoint", checkpoints, "Checkpoint file (repeatable)")->required();

  auto* decompose = app.add_subcommand("decompose", "Dump wavelet coefficients and an energy table");
  cli::DecomposeOptions dec;
  decompose->add_option("--input", dec.input, "CSV file")->required();
  decompose->add_option("--basis", dec.basis, "haar, sym3, coif3 or db4")->capture_default_str();
  decompose->add_option("--levels,-J", dec.levels, "Decomposition levels")->capture_default_str();
  decompose->add_option("--segments", dec.segments, "Equal time segments in the energy table")
      ->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Time the attention mechanisms across variable counts");
  cli::BenchOptions bo;
  bench->add_option("--sizes", bo.sizes, "Variable counts M")->capture_default_str();
  bench->add_option("--routes,-r", bo.routes, "Routing tokens")->capture_default_str();
  bench->add_option("--width", bo.d_model, "Token width D'")->capture_default_str();
  bench->add_option("--heads", bo.heads, "Attention heads")->capture_default_str();
  bench->add_option("--repeats", bo.repeats, "Timed repetitions per point")->capture_default_str();
  bench->add_option("--warmup", bo.warmup, "Discarded warmup calls")->capture_default_str();
  bench->add_option("--mechanisms", bo.mechanisms, "softmax, linear, rora")->capture_default_str();

  auto* ablate = app.add_subcommand("ablate", "Train and compare ablation variants");
  std::vector<std::string> variants;
  ablate->add_option("--data", dataset, "Dataset registry key or CSV path");
  ablate->add_option("--variants", variants, "sa, la, no_ro, no_gate, no_skip, full (default: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto resolve = [&]() {
    cli::RunConfig run;
    if (!config_file.empty()) run.merge_json(cli::read_json_file(config_file));
    for (const auto& a : assignments) run.apply_set(a);
    if (!dataset.empty()) run.dataset = dataset;
    if (seed) run.train.seed = *seed;
    if (!out_dir.empty()) run.out_dir = out_dir;
    return run;
  };

  return cli::guarded(
      [&]() -> int {
        if (train->parsed()) return cli::cmd_train(resolve(), std::cout);
        if (eval->parsed()) {
          return cli::cmd_eval(resolve(), {checkpoints.begin(), checkpoints.end()}, std::cout);
        }
        if (ablate->parsed()) return cli::cmd_ablate(resolve(), variants, std::cout);
        if (decompose->parsed()) {
          if (!out_dir.empty()) dec.out_dir = out_dir;
          return cli::cmd_decompose(dec, std::cout);
        }
        if (seed) bo.seed = *seed;
        return cli::cmd_bench(bo, out_dir.empty() ? "runs/bench" : out_dir, std::cout);
      },
      std::cerr);
}
