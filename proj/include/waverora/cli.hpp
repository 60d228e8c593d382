#ifndef WAVERORA_CLI_HPP
#define WAVERORA_CLI_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "waverora/data.hpp"
#include "waverora/model.hpp"
#include "waverora/trainer.hpp"

namespace waverora::cli {

/// Everything a train / eval / ablate run needs, resolved once from
/// built-in defaults, then a JSON file, then command-line overrides.
struct RunConfig {
  model::ModelConfig model;
  trainer::TrainConfig train;
  std::string dataset;                            // registry key or a CSV path
  std::optional<std::filesystem::path> registry;  // dataset registry JSON
  std::optional<data::SplitSpec> split;           // defaults depend on the dataset
  std::filesystem::path out_dir = "runs/latest";
  bool raw_metrics = false;                       // report metrics in the original units
  std::set<std::string> explicit_model_keys;      // model keys given by file or flag

  RunConfig() { model.variables = 0; }

  nlohmann::json to_json() const;
  /// Overlays a JSON document ({"model": {...}, "train": {...}, ...}) onto this config.
  void merge_json(const nlohmann::json& j);
  /// `key=value` with key a model/train field, a top-level field, or one of
  /// the aliases L, H, M, J, D, N, r. Values are read as JSON when they parse.
  void apply_set(std::string_view assignment);
  void validate() const;
};

/// Reads a RunConfig JSON file; ConfigError on unreadable or invalid content.
nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// Standardized table plus its chronological split.
struct PreparedData {
  data::SeriesDataset raw;
  data::SeriesDataset scaled;
  data::Standardizer stats;
  data::SplitRanges ranges;
};

/// Resolves and loads the dataset, fills in M when it was left at 0, and
/// validates the config against the table.
PreparedData prepare_data(RunConfig& run, std::ostream& log);

int cmd_train(RunConfig run, std::ostream& out);
int cmd_eval(RunConfig run, const std::vector<std::filesystem::path>& checkpoints, std::ostream& out);

struct DecomposeOptions {
  std::filesystem::path input;
  std::string basis = "sym3";
  std::size_t levels = 3;
  std::size_t segments = 1;  // equal time segments in the energy table
  std::filesystem::path out_dir = "runs/decompose";
};

/// energy[variable][component][segment] for components [high_1 … high_J, low_J].
using EnergyTable = std::vector<std::vector<std::vector<double>>>;

EnergyTable energy_table(const wavelet::CoefficientPyramid& pyramid, std::size_t segments);
int cmd_decompose(const DecomposeOptions& opts, std::ostream& out);

struct BenchOptions {
  std::vector<std::size_t> sizes = {128, 256, 512, 1024, 2048};
  std::size_t routes = 20;
  std::size_t d_model = 320;
  std::size_t heads = 8;
  std::size_t repeats = 5;
  std::size_t warmup = 3;
  std::uint64_t seed = 7;
  std::vector<std::string> mechanisms = {"softmax", "linear", "rora"};

  void validate() const;
};

struct BenchRow {
  std::string mechanism;
  std::size_t variables = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  std::size_t peak_bytes = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::pair<std::string, double>> exponents;  // least-squares log-log slope

  double exponent(std::string_view mechanism) const;
  const BenchRow& row(std::string_view mechanism, std::size_t variables) const;
};

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

BenchReport run_bench(const BenchOptions& opts, const std::function<void(const BenchRow&)>& progress = {});
int cmd_bench(const BenchOptions& opts, const std::filesystem::path& out_dir, std::ostream& out);

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"sa", "la", "no_ro", "no_gate", "no_skip", "full"};
  return v;
}
/// Applies one variant to a model config; ConfigError on an unknown name.
model::ModelConfig ablation_config(model::ModelConfig base, std::string_view variant);
int cmd_ablate(RunConfig run, const std::vector<std::string>& variants, std::ostream& out);

/// Runs `body`, mapping ConfigError to 2, CompatibilityError to 3 and any
/// other failure to 1, with the message written to `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

/// Keeps freed blocks in the heap instead of returning them to the OS, so
/// repeated large temporaries do not pay for fresh zeroed pages. No-op off glibc.
void tune_allocator();

}  // namespace waverora::cli

#endif  // WAVERORA_CLI_HPP
