#ifndef WAVERORA_DATA_HPP
#define WAVERORA_DATA_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "waverora/tensor.hpp"

namespace waverora::data {

struct SeriesDataset {
  std::string name;
  std::string frequency;
  std::vector<std::string> variable_names;
  Tensor values;                      // T×M
  std::vector<std::string> warnings;  // non-fatal notes from loading / standardizing

  std::size_t steps() const { return values.rows(); }
  std::size_t variables() const { return values.cols(); }
};

/// Header row required. A leading non-numeric column (timestamps) is dropped
/// with a warning. Empty, NaN, infinite or unparseable cells raise LoadError
/// naming the row and column.
SeriesDataset load_csv(const std::filesystem::path& path, std::string name = {});

struct KnownDataset {
  std::string_view name;
  std::size_t variables;
  std::string_view frequency;
};

/// ETTh1/2, ETTm1/2, Weather, Electricity, Traffic, Solar (case-insensitive).
std::optional<KnownDataset> find_known(std::string_view name);

/// Raises LoadError if a known dataset's column count differs from the table.
void check_known(const SeriesDataset& ds);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  /// ETT datasets use (0.6, 0.2, 0.2), everything else (0.7, 0.1, 0.2).
  static SplitSpec defaults_for(std::string_view dataset);
  void validate() const;
};

struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool operator==(const Range&) const = default;
};

struct SplitRanges {
  Range train, val, test;
};

/// Chronological split of T steps. Train covers ⌊T·f_train⌋ steps, test the
/// last ⌊T·f_test⌋ and validation the rest; validation and test are extended
/// backward by `lookback`. Raises ConfigError if any range is shorter than L+H.
SplitRanges split(std::size_t steps, const SplitSpec& spec, std::size_t lookback, std::size_t horizon);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stdev;

  Tensor apply(const Tensor& values) const;
};

inline constexpr double kMinStd = 1e-8;

/// Column statistics over `train` only (population std, floored at 1e-8 with
/// a warning appended to the returned dataset).
std::pair<SeriesDataset, Standardizer> standardize(const SeriesDataset& ds, Range train);

struct WindowSpec {
  std::size_t lookback = 96;
  std::size_t horizon = 96;
  std::size_t stride = 1;

  void validate() const;
};

/// Sliding (input, target) pairs inside one range; no target reaches past
/// range.end. `values` must outlive the sampler.
class WindowSampler {
 public:
  WindowSampler(const Tensor& values, Range range, WindowSpec spec);

  std::size_t size() const { return count_; }
  Range input_range(std::size_t i) const;
  Range target_range(std::size_t i) const;
  Tensor input(std::size_t i) const;   // L×M
  Tensor target(std::size_t i) const;  // H×M

 private:
  const Tensor* values_;
  Range range_;
  WindowSpec spec_;
  std::size_t count_ = 0;
};

/// count = ⌊(length − L − H) / stride⌋ + 1, or 0 if the range is too short.
std::size_t window_count(std::size_t length, const WindowSpec& spec);

struct DatasetLocation {
  std::string name;
  std::filesystem::path path;
  std::optional<SplitSpec> split;
};

/// Looks `name` up in the registry JSON ({name: {path, split: [a, b, c]}}),
/// then falls back to $WAVERORA_DATA/<name>.csv. Relative registry paths are
/// resolved against the registry file's directory. Raises ConfigError naming
/// the key when no existing file is found.
DatasetLocation resolve_dataset(std::string_view name, const std::optional<std::filesystem::path>& registry);

}  // namespace waverora::data

#endif  // WAVERORA_DATA_HPP
