#include "waverora/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "waverora/error.hpp"

namespace waverora::data {
namespace {

constexpr std::array<KnownDataset, 8> kKnown = {{
    {"ETTh1", 7, "1h"},
    {"ETTh2", 7, "1h"},
    {"ETTm1", 7, "15min"},
    {"ETTm2", 7, "15min"},
    {"Weather", 21, "10min"},
    {"Electricity", 321, "1h"},
    {"Traffic", 862, "1h"},
    {"Solar", 137, "10min"},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == ',' && !quoted) {
      fields.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  fields.push_back(trim(line.substr(start)));
  return fields;
}

std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

std::size_t fraction_of(std::size_t steps, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(steps) * fraction + 1e-9));
}

}  // namespace

SeriesDataset load_csv(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  SeriesDataset ds;
  ds.name = name.empty() ? path.stem().string() : std::move(name);

  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": empty file (a header row is required)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);

  std::vector<double> cells;
  std::size_t skip = 0;  // 1 when the first column holds timestamps
  std::size_t row = 0;   // 1-based data row
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw LoadError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    if (row == 1 && !parse_number(fields[0]) && header.size() > 1) {
      skip = 1;
      ds.warnings.push_back("dropping non-numeric leading column '" + header[0] + "' (treated as timestamps)");
    }
    for (std::size_t c = skip; c < fields.size(); ++c) {
      const auto value = parse_number(fields[c]);
      const std::string where = "row " + std::to_string(row) + ", column " + std::to_string(c + 1) + " ('" +
                                header[c] + "')";
      if (!value) throw LoadError(path.string() + ": unparseable cell '" + std::string(fields[c]) + "' at " + where);
      if (!std::isfinite(*value)) throw LoadError(path.string() + ": missing value at " + where);
      cells.push_back(*value);
    }
  }
  if (row == 0) throw LoadError(path.string() + ": no data rows");
  ds.variable_names.assign(header.begin() + static_cast<std::ptrdiff_t>(skip), header.end());
  ds.values = Tensor({row, ds.variable_names.size()}, cells);
  if (auto known = find_known(ds.name)) ds.frequency = std::string(known->frequency);
  return ds;
}

std::optional<KnownDataset> find_known(std::string_view name) {
  const std::string key = lower(name);
  for (const KnownDataset& k : kKnown) {
    if (lower(k.name) == key) return k;
  }
  return std::nullopt;
}

void check_known(const SeriesDataset& ds) {
  if (auto known = find_known(ds.name); known && known->variables != ds.variables()) {
    throw LoadError(ds.name + " should have " + std::to_string(known->variables) + " variables, the file has " +
                    std::to_string(ds.variables()));
  }
}

SplitSpec SplitSpec::defaults_for(std::string_view dataset) {
  if (lower(dataset).starts_with("ett")) return {0.6, 0.2, 0.2};
  return {0.7, 0.1, 0.2};
}

void SplitSpec::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0)) {
    throw ConfigError("split: all three fractions must be positive (got " + std::to_string(train) + ", " +
                      std::to_string(val) + ", " + std::to_string(test) + ")");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
}

SplitRanges split(std::size_t steps, const SplitSpec& spec, std::size_t lookback, std::size_t horizon) {
  spec.validate();
  const std::size_t n_train = fraction_of(steps, spec.train);
  const std::size_t n_test = fraction_of(steps, spec.test);
  if (n_train + n_test > steps || n_train < lookback) {
    throw ConfigError("split: " + std::to_string(steps) + " steps are too few for lookback " + std::to_string(lookback));
  }
  SplitRanges r;
  r.train = {0, n_train};
  r.val = {n_train - lookback, steps - n_test};
  r.test = {steps - n_test - lookback, steps};
  const std::pair<const char*, Range> named[] = {{"train", r.train}, {"val", r.val}, {"test", r.test}};
  for (const auto& [label, range] : named) {
    if (range.length() < lookback + horizon) {
      throw ConfigError(std::string("split: ") + label + " range holds " + std::to_string(range.length()) +
                        " steps, fewer than L+H = " + std::to_string(lookback + horizon));
    }
  }
  return r;
}

Tensor Standardizer::apply(const Tensor& values) const {
  if (values.rank() != 2 || values.cols() != mean.size()) {
    throw ShapeError("standardize: " + shape_string(values.shape()) + " does not match " +
                     std::to_string(mean.size()) + " variables");
  }
  Tensor out = values;
  for (std::size_t t = 0; t < out.rows(); ++t) {
    for (std::size_t m = 0; m < out.cols(); ++m) out(t, m) = (out(t, m) - mean[m]) / stdev[m];
  }
  return out;
}

std::pair<SeriesDataset, Standardizer> standardize(const SeriesDataset& ds, Range train) {
  if (train.length() == 0 || train.end > ds.steps()) {
    throw ConfigError("standardize: train range [" + std::to_string(train.begin) + ", " + std::to_string(train.end) +
                      ") is empty or outside the table");
  }
  const std::size_t vars = ds.variables();
  Standardizer s{std::vector<double>(vars, 0.0), std::vector<double>(vars, 0.0)};
  SeriesDataset out = ds;
  const double n = static_cast<double>(train.length());
  for (std::size_t m = 0; m < vars; ++m) {
    double mean = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) mean += ds.values(t, m);
    mean /= n;
    double var = 0.0;
    for (std::size_t t = train.begin; t < train.end; ++t) var += (ds.values(t, m) - mean) * (ds.values(t, m) - mean);
    double sd = std::sqrt(var / n);
    if (sd < kMinStd) {
      out.warnings.push_back("variable '" + (m < ds.variable_names.size() ? ds.variable_names[m] : std::to_string(m)) +
                             "' is constant over the train range; std floored at 1e-8");
      sd = kMinStd;
    }
    s.mean[m] = mean;
    s.stdev[m] = sd;
  }
  out.values = s.apply(ds.values);
  return {std::move(out), std::move(s)};
}

void WindowSpec::validate() const {
  if (lookback < 1 || horizon < 1 || stride < 1) throw ConfigError("window: L, H and stride must be >= 1");
}

std::size_t window_count(std::size_t length, const WindowSpec& spec) {
  if (length < spec.lookback + spec.horizon) return 0;
  return (length - spec.lookback - spec.horizon) / spec.stride + 1;
}

WindowSampler::WindowSampler(const Tensor& values, Range range, WindowSpec spec)
    : values_(&values), range_(range), spec_(spec) {
  spec_.validate();
  if (values.rank() != 2 || range.end > values.rows() || range.begin > range.end) {
    throw ShapeError("windows: range [" + std::to_string(range.begin) + ", " + std::to_string(range.end) +
                     ") does not fit a table of shape " + shape_string(values.shape()));
  }
  count_ = window_count(range.length(), spec_);
}

Range WindowSampler::input_range(std::size_t i) const {
  if (i >= count_) throw ShapeError("windows: index " + std::to_string(i) + " out of " + std::to_string(count_));
  const std::size_t begin = range_.begin + i * spec_.stride;
  return {begin, begin + spec_.lookback};
}

Range WindowSampler::target_range(std::size_t i) const {
  const Range in = input_range(i);
  return {in.end, in.end + spec_.horizon};
}

namespace {
Tensor rows_of(const Tensor& values, Range r) {
  const std::size_t cols = values.cols();
  return Tensor({r.length(), cols}, std::span<const double>(values.data() + r.begin * cols, r.length() * cols));
}
}  // namespace

Tensor WindowSampler::input(std::size_t i) const { return rows_of(*values_, input_range(i)); }
Tensor WindowSampler::target(std::size_t i) const { return rows_of(*values_, target_range(i)); }

DatasetLocation resolve_dataset(std::string_view name, const std::optional<std::filesystem::path>& registry) {
  DatasetLocation loc;
  loc.name = std::string(name);
  if (registry) {
    std::ifstream in(*registry);
    if (!in) throw ConfigError("cannot open dataset registry " + registry->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("dataset registry " + registry->string() + ": " + e.what());
    }
    if (j.contains(loc.name)) {
      const auto& entry = j.at(loc.name);
      try {
        std::filesystem::path p = entry.at("path").get<std::string>();
        if (p.is_relative()) p = registry->parent_path() / p;
        loc.path = p;
        if (entry.contains("split")) {
          const auto f = entry.at("split").get<std::vector<double>>();
          if (f.size() != 3) throw ConfigError("dataset registry '" + loc.name + "': split needs three fractions");
          loc.split = SplitSpec{f[0], f[1], f[2]};
        }
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("dataset registry '" + loc.name + "': " + e.what());
      }
      if (!std::filesystem::exists(loc.path)) {
        throw ConfigError("dataset '" + loc.name + "': registry path " + loc.path.string() + " does not exist");
      }
      return loc;
    }
  }
  if (const char* root = std::getenv("WAVERORA_DATA"); root != nullptr && *root != '\0') {
    const std::filesystem::path candidate = std::filesystem::path(root) / (loc.name + ".csv");
    if (std::filesystem::exists(candidate)) {
      loc.path = candidate;
      return loc;
    }
  }
  throw ConfigError("dataset '" + loc.name + "' not found: no registry entry and no $WAVERORA_DATA/" + loc.name +
                    ".csv");
}

}  // namespace waverora::data
