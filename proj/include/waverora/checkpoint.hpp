#ifndef WAVERORA_CHECKPOINT_HPP
#define WAVERORA_CHECKPOINT_HPP

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "waverora/model.hpp"

// Container: the 4-byte magic "WRR1", a little-endian u64 header length, a
// JSON header {config, meta, tensors: [{name, shape}]}, then each tensor's
// values as little-endian float64 in header order.
namespace waverora::checkpoint {

inline constexpr char kMagic[4] = {'W', 'R', 'R', '1'};

void save(const std::filesystem::path& path, const model::WaveRoRAModel& model, const nlohmann::json& meta = {});

struct Loaded {
  model::WaveRoRAModel model;
  nlohmann::json meta;
};

/// Raises LoadError on a bad magic, truncated file or unknown/missing tensor.
Loaded load(const std::filesystem::path& path);

/// Model config keys that determine the stored tensors.
const std::vector<std::string>& architecture_fields();

/// Raises CompatibilityError naming the first of `fields` (default: all
/// architecture fields) whose value differs.
void check_compatible(const model::ModelConfig& expected, const model::ModelConfig& found,
                      std::span<const std::string> fields = {});

/// Copies parameter values between two models of identical architecture.
void copy_parameters(const model::WaveRoRAModel& from, model::WaveRoRAModel& to);

}  // namespace waverora::checkpoint

#endif  // WAVERORA_CHECKPOINT_HPP
