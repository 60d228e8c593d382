#ifndef WAVERORA_MODEL_HPP
#define WAVERORA_MODEL_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "waverora/attention.hpp"
#include "waverora/autograd.hpp"
#include "waverora/rng.hpp"
#include "waverora/tensor.hpp"
#include "waverora/wavelet.hpp"

namespace waverora::model {

enum class LossDomain { time, coefficient };

std::string_view to_string(LossDomain domain);
LossDomain parse_loss_domain(std::string_view text);

struct ModelConfig {
  std::size_t lookback = 96;       // L
  std::size_t horizon = 96;        // H
  std::size_t variables = 7;       // M
  std::size_t levels = 4;          // J
  std::size_t embed_dim = 64;      // D
  std::size_t encoder_layers = 2;  // N
  std::size_t heads = 8;
  std::size_t routes = 0;          // r; 0 picks auto_routes(M)
  std::string basis = "sym3";
  double dropout = 0.1;
  bool rotary = true;
  bool gate = true;
  bool skip = true;
  attention::Kind attention = attention::Kind::rora;
  LossDomain loss_domain = LossDomain::time;
  bool outer_residual = false;

  /// D′ = (J + 1)·D.
  std::size_t token_width() const { return (levels + 1) * embed_dim; }
  std::size_t resolved_routes() const;
  attention::RoRAConfig attention_config() const;

  /// Raises ConfigError (DepthError for infeasible schedules) on any violation.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys raise ConfigError.
  static ModelConfig from_json(const nlohmann::json& j);
};

/// max(2, ⌊min(10, (ln M + √M) / 2)⌋).
std::size_t auto_routes(std::size_t variables);

struct InstanceNormState {
  std::vector<double> mean;
  std::vector<double> stdev;
};

inline constexpr double kInstanceNormEps = 1e-5;

/// Per column of an L×M window: (x − μ) / √(var + 1e-5), population variance.
std::pair<Tensor, InstanceNormState> instance_normalize(const Tensor& x);
/// y·σ + μ per column.
Tensor instance_denormalize(const Tensor& y, const InstanceNormState& state);

struct EncoderLayer {
  attention::RoRAWeights rora;        // used when kind == rora
  attention::MultiHeadWeights mixer;  // used for the softmax / linear baselines
  Parameter norm_scale;               // D′, level j owns columns [jD, (j+1)D)
  Parameter norm_shift;
};

/// Everything the forward pass produced on a tape, for losses and inspection.
struct ForwardTrace {
  Var output;                          // H×M, denormalized
  std::vector<Var> predicted;          // J+1 components, M×H(j), normalized space
  InstanceNormState norm;
};

class WaveRoRAModel {
 public:
  WaveRoRAModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const wavelet::LengthSchedule& input_schedule() const { return input_transform_.schedule(); }
  const wavelet::LengthSchedule& output_schedule() const { return output_transform_.schedule(); }

  /// E_j = C_j W_jᵀ + b_j for each component in model order; each M×D.
  std::vector<Tensor> wave_embed(const wavelet::CoefficientPyramid& pyramid) const;
  /// N encoder layers over M×D′ series-wise tokens, eval mode.
  Tensor encode(const Tensor& tokens) const;
  /// GELU(O_j)Ŵ_jᵀ + b̂_j over the H schedule.
  wavelet::CoefficientPyramid wave_predict(std::span<const Tensor> outputs) const;

  /// L×M window → H×M forecast, eval mode.
  Tensor forecast(const Tensor& window) const;

  /// Differentiable forward pass. Dropout is active only when `dropout_rng` is given.
  ForwardTrace forward(Tape& tape, const Tensor& window, Rng* dropout_rng) const;
  /// Training objective for one (window, target) pair in the configured loss domain.
  Var loss(Tape& tape, const Tensor& window, const Tensor& target, Rng* dropout_rng) const;

  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

 private:
  std::vector<Var> wave_embed(Tape& tape, std::span<const Var> components) const;
  Var encode(Tape& tape, Var tokens, Rng* dropout_rng) const;
  std::vector<Var> wave_predict(Tape& tape, const Var& tokens) const;

  ModelConfig config_;
  wavelet::MultilevelTransform input_transform_;
  wavelet::MultilevelTransform output_transform_;
  std::vector<attention::Linear> embed_;
  std::vector<EncoderLayer> encoders_;
  std::vector<attention::Linear> predict_;
};

}  // namespace waverora::model

#endif  // WAVERORA_MODEL_HPP
