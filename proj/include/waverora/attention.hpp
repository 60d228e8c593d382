#ifndef WAVERORA_ATTENTION_HPP
#define WAVERORA_ATTENTION_HPP

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "waverora/autograd.hpp"
#include "waverora/rng.hpp"
#include "waverora/tensor.hpp"

namespace waverora::attention {

/// Affine map y = x·Wᵀ + b with W shaped out×in.
struct Linear {
  Parameter weight;
  Parameter bias;

  /// Uniform init in ±1/√in for both weight and bias.
  static Linear init(const std::string& name, std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_features() const { return weight.value.cols(); }
  std::size_t out_features() const { return weight.value.rows(); }

  Var operator()(Tape& tape, const Var& x) const;
  void collect(std::vector<const Parameter*>& out) const;
};

struct RoRAConfig {
  std::size_t d_model = 0;  // D′
  std::size_t heads = 1;
  std::size_t routes = 1;   // r
  bool rotary = true;
  bool gate = true;
  bool skip = true;
  double rotary_base = 10000.0;

  std::size_t head_dim() const { return d_model / heads; }
  /// Throws ConfigError on d_model not divisible by heads, zero routes, etc.
  void validate() const;
};

/// θ_i = base^(−2(i−1)/r) for i = 1 … ⌊r/2⌋.
struct RotaryAngles {
  std::size_t routes = 0;
  std::vector<double> theta;

  static RotaryAngles standard(std::size_t routes, double base = 10000.0);
};

/// Block-diagonal rotation of size r×r at a position (angle set position·Θ).
/// With odd r the last coordinate is left untouched.
Tensor rotation_matrix(const RotaryAngles& angles, double position);

/// Rotates row m of an M×r score matrix by rotation_matrix(angles, m).
Tensor rotary_rotate(const Tensor& scores, const RotaryAngles& angles);
Var rotary_rotate(const Var& scores, const RotaryAngles& angles);

/// Ψ(QRᵀ/√d): softmax over routes, then row m rotated by m·Θ when enabled. M×r.
Var route_scores_qr(const Var& q_head, const Var& r_head, const RoRAConfig& cfg);
/// Ψ(RKᵀ/√d): softmax over variables, then column n rotated by n·Θ when enabled. r×M.
Var route_scores_rk(const Var& k_head, const Var& r_head, const RoRAConfig& cfg);

struct RoRAWeights {
  Linear query, key, value;
  Linear gate;
  Linear route;                 // projects the routing tokens; head h uses its column block
  Parameter routing_tokens;     // r×D′, normal(0, 0.02)
  std::vector<Linear> skip;     // one (D′/H)×(D′/H) map per head
  Linear output;

  static RoRAWeights init(const RoRAConfig& cfg, Rng& rng, const std::string& prefix = "rora");
  void collect(std::vector<const Parameter*>& out) const;
};

/// Multi-head rotary route attention over M tokens of width D′. The skip
/// branch, the SiLU gate and the score rotation follow the config flags.
Var rora_forward(Tape& tape, const Var& input, const RoRAWeights& w, const RoRAConfig& cfg);
Tensor rora_forward(const Tensor& input, const RoRAWeights& w, const RoRAConfig& cfg);

/// softmax(QKᵀ/√d)·V.
Var softmax_attention(const Var& q, const Var& k, const Var& v);
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);

/// φ(Q)(Σ φ(K_j)ᵀV_j) / (φ(Q)·Σ φ(K_j)ᵀ) with φ = Elu + 1.
Var linear_attention(const Var& q, const Var& k, const Var& v);
Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v);

enum class Kind { rora, softmax, linear };

std::string_view to_string(Kind kind);
/// Accepts "rora", "softmax"/"sa", "linear"/"la".
Kind parse_kind(std::string_view text);

/// Applies softmax or linear attention independently to each of `heads`
/// column blocks of pre-projected Q, K, V and concatenates the results.
Var multihead_mix(const Var& q, const Var& k, const Var& v, std::size_t heads, Kind kind);
Tensor multihead_mix(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, Kind kind);

/// Projections for the softmax / linear attention baselines.
struct MultiHeadWeights {
  Linear query, key, value, output;

  static MultiHeadWeights init(std::size_t d_model, Rng& rng, const std::string& prefix);
  void collect(std::vector<const Parameter*>& out) const;
};

/// Standard multi-head attention layer (Q/K/V projections, per-head mixing,
/// output projection) using softmax or linear attention.
Var multihead_attention(Tape& tape, const Var& input, const MultiHeadWeights& w, std::size_t heads, Kind kind);

}  // namespace waverora::attention

#endif  // WAVERORA_ATTENTION_HPP
