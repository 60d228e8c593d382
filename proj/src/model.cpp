#include "waverora/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "waverora/error.hpp"
#include "waverora/ops.hpp"

namespace waverora::model {
namespace {

constexpr double kWaveNormEps = 1e-5;

std::string level_name(std::string_view prefix, std::size_t index) {
  return std::string(prefix) + "." + std::to_string(index);
}

Tensor row_of(const std::vector<double>& values) { return Tensor({values.size()}, values); }

// Inverted dropout mask: kept entries are scaled by 1/(1 − p).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  Tensor mask(shape);
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace

std::string_view to_string(LossDomain domain) { return domain == LossDomain::time ? "time" : "coefficient"; }

LossDomain parse_loss_domain(std::string_view text) {
  if (text == "time") return LossDomain::time;
  if (text == "coefficient") return LossDomain::coefficient;
  throw ConfigError("unknown loss domain '" + std::string(text) + "'; expected time or coefficient");
}

std::size_t auto_routes(std::size_t variables) {
  const double m = static_cast<double>(std::max<std::size_t>(variables, 1));
  const double rule = std::min(10.0, (std::log(m) + std::sqrt(m)) / 2.0);
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(rule)));
}

std::size_t ModelConfig::resolved_routes() const { return routes == 0 ? auto_routes(variables) : routes; }

attention::RoRAConfig ModelConfig::attention_config() const {
  attention::RoRAConfig cfg;
  cfg.d_model = token_width();
  cfg.heads = heads;
  cfg.routes = resolved_routes();
  cfg.rotary = rotary;
  cfg.gate = gate;
  cfg.skip = skip;
  return cfg;
}

void ModelConfig::validate() const {
  if (levels < 1) throw ConfigError("levels: J >= 1 required (pure time-domain mode is not supported)");
  if (lookback < 2) throw ConfigError("lookback: L >= 2 required");
  if (horizon < 1) throw ConfigError("horizon: H >= 1 required");
  if (variables < 1) throw ConfigError("variables: M >= 1 required");
  if (embed_dim < 1) throw ConfigError("embed_dim: D >= 1 required");
  if (heads < 1) throw ConfigError("heads: at least one head required");
  if (token_width() % heads != 0) {
    throw ConfigError("heads: D' = (J+1)*D = " + std::to_string(token_width()) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1)");
  const wavelet::FilterBank fb = wavelet::make_filter_bank(basis);
  try {
    wavelet::length_schedule(lookback, fb.support(), levels);
  } catch (const DepthError& e) {
    throw DepthError(std::string("lookback: ") + e.what());
  }
  try {
    wavelet::length_schedule(horizon, fb.support(), levels);
  } catch (const DepthError& e) {
    throw DepthError(std::string("horizon: ") + e.what());
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"lookback", lookback},
          {"horizon", horizon},
          {"variables", variables},
          {"levels", levels},
          {"embed_dim", embed_dim},
          {"encoder_layers", encoder_layers},
          {"heads", heads},
          {"routes", routes},
          {"basis", basis},
          {"dropout", dropout},
          {"rotary", rotary},
          {"gate", gate},
          {"skip", skip},
          {"attention", std::string(attention::to_string(attention))},
          {"loss_domain", std::string(to_string(loss_domain))},
          {"outer_residual", outer_residual}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known = {"lookback", "horizon", "variables", "levels",  "embed_dim",
                                              "encoder_layers", "heads", "routes", "basis", "dropout",
                                              "rotary", "gate", "skip", "attention", "loss_domain",
                                              "outer_residual"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("lookback", c.lookback);
    get("horizon", c.horizon);
    get("variables", c.variables);
    get("levels", c.levels);
    get("embed_dim", c.embed_dim);
    get("encoder_layers", c.encoder_layers);
    get("heads", c.heads);
    get("routes", c.routes);
    get("basis", c.basis);
    get("dropout", c.dropout);
    get("rotary", c.rotary);
    get("gate", c.gate);
    get("skip", c.skip);
    get("outer_residual", c.outer_residual);
    if (j.contains("attention")) c.attention = attention::parse_kind(j.at("attention").get<std::string>());
    if (j.contains("loss_domain")) c.loss_domain = parse_loss_domain(j.at("loss_domain").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::pair<Tensor, InstanceNormState> instance_normalize(const Tensor& x) {
  if (x.rank() != 2 || x.rows() < 2) {
    throw ShapeError("instance_normalize: expected an L×M window with L >= 2, got " + shape_string(x.shape()));
  }
  const std::size_t steps = x.rows(), vars = x.cols();
  InstanceNormState state{std::vector<double>(vars, 0.0), std::vector<double>(vars, 0.0)};
  Tensor out({steps, vars});
  for (std::size_t m = 0; m < vars; ++m) {
    double mean = 0.0;
    for (std::size_t t = 0; t < steps; ++t) mean += x(t, m);
    mean /= static_cast<double>(steps);
    double var = 0.0;
    for (std::size_t t = 0; t < steps; ++t) var += (x(t, m) - mean) * (x(t, m) - mean);
    var /= static_cast<double>(steps);
    const double sd = std::sqrt(var + kInstanceNormEps);
    state.mean[m] = mean;
    state.stdev[m] = sd;
    for (std::size_t t = 0; t < steps; ++t) out(t, m) = (x(t, m) - mean) / sd;
  }
  return {std::move(out), std::move(state)};
}

Tensor instance_denormalize(const Tensor& y, const InstanceNormState& state) {
  if (y.rank() != 2 || y.cols() != state.mean.size() || y.cols() != state.stdev.size()) {
    throw ShapeError("instance_denormalize: " + shape_string(y.shape()) + " does not match " +
                     std::to_string(state.mean.size()) + " recorded variables");
  }
  return ops::add_row(ops::mul_row(y, row_of(state.stdev)), row_of(state.mean));
}

WaveRoRAModel::WaveRoRAModel(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      input_transform_(wavelet::make_filter_bank(config.basis), config.lookback, config.levels),
      output_transform_(wavelet::make_filter_bank(config.basis), config.horizon, config.levels) {
  Rng rng(seed);
  const std::size_t levels = config_.levels;
  const std::size_t d = config_.embed_dim;
  const std::size_t width = config_.token_width();
  const auto& in = input_transform_.schedule().per_level;
  const auto& out = output_transform_.schedule().per_level;

  for (std::size_t j = 0; j <= levels; ++j) {
    embed_.push_back(attention::Linear::init(level_name("embed", j), in[std::min(j, levels - 1)], d, rng));
  }
  const attention::RoRAConfig attn = config_.attention_config();
  for (std::size_t n = 0; n < config_.encoder_layers; ++n) {
    const std::string prefix = level_name("encoder", n);
    EncoderLayer layer;
    if (config_.attention == attention::Kind::rora) {
      layer.rora = attention::RoRAWeights::init(attn, rng, prefix + ".rora");
    } else {
      layer.mixer = attention::MultiHeadWeights::init(width, rng, prefix + ".attn");
    }
    layer.norm_scale = Parameter(prefix + ".norm.scale", Tensor({width}, 1.0));
    layer.norm_shift = Parameter(prefix + ".norm.shift", Tensor({width}, 0.0));
    encoders_.push_back(std::move(layer));
  }
  for (std::size_t j = 0; j <= levels; ++j) {
    predict_.push_back(attention::Linear::init(level_name("predict", j), d, out[std::min(j, levels - 1)], rng));
  }
}

std::vector<Var> WaveRoRAModel::wave_embed(Tape& tape, std::span<const Var> components) const {
  if (components.size() != embed_.size()) {
    throw ShapeError("wave_embed: expected " + std::to_string(embed_.size()) + " components, got " +
                     std::to_string(components.size()));
  }
  std::vector<Var> out;
  for (std::size_t j = 0; j < components.size(); ++j) {
    const Tensor& c = components[j].value();
    if (c.rank() != 2 || c.cols() != embed_[j].in_features()) {
      throw ShapeError("wave_embed: component " + std::to_string(j) + " has shape " + shape_string(c.shape()) +
                       ", expected length " + std::to_string(embed_[j].in_features()));
    }
    out.push_back(embed_[j](tape, components[j]));
  }
  return out;
}

Var WaveRoRAModel::encode(Tape& tape, Var tokens, Rng* dropout_rng) const {
  const attention::RoRAConfig attn = config_.attention_config();
  for (const EncoderLayer& layer : encoders_) {
    Var mixed = config_.attention == attention::Kind::rora
                    ? attention::rora_forward(tape, tokens, layer.rora, attn)
                    : attention::multihead_attention(tape, tokens, layer.mixer, config_.heads, config_.attention);
    if (config_.outer_residual) mixed = ad::add(tokens, mixed);
    // WaveNorm: each (level, variable) token of width D is normalized on its own.
    Var normed = ad::segment_normalize(mixed, config_.embed_dim, kWaveNormEps);
    normed = ad::add_row(ad::mul_row(normed, tape.param(layer.norm_scale)), tape.param(layer.norm_shift));
    if (dropout_rng != nullptr && config_.dropout > 0.0) {
      normed = ad::mul(normed, tape.constant(dropout_mask(normed.shape(), config_.dropout, *dropout_rng)));
    }
    tokens = normed;
  }
  return tokens;
}

std::vector<Var> WaveRoRAModel::wave_predict(Tape& tape, const Var& tokens) const {
  const std::size_t d = config_.embed_dim;
  if (tokens.value().rank() != 2 || tokens.value().cols() != config_.token_width()) {
    throw ShapeError("wave_predict: expected M×" + std::to_string(config_.token_width()) + " tokens, got " +
                     shape_string(tokens.shape()));
  }
  std::vector<Var> out;
  for (std::size_t j = 0; j < predict_.size(); ++j) {
    out.push_back(predict_[j](tape, ad::gelu(ad::slice_cols(tokens, j * d, d))));
  }
  return out;
}

std::vector<Tensor> WaveRoRAModel::wave_embed(const wavelet::CoefficientPyramid& pyramid) const {
  if (pyramid.schedule != input_transform_.schedule()) {
    throw ShapeError("wave_embed: pyramid schedule does not match the model's lookback schedule");
  }
  Tape tape(false);
  std::vector<Var> comps;
  for (Tensor& c : pyramid.components()) comps.push_back(tape.constant(std::move(c)));
  std::vector<Tensor> out;
  for (const Var& e : wave_embed(tape, comps)) out.push_back(e.value());
  return out;
}

Tensor WaveRoRAModel::encode(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.cols() != config_.token_width()) {
    throw ShapeError("encode: expected M×" + std::to_string(config_.token_width()) + " tokens, got " +
                     shape_string(tokens.shape()));
  }
  Tape tape(false);
  return encode(tape, tape.constant(tokens), nullptr).value();
}

wavelet::CoefficientPyramid WaveRoRAModel::wave_predict(std::span<const Tensor> outputs) const {
  Tape tape(false);
  const Var tokens = tape.constant(ops::concat_cols(outputs));
  std::vector<Var> comps = wave_predict(tape, tokens);
  wavelet::CoefficientPyramid pyramid;
  for (std::size_t j = 0; j + 1 < comps.size(); ++j) pyramid.high.push_back(comps[j].value());
  pyramid.low = comps.back().value();
  pyramid.schedule = output_transform_.schedule();
  pyramid.basis = config_.basis;
  return pyramid;
}

ForwardTrace WaveRoRAModel::forward(Tape& tape, const Tensor& window, Rng* dropout_rng) const {
  if (window.rank() != 2 || window.rows() != config_.lookback || window.cols() != config_.variables) {
    throw ShapeError("forward: expected a " + std::to_string(config_.lookback) + "×" +
                     std::to_string(config_.variables) + " window, got " + shape_string(window.shape()));
  }
  auto [normalized, state] = instance_normalize(window);
  const Var signal = tape.constant(ops::transpose(normalized));  // M×L, one row per variable
  const std::vector<Var> components = input_transform_.decompose(signal);
  const std::vector<Var> embedded = wave_embed(tape, components);
  const Var tokens = encode(tape, ad::concat_cols(embedded), dropout_rng);
  std::vector<Var> predicted = wave_predict(tape, tokens);
  const Var series = ad::transpose(output_transform_.reconstruct(predicted));  // H×M
  const Var output = ad::add_row(ad::mul_row(series, tape.constant(row_of(state.stdev))),
                                 tape.constant(row_of(state.mean)));
  return ForwardTrace{output, std::move(predicted), std::move(state)};
}

Tensor WaveRoRAModel::forecast(const Tensor& window) const {
  Tape tape(false);
  return forward(tape, window, nullptr).output.value();
}

Var WaveRoRAModel::loss(Tape& tape, const Tensor& window, const Tensor& target, Rng* dropout_rng) const {
  if (target.rank() != 2 || target.rows() != config_.horizon || target.cols() != config_.variables) {
    throw ShapeError("loss: expected a " + std::to_string(config_.horizon) + "×" + std::to_string(config_.variables) +
                     " target, got " + shape_string(target.shape()));
  }
  ForwardTrace trace = forward(tape, window, dropout_rng);
  if (config_.loss_domain == LossDomain::time) return ad::mse_loss(trace.output, target);

  // Coefficient domain: the target is normalized with the input window's statistics.
  Tensor scaled = target;
  for (std::size_t t = 0; t < scaled.rows(); ++t) {
    for (std::size_t m = 0; m < scaled.cols(); ++m) {
      scaled(t, m) = (scaled(t, m) - trace.norm.mean[m]) / trace.norm.stdev[m];
    }
  }
  const wavelet::CoefficientPyramid truth =
      wavelet::dwt(ops::transpose(scaled), output_transform_.filter_bank(), config_.levels);
  const std::vector<Tensor> parts = truth.components();
  return ad::mse_loss(ad::concat_cols(trace.predicted), ops::concat_cols(parts));
}

std::vector<const Parameter*> WaveRoRAModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& e : embed_) e.collect(out);
  for (const EncoderLayer& layer : encoders_) {
    if (config_.attention == attention::Kind::rora) {
      layer.rora.collect(out);
    } else {
      layer.mixer.collect(out);
    }
    out.push_back(&layer.norm_scale);
    out.push_back(&layer.norm_shift);
  }
  for (const auto& p : predict_) p.collect(out);
  return out;
}

std::vector<Parameter*> WaveRoRAModel::parameters() {
  std::vector<Parameter*> out;
  for (const Parameter* p : std::as_const(*this).parameters()) out.push_back(const_cast<Parameter*>(p));
  return out;
}

std::size_t WaveRoRAModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

}  // namespace waverora::model
