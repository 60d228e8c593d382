#include "waverora/attention.hpp"

#include <cmath>

#include "waverora/error.hpp"
#include "waverora/ops.hpp"

namespace waverora::attention {
namespace {

// Rotates each consecutive pair of row m by m·θ_i; sign = −1 applies the inverse.
void rotate_rows_inplace(Tensor& x, const RotaryAngles& angles, double sign) {
  const std::size_t cols = x.cols();
  const std::size_t pairs = std::min(angles.theta.size(), cols / 2);
  for (std::size_t m = 0; m < x.rows(); ++m) {
    double* row = x.data() + m * cols;
    for (std::size_t i = 0; i < pairs; ++i) {
      const double angle = sign * static_cast<double>(m) * angles.theta[i];
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = row[2 * i], b = row[2 * i + 1];
      row[2 * i] = c * a - s * b;
      row[2 * i + 1] = s * a + c * b;
    }
  }
  stats::add_flops(6 * x.rows() * pairs);
}

void check_qkv(const char* op, const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() || k.rows() != v.rows()) {
    throw ShapeError(std::string(op) + ": incompatible Q " + shape_string(q.shape()) + ", K " +
                     shape_string(k.shape()) + ", V " + shape_string(v.shape()));
  }
}

}  // namespace

Linear Linear::init(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = Parameter(name + ".weight", rng.uniform_tensor({out, in}, -bound, bound));
  l.bias = Parameter(name + ".bias", rng.uniform_tensor({out}, -bound, bound));
  return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  const Var b = tape.param(bias);
  return ad::linear(x, tape.param(weight), &b);
}

void Linear::collect(std::vector<const Parameter*>& out) const {
  out.push_back(&weight);
  out.push_back(&bias);
}

void RoRAConfig::validate() const {
  if (d_model == 0) throw ConfigError("attention: token width must be positive");
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention: token width " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (routes == 0) throw ConfigError("attention: at least one routing token is required");
  if (!(rotary_base > 0.0)) throw ConfigError("attention: rotary base must be positive");
}

RotaryAngles RotaryAngles::standard(std::size_t routes, double base) {
  RotaryAngles a;
  a.routes = routes;
  for (std::size_t i = 0; i < routes / 2; ++i) {
    a.theta.push_back(std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(routes)));
  }
  return a;
}

Tensor rotation_matrix(const RotaryAngles& angles, double position) {
  const std::size_t r = angles.routes;
  Tensor m({r, r});
  for (std::size_t k = 0; k < r; ++k) m(k, k) = 1.0;
  for (std::size_t i = 0; i < angles.theta.size() && 2 * i + 1 < r; ++i) {
    const double c = std::cos(position * angles.theta[i]);
    const double s = std::sin(position * angles.theta[i]);
    m(2 * i, 2 * i) = c;
    m(2 * i, 2 * i + 1) = -s;
    m(2 * i + 1, 2 * i) = s;
    m(2 * i + 1, 2 * i + 1) = c;
  }
  return m;
}

Tensor rotary_rotate(const Tensor& scores, const RotaryAngles& angles) {
  if (scores.rank() != 2) throw ShapeError("rotary_rotate: expected a matrix, got " + shape_string(scores.shape()));
  Tensor out = scores;
  rotate_rows_inplace(out, angles, 1.0);
  return out;
}

Var rotary_rotate(const Var& scores, const RotaryAngles& angles) {
  return scores.tape->push(rotary_rotate(scores.value(), angles), {scores},
                           [scores, angles](Tape& t, const Tensor&, const Tensor& g) {
                             Tensor dx = g;
                             rotate_rows_inplace(dx, angles, -1.0);
                             t.accumulate(scores, dx);
                           });
}

Var route_scores_qr(const Var& q_head, const Var& r_head, const RoRAConfig& cfg) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q_head.value().cols()));
  Var scores = ad::softmax_rows(ad::scale(ad::matmul_nt(q_head, r_head), inv_sqrt_d));
  if (!cfg.rotary) return scores;
  return rotary_rotate(scores, RotaryAngles::standard(cfg.routes, cfg.rotary_base));
}

Var route_scores_rk(const Var& k_head, const Var& r_head, const RoRAConfig& cfg) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(k_head.value().cols()));
  Var scores = ad::softmax_rows(ad::scale(ad::matmul_nt(r_head, k_head), inv_sqrt_d));
  if (!cfg.rotary) return scores;
  // Column n is the score vector of variable n; rotate it as a row of the transpose.
  const auto angles = RotaryAngles::standard(cfg.routes, cfg.rotary_base);
  return ad::transpose(rotary_rotate(ad::transpose(scores), angles));
}

RoRAWeights RoRAWeights::init(const RoRAConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.head_dim();
  RoRAWeights w;
  w.query = Linear::init(prefix + ".query", d, d, rng);
  w.key = Linear::init(prefix + ".key", d, d, rng);
  w.value = Linear::init(prefix + ".value", d, d, rng);
  w.gate = Linear::init(prefix + ".gate", d, d, rng);
  w.route = Linear::init(prefix + ".route", d, d, rng);
  w.routing_tokens = Parameter(prefix + ".routing_tokens", rng.normal_tensor({cfg.routes, d}, 0.0, 0.02));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    w.skip.push_back(Linear::init(prefix + ".skip." + std::to_string(h), dh, dh, rng));
  }
  w.output = Linear::init(prefix + ".output", d, d, rng);
  return w;
}

void RoRAWeights::collect(std::vector<const Parameter*>& out) const {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  gate.collect(out);
  route.collect(out);
  out.push_back(&routing_tokens);
  for (const auto& s : skip) s.collect(out);
  output.collect(out);
}

Var rora_forward(Tape& tape, const Var& input, const RoRAWeights& w, const RoRAConfig& cfg) {
  cfg.validate();
  const Tensor& x = input.value();
  if (x.rank() != 2 || x.cols() != cfg.d_model) {
    throw ShapeError("rora_forward: expected M×" + std::to_string(cfg.d_model) + " tokens, got " +
                     shape_string(x.shape()));
  }
  if (w.routing_tokens.value.rows() != cfg.routes || w.skip.size() != cfg.heads) {
    throw ShapeError("rora_forward: weights were built for a different route/head count");
  }
  const std::size_t dh = cfg.head_dim();

  const Var q = w.query(tape, input);
  const Var k = w.key(tape, input);
  const Var v = w.value(tape, input);
  const Var routes = w.route(tape, tape.param(w.routing_tokens));

  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const Var qh = ad::slice_cols(q, h * dh, dh);
    const Var kh = ad::slice_cols(k, h * dh, dh);
    const Var vh = ad::slice_cols(v, h * dh, dh);
    const Var rh = ad::slice_cols(routes, h * dh, dh);

    const Var routed_values = ad::matmul(route_scores_rk(kh, rh, cfg), vh);  // r×dh
    Var out = ad::matmul(route_scores_qr(qh, rh, cfg), routed_values);       // M×dh
    if (cfg.skip) out = ad::add(out, w.skip[h](tape, vh));
    heads.push_back(out);
  }
  Var merged = cfg.heads == 1 ? heads.front() : ad::concat_cols(heads);
  if (cfg.gate) merged = ad::mul(merged, ad::silu(w.gate(tape, input)));
  return w.output(tape, merged);
}

Tensor rora_forward(const Tensor& input, const RoRAWeights& w, const RoRAConfig& cfg) {
  Tape tape(false);
  return rora_forward(tape, tape.constant(input), w, cfg).value();
}

Var softmax_attention(const Var& q, const Var& k, const Var& v) {
  check_qkv("softmax_attention", q.value(), k.value(), v.value());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
  return ad::matmul(ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_d)), v);
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  Tape tape(false);
  return softmax_attention(tape.constant(q), tape.constant(k), tape.constant(v)).value();
}

Var linear_attention(const Var& q, const Var& k, const Var& v) {
  check_qkv("linear_attention", q.value(), k.value(), v.value());
  const Var fq = ad::elu_plus_one(q);
  const Var fk = ad::elu_plus_one(k);
  const Var numerator = ad::matmul(fq, ad::matmul_tn(fk, v));       // M×d
  const Var denominator = ad::matmul_nt(fq, ad::sum_rows(fk));      // M×1
  return ad::div_col(numerator, denominator);
}

Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  Tape tape(false);
  return linear_attention(tape.constant(q), tape.constant(k), tape.constant(v)).value();
}

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::rora:
      return "rora";
    case Kind::softmax:
      return "softmax";
    case Kind::linear:
      return "linear";
  }
  return "rora";
}

Kind parse_kind(std::string_view text) {
  if (text == "rora") return Kind::rora;
  if (text == "softmax" || text == "sa") return Kind::softmax;
  if (text == "linear" || text == "la") return Kind::linear;
  throw ConfigError("unknown attention kind '" + std::string(text) + "'; expected rora, softmax or linear");
}

Var multihead_mix(const Var& q, const Var& k, const Var& v, std::size_t heads, Kind kind) {
  const std::size_t width = q.value().cols();
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (kind == Kind::rora) throw ConfigError("multihead_mix: rora has its own forward pass");
  const std::size_t dh = width / heads;
  auto mix = kind == Kind::softmax ? static_cast<Var (*)(const Var&, const Var&, const Var&)>(&softmax_attention)
                                   : static_cast<Var (*)(const Var&, const Var&, const Var&)>(&linear_attention);
  if (heads == 1) return mix(q, k, v);
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(mix(ad::slice_cols(q, h * dh, dh), ad::slice_cols(k, h * dh, dh), ad::slice_cols(v, h * dh, dh)));
  }
  return ad::concat_cols(outs);
}

Tensor multihead_mix(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, Kind kind) {
  Tape tape(false);
  return multihead_mix(tape.constant(q), tape.constant(k), tape.constant(v), heads, kind).value();
}

MultiHeadWeights MultiHeadWeights::init(std::size_t d_model, Rng& rng, const std::string& prefix) {
  MultiHeadWeights w;
  w.query = Linear::init(prefix + ".query", d_model, d_model, rng);
  w.key = Linear::init(prefix + ".key", d_model, d_model, rng);
  w.value = Linear::init(prefix + ".value", d_model, d_model, rng);
  w.output = Linear::init(prefix + ".output", d_model, d_model, rng);
  return w;
}

void MultiHeadWeights::collect(std::vector<const Parameter*>& out) const {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

Var multihead_attention(Tape& tape, const Var& input, const MultiHeadWeights& w, std::size_t heads, Kind kind) {
  const Var mixed = multihead_mix(w.query(tape, input), w.key(tape, input), w.value(tape, input), heads, kind);
  return w.output(tape, mixed);
}

}  // namespace waverora::attention
