#include "waverora/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "waverora/error.hpp"
#include "waverora/ops.hpp"

namespace waverora {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  nodes_.push_back(Node{{}, &p, {}, record_, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::push(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const auto& v : inputs) {
      if (v.tape != this) throw Error("autograd: operand belongs to a different tape");
      needs = needs || nodes_[v.id].needs_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), nullptr, {}, needs, needs ? std::move(backward) : Backward{}});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  Tensor& target = n.param ? n.param->grad : n.grad;
  if (target.empty()) {
    target = g;
    return;
  }
  if (target.shape() != g.shape()) {
    throw ShapeError("autograd: gradient " + shape_string(g.shape()) + " does not match " +
                     shape_string(target.shape()));
  }
  double* t = target.data();
  const double* s = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) t[i] += s[i];
}

void Tape::backward(const Var& loss) {
  if (!record_) throw Error("autograd: backward on a non-recording tape");
  if (loss.value().size() != 1) {
    throw ShapeError("autograd: backward needs a scalar loss, got " + shape_string(loss.shape()));
  }
  accumulate(loss.id, Tensor(loss.shape(), 1.0));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.param || !n.backward || n.grad.empty()) continue;
    Tensor g = std::move(n.grad);
    n.grad = Tensor();
    n.backward(*this, n.value, g);
  }
}

namespace ad {
namespace {

Tape& tape_of(const Var& a) { return *a.tape; }

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape != b.tape) throw Error("autograd: operands belong to different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return tape_of(a).push(ops::matmul(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, const Tensor&, const Tensor& g) {
                           if (t.needs_grad(a.id)) t.accumulate(a, ops::matmul_nt(g, b.value()));
                           if (t.needs_grad(b.id)) t.accumulate(b, ops::matmul_tn(a.value(), g));
                         });
}

Var matmul_nt(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return tape_of(a).push(ops::matmul_nt(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, const Tensor&, const Tensor& g) {
                           if (t.needs_grad(a.id)) t.accumulate(a, ops::matmul(g, b.value()));
                           if (t.needs_grad(b.id)) t.accumulate(b, ops::matmul_tn(g, a.value()));
                         });
}

Var matmul_tn(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return tape_of(a).push(ops::matmul_tn(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, const Tensor&, const Tensor& g) {
                           if (t.needs_grad(a.id)) t.accumulate(a, ops::matmul_nt(b.value(), g));
                           if (t.needs_grad(b.id)) t.accumulate(b, ops::matmul(a.value(), g));
                         });
}

Var linear(const Var& x, const Var& weight, const Var* bias) {
  check_same_tape(x, weight);
  Tensor out = ops::matmul_nt(x.value(), weight.value());
  if (bias) out = ops::add_row(out, bias->value());
  if (bias) {
    const Var b = *bias;
    return tape_of(x).push(std::move(out), {x, weight, b},
                           [x, weight, b](Tape& t, const Tensor&, const Tensor& g) {
                             if (t.needs_grad(x.id)) t.accumulate(x, ops::matmul(g, weight.value()));
                             if (t.needs_grad(weight.id)) t.accumulate(weight, ops::matmul_tn(g, x.value()));
                             if (t.needs_grad(b.id)) t.accumulate(b, ops::sum_rows(g).reshaped(b.shape()));
                           });
  }
  return tape_of(x).push(std::move(out), {x, weight}, [x, weight](Tape& t, const Tensor&, const Tensor& g) {
    if (t.needs_grad(x.id)) t.accumulate(x, ops::matmul(g, weight.value()));
    if (t.needs_grad(weight.id)) t.accumulate(weight, ops::matmul_tn(g, x.value()));
  });
}

Var transpose(const Var& a) {
  return tape_of(a).push(ops::transpose(a.value()), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, ops::transpose(g));
  });
}

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return tape_of(a).push(ops::add(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return tape_of(a).push(ops::sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b.id)) t.accumulate(b, ops::scale(g, -1.0));
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  return tape_of(a).push(ops::hadamard(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, const Tensor&, const Tensor& g) {
                           if (t.needs_grad(a.id)) t.accumulate(a, ops::hadamard(g, b.value()));
                           if (t.needs_grad(b.id)) t.accumulate(b, ops::hadamard(g, a.value()));
                         });
}

Var scale(const Var& a, double s) {
  return tape_of(a).push(ops::scale(a.value(), s), {a}, [a, s](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(a, ops::scale(g, s));
  });
}

Var add_row(const Var& x, const Var& row) {
  check_same_tape(x, row);
  return tape_of(x).push(ops::add_row(x.value(), row.value()), {x, row},
                         [x, row](Tape& t, const Tensor&, const Tensor& g) {
                           t.accumulate(x, g);
                           if (t.needs_grad(row.id)) t.accumulate(row, ops::sum_rows(g).reshaped(row.shape()));
                         });
}

Var mul_row(const Var& x, const Var& row) {
  check_same_tape(x, row);
  return tape_of(x).push(ops::mul_row(x.value(), row.value()), {x, row},
                         [x, row](Tape& t, const Tensor&, const Tensor& g) {
                           if (t.needs_grad(x.id)) t.accumulate(x, ops::mul_row(g, row.value()));
                           if (t.needs_grad(row.id)) {
                             t.accumulate(row, ops::sum_rows(ops::hadamard(g, x.value())).reshaped(row.shape()));
                           }
                         });
}

Var div_col(const Var& x, const Var& col) {
  check_same_tape(x, col);
  return tape_of(x).push(ops::div_col(x.value(), col.value()), {x, col},
                         [x, col](Tape& t, const Tensor& out, const Tensor& g) {
                           const Tensor& c = col.value();
                           if (t.needs_grad(x.id)) t.accumulate(x, ops::div_col(g, c));
                           if (t.needs_grad(col.id)) {
                             Tensor dc(c.shape());
                             for (std::size_t r = 0; r < out.rows(); ++r) {
                               double acc = 0.0;
                               for (std::size_t k = 0; k < out.cols(); ++k) acc += g(r, k) * out(r, k);
                               dc[r] = -acc / c[r];
                             }
                             t.accumulate(col, dc);
                           }
                         });
}

Var sum_rows(const Var& x) {
  return tape_of(x).push(ops::sum_rows(x.value()), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor dx(xv.shape());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      for (std::size_t c = 0; c < xv.cols(); ++c) dx(r, c) = g[c];
    }
    t.accumulate(x, dx);
  });
}

Var silu(const Var& x) {
  return tape_of(x).push(ops::silu(x.value()), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-xv[i]));
      dx[i] = g[i] * s * (1.0 + xv[i] * (1.0 - s));
    }
    t.accumulate(x, dx);
  });
}

Var gelu(const Var& x) {
  return tape_of(x).push(ops::gelu(x.value()), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor dx(xv.shape());
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] = g[i] * (cdf + v * pdf);
    }
    t.accumulate(x, dx);
  });
}

Var elu_plus_one(const Var& x) {
  return tape_of(x).push(ops::elu_plus_one(x.value()), {x}, [x](Tape& t, const Tensor& out, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor dx(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] = g[i] * (xv[i] > 0.0 ? 1.0 : out[i]);
    t.accumulate(x, dx);
  });
}

Var softmax_rows(const Var& x) {
  if (x.value().rank() != 2) throw ShapeError("softmax_rows: expected a matrix, got " + shape_string(x.shape()));
  return tape_of(x).push(ops::softmax(x.value(), 1), {x}, [x](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor dx(y.shape());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - dot);
    }
    t.accumulate(x, dx);
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  return tape_of(x).push(ops::slice_cols(x.value(), begin, count), {x},
                         [x, begin, count](Tape& t, const Tensor&, const Tensor& g) {
                           Tensor dx(x.shape());
                           for (std::size_t r = 0; r < g.rows(); ++r) {
                             std::copy_n(g.data() + r * count, count, dx.data() + r * dx.cols() + begin);
                           }
                           t.accumulate(x, dx);
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    check_same_tape(parts.front(), p);
    values.push_back(p.value());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape_of(parts.front())
      .push(ops::concat_cols(values), parts, [inputs](Tape& t, const Tensor&, const Tensor& g) {
        std::size_t offset = 0;
        for (const auto& p : inputs) {
          const std::size_t width = p.value().cols();
          if (t.needs_grad(p.id)) t.accumulate(p, ops::slice_cols(g, offset, width));
          offset += width;
        }
      });
}

Var segment_normalize(const Var& x, std::size_t segment, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || segment == 0 || xv.cols() % segment != 0) {
    throw ShapeError("segment_normalize: width " + std::to_string(segment) + " does not tile " +
                     shape_string(xv.shape()));
  }
  const std::size_t groups = xv.rows() * (xv.cols() / segment);
  Tensor out(xv.shape());
  std::vector<double> inv_std(groups);
  const double n = static_cast<double>(segment);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const double* in = xv.data() + gi * segment;
    double mu = 0.0;
    for (std::size_t k = 0; k < segment; ++k) mu += in[k];
    mu /= n;
    double var = 0.0;
    for (std::size_t k = 0; k < segment; ++k) var += (in[k] - mu) * (in[k] - mu);
    var /= n;
    inv_std[gi] = 1.0 / std::sqrt(var + eps);
    double* o = out.data() + gi * segment;
    for (std::size_t k = 0; k < segment; ++k) o[k] = (in[k] - mu) * inv_std[gi];
  }
  stats::add_flops(5 * xv.size());
  return tape_of(x).push(std::move(out), {x},
                         [x, segment, inv_std = std::move(inv_std), n](Tape& t, const Tensor& y, const Tensor& g) {
                           Tensor dx(y.shape());
                           for (std::size_t gi = 0; gi < inv_std.size(); ++gi) {
                             const double* yy = y.data() + gi * segment;
                             const double* gg = g.data() + gi * segment;
                             double mean_g = 0.0, mean_gy = 0.0;
                             for (std::size_t k = 0; k < segment; ++k) {
                               mean_g += gg[k];
                               mean_gy += gg[k] * yy[k];
                             }
                             mean_g /= n;
                             mean_gy /= n;
                             double* d = dx.data() + gi * segment;
                             for (std::size_t k = 0; k < segment; ++k) {
                               d[k] = inv_std[gi] * (gg[k] - mean_g - yy[k] * mean_gy);
                             }
                           }
                           t.accumulate(x, dx);
                         });
}

Var apply_linear_map(const Var& x, const Tensor& map) {
  return tape_of(x).push(ops::matmul_nt(x.value(), map), {x}, [x, map](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(x, ops::matmul(g, map));
  });
}

Var mse_loss(const Var& prediction, const Tensor& target) {
  const Tensor& p = prediction.value();
  if (p.shape() != target.shape()) {
    throw ShapeError("mse_loss: prediction " + shape_string(p.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - target[i]) * (p[i] - target[i]);
  const double count = static_cast<double>(p.size());
  return tape_of(prediction)
      .push(Tensor({1}, total / count), {prediction}, [prediction, target, count](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& pv = prediction.value();
        Tensor d(pv.shape());
        const double s = 2.0 * g[0] / count;
        for (std::size_t i = 0; i < pv.size(); ++i) d[i] = s * (pv[i] - target[i]);
        t.accumulate(prediction, d);
      });
}

Var sum(const Var& x) {
  return tape_of(x).push(Tensor({1}, ops::sum(x.value())), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    t.accumulate(x, Tensor(x.shape(), g[0]));
  });
}

}  // namespace ad
}  // namespace waverora
