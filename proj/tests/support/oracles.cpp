#include "oracles.hpp"

#include <cmath>

namespace oracle {
namespace {

using waverora::attention::RoRAConfig;
using waverora::attention::RoRAWeights;

double elu1(double x) { return x > 0 ? x + 1.0 : std::exp(x); }
double silu(double x) { return x / (1.0 + std::exp(-x)); }

// Rotates v (length r) in place by position·θ_i on each coordinate pair.
void rotate(std::vector<double>& v, double position, double base) {
  const std::size_t r = v.size();
  for (std::size_t i = 0; 2 * i + 1 < r; ++i) {
    const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(r));
    const double c = std::cos(position * theta), s = std::sin(position * theta);
    const double a = v[2 * i], b = v[2 * i + 1];
    v[2 * i] = c * a - s * b;
    v[2 * i + 1] = s * a + c * b;
  }
}

void softmax(std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : v) x /= z;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const waverora::attention::Linear& l) {
  const Tensor& w = l.weight.value;
  Tensor y({x.rows(), w.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = l.bias.value[o];
      for (std::size_t k = 0; k < w.cols(); ++k) acc += x(i, k) * w(o, k);
      y(i, o) = acc;
    }
  }
  return y;
}

std::vector<double> dwt_level(const std::vector<double>& x, const std::vector<double>& filter) {
  const std::size_t n = x.size(), s = filter.size();
  // Half-sample symmetric padding of S−1 samples on each side.
  std::vector<double> padded;
  for (std::ptrdiff_t i = -static_cast<std::ptrdiff_t>(s - 1); i < static_cast<std::ptrdiff_t>(n + s - 1); ++i) {
    std::ptrdiff_t k = i;
    while (k < 0 || k >= static_cast<std::ptrdiff_t>(n)) {
      k = k < 0 ? -k - 1 : 2 * static_cast<std::ptrdiff_t>(n) - k - 1;
    }
    padded.push_back(x[static_cast<std::size_t>(k)]);
  }
  // Full convolution of the padded signal, keep the valid part, then every odd sample.
  std::vector<double> conv(padded.size() + s - 1, 0.0);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    for (std::size_t j = 0; j < s; ++j) conv[i + j] += padded[i] * filter[j];
  }
  std::vector<double> valid(conv.begin() + static_cast<std::ptrdiff_t>(s - 1),
                            conv.begin() + static_cast<std::ptrdiff_t>(padded.size()));
  std::vector<double> out;
  for (std::size_t i = 1; i < valid.size() && out.size() < (n + s - 1) / 2; i += 2) out.push_back(valid[i]);
  return out;
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor out({q.rows(), v.cols()});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> w(k.rows());
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      w[j] = dot * scale;
    }
    softmax(w);
    for (std::size_t j = 0; j < k.rows(); ++j) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += w[j] * v(j, c);
    }
  }
  return out;
}

Tensor linear_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  Tensor out({q.rows(), v.cols()});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> sim(k.rows());
    double total = 0.0;
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) dot += elu1(q(i, c)) * elu1(k(j, c));
      sim[j] = dot;
      total += dot;
    }
    for (std::size_t j = 0; j < k.rows(); ++j) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += sim[j] / total * v(j, c);
    }
  }
  return out;
}

Tensor rora(const Tensor& input, const RoRAWeights& w, const RoRAConfig& cfg) {
  const std::size_t m_count = input.rows(), width = cfg.d_model, heads = cfg.heads, r = cfg.routes;
  const std::size_t dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Tensor q = linear(input, w.query);
  const Tensor k = linear(input, w.key);
  const Tensor v = linear(input, w.value);
  const Tensor routes = linear(w.routing_tokens.value, w.route);
  const Tensor gate = linear(input, w.gate);

  Tensor merged({m_count, width});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    // Route-to-key scores: for each route a distribution over variables.
    std::vector<std::vector<double>> rk(r, std::vector<double>(m_count));
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t n = 0; n < m_count; ++n) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += routes(a, off + c) * k(n, off + c);
        rk[a][n] = dot * scale;
      }
      softmax(rk[a]);
    }
    if (cfg.rotary) {
      for (std::size_t n = 0; n < m_count; ++n) {
        std::vector<double> column(r);
        for (std::size_t a = 0; a < r; ++a) column[a] = rk[a][n];
        rotate(column, static_cast<double>(n), cfg.rotary_base);
        for (std::size_t a = 0; a < r; ++a) rk[a][n] = column[a];
      }
    }
    // Values gathered by each route.
    std::vector<std::vector<double>> vr(r, std::vector<double>(dh, 0.0));
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t n = 0; n < m_count; ++n) {
        for (std::size_t c = 0; c < dh; ++c) vr[a][c] += rk[a][n] * v(n, off + c);
      }
    }
    for (std::size_t i = 0; i < m_count; ++i) {
      std::vector<double> qr(r);
      for (std::size_t a = 0; a < r; ++a) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q(i, off + c) * routes(a, off + c);
        qr[a] = dot * scale;
      }
      softmax(qr);
      if (cfg.rotary) rotate(qr, static_cast<double>(i), cfg.rotary_base);
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t a = 0; a < r; ++a) acc += qr[a] * vr[a][c];
        if (cfg.skip) {
          const auto& sk = w.skip[h];
          double s = sk.bias.value[c];
          for (std::size_t e = 0; e < dh; ++e) s += sk.weight.value(c, e) * v(i, off + e);
          acc += s;
        }
        merged(i, off + c) = cfg.gate ? acc * silu(gate(i, off + c)) : acc;
      }
    }
  }
  return linear(merged, w.output);
}

}  // namespace oracle
