#include "waverora/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "waverora/error.hpp"

namespace waverora::ops {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_matrix(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(double* p, std::size_t rows, std::size_t cols) {
  return MutMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

void require_matrix(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  const double* in = x.data();
  double* o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = f(in[i]);
  stats::add_flops(x.size());
  return out;
}

template <typename F>
Tensor zip(const char* op, const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape()) mismatch(op, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  stats::add_flops(a.size());
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() > 3 || b.rank() < 2 || b.rank() > 3) mismatch("matmul", a, b);
  const std::size_t a_batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t b_batch = b.rank() == 3 ? b.dim(0) : 1;
  if (a_batch != b_batch && a_batch != 1 && b_batch != 1) mismatch("matmul", a, b);
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t k = a.dim(a.rank() - 1);
  const std::size_t n = b.dim(b.rank() - 1);
  if (b.dim(b.rank() - 2) != k) mismatch("matmul", a, b);

  const std::size_t batch = std::max(a_batch, b_batch);
  const bool batched = a.rank() == 3 || b.rank() == 3;
  Tensor out(batched ? Shape{batch, m, n} : Shape{m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    const double* pa = a.data() + (a_batch == 1 ? 0 : i * m * k);
    const double* pb = b.data() + (b_batch == 1 ? 0 : i * k * n);
    as_matrix(out.data() + i * m * n, m, n).noalias() = as_matrix(pa, m, k) * as_matrix(pb, k, n);
  }
  stats::add_flops(2 * batch * m * n * k);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_nt", a);
  require_matrix("matmul_nt", b);
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  Tensor out({a.rows(), b.rows()});
  as_matrix(out.data(), a.rows(), b.rows()).noalias() =
      as_matrix(a.data(), a.rows(), a.cols()) * as_matrix(b.data(), b.rows(), b.cols()).transpose();
  stats::add_flops(2 * a.rows() * b.rows() * a.cols());
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix("matmul_tn", a);
  require_matrix("matmul_tn", b);
  if (a.rows() != b.rows()) mismatch("matmul_tn", a, b);
  Tensor out({a.cols(), b.cols()});
  as_matrix(out.data(), a.cols(), b.cols()).noalias() =
      as_matrix(a.data(), a.rows(), a.cols()).transpose() * as_matrix(b.data(), b.rows(), b.cols());
  stats::add_flops(2 * a.cols() * b.cols() * a.rows());
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix("transpose", a);
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);

  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double hi = x[base];
      for (std::size_t j = 1; j < len; ++j) hi = std::max(hi, x[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(x[base + j * inner] - hi);
        out[base + j * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  stats::add_flops(4 * x.size());
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return map(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor silu(const Tensor& x) {
  return map(x, [](double v) { return v / (1.0 + std::exp(-v)); });
}

Tensor gelu(const Tensor& x) {
  return map(x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Tensor elu_plus_one(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v + 1.0 : std::exp(v); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip("add", a, b, [](double u, double v) { return u + v; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return zip("sub", a, b, [](double u, double v) { return u - v; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return zip("hadamard", a, b, [](double u, double v) { return u * v; });
}

Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double v) { return v * s; });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_matrix("add_row", x);
  if (row.size() != x.cols()) mismatch("add_row", x, row);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) += row[c];
  }
  stats::add_flops(x.size());
  return out;
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
  require_matrix("mul_row", x);
  if (row.size() != x.cols()) mismatch("mul_row", x, row);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) *= row[c];
  }
  stats::add_flops(x.size());
  return out;
}

Tensor div_col(const Tensor& x, const Tensor& col) {
  require_matrix("div_col", x);
  if (col.size() != x.rows()) mismatch("div_col", x, col);
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double inv = 1.0 / col[r];
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) *= inv;
  }
  stats::add_flops(x.size());
  return out;
}

Tensor sum_rows(const Tensor& x) {
  require_matrix("sum_rows", x);
  Tensor out({1, x.cols()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  }
  stats::add_flops(x.size());
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix("slice_cols", x);
  if (count == 0 || begin + count > x.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(x.shape()));
  }
  Tensor out({x.rows(), count});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.data() + r * x.cols() + begin, count, out.data() + r * count);
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) mismatch("concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.data() + r * p.cols(), p.cols(), out.data() + r * cols + offset);
    }
    offset += p.cols();
  }
  return out;
}

double sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return total;
}

double mean(const Tensor& x) { return sum(x) / static_cast<double>(x.size()); }

}  // namespace waverora::ops
