#include "waverora/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "waverora/error.hpp"

namespace waverora {

namespace stats {
namespace {
thread_local std::size_t g_live = 0;
thread_local std::size_t g_peak = 0;
thread_local std::uint64_t g_flops = 0;
}  // namespace

std::size_t live_bytes() { return g_live; }
std::size_t peak_bytes() { return g_peak; }
void reset_peak() { g_peak = g_live; }

std::uint64_t flops() { return g_flops; }
void reset_flops() { g_flops = 0; }
void add_flops(std::uint64_t n) { g_flops += n; }

void on_allocate(std::size_t bytes) {
  g_live += bytes;
  g_peak = std::max(g_peak, g_live);
}

void on_deallocate(std::size_t bytes) { g_live -= std::min(bytes, g_live); }

}  // namespace stats

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const double> values) : Tensor(std::move(shape)) {
  if (values.size() != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " needs " + std::to_string(data_.size()) +
                     " values, got " + std::to_string(values.size()));
  }
  std::copy(values.begin(), values.end(), data_.begin());
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n_rows = rows.size();
  const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
  Tensor t({n_rows, n_cols});
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != n_cols) throw ShapeError("ragged matrix literal");
    std::copy(row.begin(), row.end(), t.data_.begin() + static_cast<std::ptrdiff_t>(r * n_cols));
    ++r;
  }
  return t;
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::span<const double>(values.begin(), values.size()));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(shape_));
  return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::operator==(const Tensor& other) const {
  return shape_ == other.shape_ && data_ == other.data_;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace waverora
