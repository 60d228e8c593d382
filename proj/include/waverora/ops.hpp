#ifndef WAVERORA_OPS_HPP
#define WAVERORA_OPS_HPP

#include <cstddef>
#include <span>

#include "waverora/tensor.hpp"

// Pure tensor kernels. Every function returns a new tensor and is safe to call
// concurrently. Shape violations raise ShapeError naming both operands.
namespace waverora::ops {

/// Matrix product for rank-2 or rank-3 operands. A rank-3 operand carries a
/// leading batch dimension; a rank-2 operand (or batch size 1) broadcasts.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ for matrices.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b for matrices.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// Softmax along `axis` with max subtraction.
Tensor softmax(const Tensor& x, std::size_t axis);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
/// Exact erf form: x·Φ(x).
Tensor gelu(const Tensor& x);
/// Elu(x) + 1, strictly positive.
Tensor elu_plus_one(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// x + row, broadcasting a length-cols vector over every row of a matrix.
Tensor add_row(const Tensor& x, const Tensor& row);
/// x ⊙ row, broadcasting over rows.
Tensor mul_row(const Tensor& x, const Tensor& row);
/// Divides row i of x by col[i].
Tensor div_col(const Tensor& x, const Tensor& col);
/// Column sums of a matrix, shaped 1×cols.
Tensor sum_rows(const Tensor& x);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);

double sum(const Tensor& x);
double mean(const Tensor& x);

}  // namespace waverora::ops

#endif  // WAVERORA_OPS_HPP
