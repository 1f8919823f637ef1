#pragma once

#include <vector>

#include "treeattn/tensor.hpp"

// Differentiable tensor ops.  Each op computes its result eagerly via the
// kernel layer and, when a tape is active and at least one input is tracked,
// records a backward rule on that tape.  Shape violations throw
// DimensionError naming both operand shapes.
namespace treeattn::ops {

// (m,k)·(k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);
// (m,k)·(n,k)ᵀ -> (m,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// Row-vector affine map: x(1,e)·w(d,e)ᵀ + b(1,d) -> (1,d).
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// Elementwise; operands must match shapes exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Requires strictly positive input.
Tensor log(const Tensor& a);
// Subgradient 0 at the kink.
Tensor abs(const Tensor& a);

// Row-wise softmax; rejects non-finite input.
Tensor softmax_rows(const Tensor& a);
// Softmax over all entries jointly, shape preserved.
Tensor softmax_all(const Tensor& a);
// Row-wise plain normalization y_j = x_j / sum_j x_j, the denominator
// magnitude clamped up to eps (sign preserved) when the sum is tiny, so a
// single-element row is exactly 1.  Throws DegenerateDenominatorError when a
// row sum is smaller than 1e-12 in magnitude.
Tensor normalize_rows(const Tensor& a, double eps = 1e-8);

// Stacks parts (equal column counts) top to bottom.
Tensor concat_rows(const std::vector<Tensor>& parts);
// Extracts row `index` as a (1,cols) tensor.
Tensor row(const Tensor& a, int index);
// Column-wise sum -> (1,cols).
Tensor sum_rows(const Tensor& a);
// Sum of all entries -> (1,1).
Tensor sum_all(const Tensor& a);

}  // namespace treeattn::ops
