#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsfuse/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its first operand and registers the matching vector-Jacobian product.
namespace gsfuse::ops {

// Elementwise, operands of identical shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
/// Adds a rank-1 `row` (length cols) to every row of `a`.
Var add_row(Var a, Var row);
/// Multiplies every row of `a` elementwise by the rank-1 `row`.
Var mul_row(Var a, Var row);

/// [m x k] * [k x n]. Rank-1 operands act as a single row.
Var matmul(Var a, Var b);
/// a * b^T for a [m x k], b [n x k].
Var matmul_nt(Var a, Var b);
/// x * W^T + bias for W [out x in]; bias may be an invalid Var for no bias.
/// Rank-1 x gives a rank-1 result.
Var linear(Var x, Var weight, Var bias);
Var transpose(Var a);

/// Softmax along `axis` (0 = down columns, 1 = along rows). Rank-1 inputs use axis 0.
Var softmax(Var x, std::size_t axis = 1);
/// Row-wise log-softmax over the trailing axis.
Var log_softmax_rows(Var x);

Var sigmoid(Var x);
/// Exact GELU, x * Phi(x).
Var gelu(Var x);
/// Layer normalization over the trailing axis with affine gain and bias (rank-1, length cols).
Var layernorm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Elementwise clamp; gradient is 1 inside [lo, hi] and 0 outside.
Var clip(Var x, double lo, double hi);

/// Mean squared error over all elements.
Var mse(Var a, Var b);
/// Mean absolute error over all elements.
Var mae(Var a, Var b);
Var sum(Var x);
Var mean(Var x);
/// Mean over rows: [n x d] -> rank-1 [d].
Var mean_rows(Var x);
/// Row-wise sum over the trailing axis: [n x d] -> [n x 1].
Var sum_rows(Var x);
/// Row-wise inner products of equally shaped matrices: [n x d] -> [n x 1].
Var rowdot(Var a, Var b);
/// Rows scaled to unit l2 norm. Throws NumericalError on a zero row.
Var l2_normalize_rows(Var x);

Var gather_rows(Var x, std::span<const std::size_t> rows);
/// Stacks matrices (or rank-1 rows) with equal column counts.
Var vconcat(std::span<const Var> parts);
/// Concatenates along the trailing axis; all parts share the row count.
Var hconcat(std::span<const Var> parts);
/// Single element as a scalar.
Var element(Var x, std::size_t index);
/// Contiguous range of a flat tensor as rank-1.
Var slice(Var x, std::size_t begin, std::size_t length);
Var reshape(Var x, Shape shape);
/// Copies the value onto the tape as a constant; no gradient flows through.
Var detach(Var x);

/// Multi-head scaled dot-product attention without projections. q [n_q x d],
/// k and v [n_kv x d]; head h uses columns [h*d/n_head, (h+1)*d/n_head).
/// When `weights` is non-null it receives per-head attention maps, n_head
/// blocks of [n_q x n_kv] laid out contiguously.
Var attention(Var q, Var k, Var v, std::size_t n_head, std::vector<double>* weights = nullptr);

}  // namespace gsfuse::ops
