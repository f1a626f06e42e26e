// Differentiable operations. Shapes are explicit: the only broadcast is the
// bias addition inside affine / add_channel_bias, and broadcast_rows when
// asked for by name.
#pragma once

#include <vector>

#include "docir/autodiff/graph.hpp"

namespace docir::ad {

/// Valid cross-correlation. x: [B,C,H,W] or [C,H,W]; kernels: [O,C,k,k].
/// Output spatial size is floor((H-k)/stride)+1.
template <class T>
Var<T> conv2d(Var<T> x, Var<T> kernels, int stride);

/// x: [B,O,H,W] (or [O,H,W]); bias: [O].
template <class T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias);

/// x: [B,in] or [in]; weights: [out,in]; bias: [out].
template <class T>
Var<T> affine(Var<T> x, Var<T> weights, Var<T> bias);

template <class T> Var<T> relu(Var<T> x);
template <class T> Var<T> tanh(Var<T> x);
template <class T> Var<T> sigmoid(Var<T> x);
template <class T> Var<T> exp(Var<T> x);
template <class T> Var<T> log(Var<T> x);
/// log(1 + e^x), computed stably.
template <class T> Var<T> softplus(Var<T> x);
template <class T> Var<T> square(Var<T> x);
template <class T> Var<T> scale(Var<T> x, double factor);
template <class T> Var<T> add_scalar(Var<T> x, double offset);
/// Gradient passes only where lo < x < hi.
template <class T> Var<T> clamp(Var<T> x, double lo, double hi);

template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
/// Elementwise minimum; ties send the gradient to `a`.
template <class T> Var<T> minimum(Var<T> a, Var<T> b);

/// Sum of all elements, shape [1].
template <class T> Var<T> sum(Var<T> x);
template <class T> Var<T> mean(Var<T> x);
/// x: [B,d] -> [B].
template <class T> Var<T> row_sum(Var<T> x);

template <class T> Var<T> reshape(Var<T> x, Shape shape);
/// [B, ...] -> [B, prod(...)].
template <class T> Var<T> flatten(Var<T> x);
/// Column-wise concatenation of [B,d_i] blocks.
template <class T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
/// Columns [begin, end) of a [B,d] matrix.
template <class T> Var<T> slice_cols(Var<T> x, int begin, int end);
/// [d] -> [rows,d].
template <class T> Var<T> broadcast_rows(Var<T> v, int rows);
/// table: [V,d]; returns [ids.size(), d].
template <class T> Var<T> embedding(Var<T> table, const std::vector<int>& ids);

}  // namespace docir::ad
