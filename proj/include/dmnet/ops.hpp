#pragma once

#include <span>
#include <vector>

#include "dmnet/tensor.hpp"

// Differentiable tensor operations. Each op records its backward rule on the
// tape when recording is enabled and at least one input requires a gradient.
// Elementwise ops need identical shapes; there is no implicit broadcasting.

namespace dmnet::ops {

/// 2-D cross-correlation. weight is [Cout,Cin,kh,kw]; bias is [1,Cout,1,1] or
/// undefined. Output spatial size is (H + 2*pad - k) / stride + 1.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad);

template <typename T>
Tensor<T> leaky_relu(Tape<T>& tape, const Tensor<T>& x, T slope);

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, std::span<const Tensor<T>> parts);

/// Channels [begin, end) of x.
template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& x, int begin, int end);

/// out(n, c, h*r + a, w*r + b) = in(n, c*r*r + a*r + b, h, w)
template <typename T>
Tensor<T> pixel_shuffle(Tape<T>& tape, const Tensor<T>& x, int r);

/// Exact inverse of pixel_shuffle.
template <typename T>
Tensor<T> space_to_depth(Tape<T>& tape, const Tensor<T>& x, int r);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// scale * x + shift
template <typename T>
Tensor<T> scalar_affine(Tape<T>& tape, const Tensor<T>& x, T scale, T shift);

/// x - s for a [1,1,1,1] tensor s (the only broadcast the engine supports).
template <typename T>
Tensor<T> sub_scalar(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& s);

/// Mean over every element; [1,1,1,1] result. Accumulates in double.
template <typename T>
Tensor<T> mean_all(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> abs(Tape<T>& tape, const Tensor<T>& x);

/// log(1 + exp(x)), evaluated without overflow.
template <typename T>
Tensor<T> softplus(Tape<T>& tape, const Tensor<T>& x);

/// Copy of x with a different shape of equal element count.
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, const Shape& shape);

/// Per-sample, per-channel standardisation (x - mean) / sqrt(var + eps).
template <typename T>
Tensor<T> instance_norm(Tape<T>& tape, const Tensor<T>& x, T eps);

}  // namespace dmnet::ops
