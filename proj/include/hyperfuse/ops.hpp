#pragma once

#include "hyperfuse/tensor.hpp"

#include <vector>

namespace hyperfuse {

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// s must hold exactly one value; it is broadcast over x.
Tensor mul_scalar(const Tensor& s, const Tensor& x);

enum class ActivationKind { Sigmoid, Silu };

Tensor activation(ActivationKind kind, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x);
// n x d -> [d], arithmetic mean over rows. Throws EmptyNodeSet for n == 0.
Tensor mean_rows(const Tensor& m);

// ---- matrices --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
// Row-wise softmax of scale * m with the row max subtracted first.
Tensor softmax_rows(const Tensor& m, double scale);
// Divides each row by its sum. Rows must have a positive sum.
Tensor normalize_rows(const Tensor& m);
// Adds a [d] or [1 x d] bias to every row of an n x d matrix, or an n x d bias elementwise.
Tensor add_rows(const Tensor& m, const Tensor& bias);
// Scales row k of an r x d matrix by g[k].
Tensor scale_rows(const Tensor& m, const Tensor& g);
Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
// x[n x in] * weight[out x in]^T + bias[out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(const Tensor& x, const Shape& shape);

// ---- feature maps (c x h x w) ----------------------------------------------

enum class ResampleKind { GlobalAvgPool, NearestUp2, StrideDown2 };

Tensor pool_resample(ResampleKind kind, const Tensor& x);
Tensor global_avg_pool(const Tensor& x);
Tensor nearest_up2(const Tensor& x);
Tensor stride_down2(const Tensor& x);

Tensor conv_pointwise(const Tensor& x, const Tensor& weight, const Tensor& bias);
// 3x3 per-channel convolution, zero padding, stride 1. kernel is c x 3 x 3.
Tensor depthwise_conv3x3(const Tensor& x, const Tensor& kernel, const Tensor& bias);
Tensor concat_channels(const std::vector<Tensor>& maps);
// Multiplies channel k by w[k]; w is [c] or c x 1 x 1.
Tensor scale_channels(const Tensor& x, const Tensor& w);

// c x h x w  <->  (h*w) x c node matrix.
Tensor map_to_nodes(const Tensor& x);
Tensor nodes_to_map(const Tensor& nodes, std::size_t h, std::size_t w);

}  // namespace hyperfuse
