#pragma once

#include "vbs/tensor.hpp"

namespace vbs::ops {

namespace debug {
// Fault injection for verifying that the gradcheck suite actually catches
// broken backward passes. Never set outside tests.
extern bool flip_layer_norm_grad;
}  // namespace debug

// -- linear algebra ----------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose2d(const TensorPtr& t);

// -- elementwise / broadcast -------------------------------------------------

TensorPtr add(const TensorPtr& a, const TensorPtr& b);
// a[R x C] + v[C] broadcast over rows.
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& v);
// a[R x C] + v[R] broadcast over columns.
TensorPtr add_colvec(const TensorPtr& a, const TensorPtr& v);
// a[C x H x W] + v[C] broadcast over the spatial plane.
TensorPtr add_chan_bias(const TensorPtr& a, const TensorPtr& v);
TensorPtr scale(const TensorPtr& t, double s);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr gelu(const TensorPtr& t);
TensorPtr sigmoid(const TensorPtr& t);

// -- normalization / attention pieces ---------------------------------------

TensorPtr softmax(const TensorPtr& t, int axis);
TensorPtr layer_norm(const TensorPtr& t, const TensorPtr& gain, const TensorPtr& bias, double eps);

// -- shape manipulation ------------------------------------------------------

TensorPtr reshape(const TensorPtr& t, const Shape& shape);
TensorPtr slice(const TensorPtr& t, int axis, std::int64_t start, std::int64_t len);
TensorPtr concat(const std::vector<TensorPtr>& parts, int axis);
// v[1 x C] replicated to [rows x C].
TensorPtr repeat_row(const TensorPtr& v, std::int64_t rows);

// -- reductions --------------------------------------------------------------

TensorPtr sum(const TensorPtr& t);
TensorPtr mean(const TensorPtr& t);

// -- convolution -------------------------------------------------------------

// input [Cin x H x W], kernels [Cout x Cin x kh x kw], cross-correlation.
// bias may be null.
TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernels, const TensorPtr& bias,
                 int stride, int pad);
// input [Cin x H x W], kernels [Cout x Cin x k x k], output extent H*stride
// when k == stride (the only configuration the pyramid uses).
TensorPtr conv_transpose2d(const TensorPtr& input, const TensorPtr& kernels, const TensorPtr& bias,
                           int stride);

// -- sampling ----------------------------------------------------------------

// feature [C x H x W], coords [H' x W' x 2] holding (row, col) in source
// pixel units. Bilinear with zero padding outside [0,H-1]x[0,W-1]; coords
// are constants, gradients flow to the feature only.
TensorPtr resample_bilinear(const TensorPtr& feature, const TensorPtr& coords);

// image patches for the embedding: image [C x H x W] -> [Np x (P*P*C)],
// patches in row-major patch order, each flattened in (C, py, px) order.
TensorPtr image_to_patches(const TensorPtr& image, int patch);

}  // namespace vbs::ops
