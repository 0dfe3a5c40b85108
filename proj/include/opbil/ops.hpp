#ifndef OPBIL_OPS_HPP
#define OPBIL_OPS_HPP

#include "opbil/tensor.hpp"

namespace opbil {

enum class Padding { Valid, Same };

// Convolutions use the cross-correlation convention (no kernel flip), channels
// last. Input layouts: conv1d L x C, conv2d H x W x C, conv3d U x V x T x C.
// Kernels are k x C x F, k x k x C x F and k x k x k x C x F respectively.
// Same padding follows the usual out = ceil(in / stride) rule with the extra
// row/column going after the input.

/// Gathered input patches (positions x k*k*k*C). A forward pass can leave them
/// here so the matching backward pass does not rebuild them.
struct ConvPatches {
  Tensor::RowMajorMatrix columns;
};

Tensor conv1d(const Tensor& input, const Tensor& kernel, Index stride = 1,
              Padding padding = Padding::Valid, ConvPatches* keep = nullptr);
Tensor conv2d(const Tensor& input, const Tensor& kernel, Index stride = 1,
              Padding padding = Padding::Valid, ConvPatches* keep = nullptr);
Tensor conv3d(const Tensor& input, const Tensor& kernel, Index stride = 1,
              Padding padding = Padding::Valid, ConvPatches* keep = nullptr);

struct ConvGrads {
  Tensor input;
  Tensor kernel;
};

ConvGrads conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                          Index stride = 1, Padding padding = Padding::Valid,
                          const ConvPatches* cached = nullptr);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                          Index stride = 1, Padding padding = Padding::Valid,
                          const ConvPatches* cached = nullptr);
ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                          Index stride = 1, Padding padding = Padding::Valid,
                          const ConvPatches* cached = nullptr);

/// Output extent of one spatial axis.
Index conv_output_extent(Index in, Index kernel, Index stride, Padding padding);

/// Adds a per-channel bias along the last axis.
Tensor add_bias(const Tensor& input, const Tensor& bias);
/// Sums the upstream gradient over every axis except the last.
Tensor add_bias_backward(const Tensor& upstream);

Tensor relu(const Tensor& input);
/// Subgradient 0 at exactly 0.
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

/// weights (m x n) * input (n) + bias (m).
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream);

/// Mean over every axis but the last; output has the channel count as its only axis.
Tensor global_average_pool(const Tensor& input);
Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& upstream);

Tensor softmax(const Tensor& logits);
/// -log softmax(logits)[label], evaluated with max subtraction.
double softmax_cross_entropy(const Tensor& logits, int label);
/// d loss / d logits = softmax(logits) - onehot(label).
Tensor softmax_cross_entropy_backward(const Tensor& logits, int label);

}  // namespace opbil

#endif  // OPBIL_OPS_HPP
