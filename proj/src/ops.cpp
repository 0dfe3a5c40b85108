#include "opbil/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace opbil {
namespace {

using RowMajor = Tensor::RowMajorMatrix;

// Every convolution is lowered to three spatial axes; unused leading axes have
// extent 1. Patches are gathered into a (positions x k*k*k*C) matrix so that
// forward and both gradients become single GEMMs.
struct ConvGeometry {
  int spatial = 0;
  std::array<Index, 3> in{1, 1, 1};
  std::array<Index, 3> out{1, 1, 1};
  std::array<Index, 3> k{1, 1, 1};
  std::array<Index, 3> pad{0, 0, 0};
  Index stride = 1;
  Index channels = 0;
  Index filters = 0;

  Index positions() const { return out[0] * out[1] * out[2]; }
  Index patch() const { return k[0] * k[1] * k[2] * channels; }

  Shape output_shape() const {
    Shape s(out.end() - spatial, out.end());
    s.push_back(filters);
    return s;
  }
};

ConvGeometry make_geometry(const std::string& name, int spatial, const Tensor& input,
                           const Tensor& kernel, Index stride, Padding padding) {
  if (input.rank() != spatial + 1)
    throw ShapeError(name + ": input must have rank " + std::to_string(spatial + 1) + ", got " +
                     shape_string(input.shape()));
  if (kernel.rank() != spatial + 2)
    throw ShapeError(name + ": kernel must have rank " + std::to_string(spatial + 2) + ", got " +
                     shape_string(kernel.shape()));
  if (stride < 1) throw ShapeError(name + ": stride must be positive");

  ConvGeometry g;
  g.spatial = spatial;
  g.stride = stride;
  g.channels = input.dim(spatial);
  g.filters = kernel.dim(spatial + 1);
  if (kernel.dim(spatial) != g.channels)
    throw ShapeError(name + ": input channels (axis " + std::to_string(spatial) + ") = " +
                     std::to_string(g.channels) + " but kernel expects " +
                     std::to_string(kernel.dim(spatial)));

  const int lead = 3 - spatial;
  for (int a = 0; a < spatial; ++a) {
    const Index in = input.dim(a);
    const Index k = kernel.dim(a);
    if (padding == Padding::Valid && k > in)
      throw ShapeError(name + ": kernel extent " + std::to_string(k) + " exceeds input axis " +
                       std::to_string(a) + " extent " + std::to_string(in));
    const Index out = conv_output_extent(in, k, stride, padding);
    g.in[lead + a] = in;
    g.k[lead + a] = k;
    g.out[lead + a] = out;
    if (padding == Padding::Same) {
      const Index total = std::max<Index>((out - 1) * stride + k - in, 0);
      g.pad[lead + a] = total / 2;
    }
  }
  return g;
}

// Calls fn(row, col_offset, input_offset) for every in-bounds patch element run
// of length `channels`.
template <typename Fn>
void for_each_patch_run(const ConvGeometry& g, Fn&& fn) {
  Index row = 0;
  for (Index o0 = 0; o0 < g.out[0]; ++o0)
    for (Index o1 = 0; o1 < g.out[1]; ++o1)
      for (Index o2 = 0; o2 < g.out[2]; ++o2, ++row) {
        Index col = 0;
        for (Index a = 0; a < g.k[0]; ++a) {
          const Index i0 = o0 * g.stride + a - g.pad[0];
          for (Index b = 0; b < g.k[1]; ++b) {
            const Index i1 = o1 * g.stride + b - g.pad[1];
            for (Index c = 0; c < g.k[2]; ++c, col += g.channels) {
              const Index i2 = o2 * g.stride + c - g.pad[2];
              if (i0 < 0 || i0 >= g.in[0] || i1 < 0 || i1 >= g.in[1] || i2 < 0 || i2 >= g.in[2])
                continue;
              fn(row, col, ((i0 * g.in[1] + i1) * g.in[2] + i2) * g.channels);
            }
          }
        }
      }
}

bool has_padding(const ConvGeometry& g) {
  return g.pad[0] || g.pad[1] || g.pad[2] ||
         (g.out[0] - 1) * g.stride + g.k[0] > g.in[0] ||
         (g.out[1] - 1) * g.stride + g.k[1] > g.in[1] ||
         (g.out[2] - 1) * g.stride + g.k[2] > g.in[2];
}

RowMajor im2col(const ConvGeometry& g, const Tensor& input) {
  RowMajor cols(g.positions(), g.patch());
  if (has_padding(g)) cols.setZero();
  const double* src = input.data().data();
  for_each_patch_run(g, [&](Index row, Index col, Index at) {
    std::copy_n(src + at, g.channels, &cols(row, col));
  });
  return cols;
}

Tensor col2im(const ConvGeometry& g, const RowMajor& cols, const Shape& input_shape) {
  Tensor out(input_shape);
  double* dst = out.data().data();
  for_each_patch_run(g, [&](Index row, Index col, Index at) {
    const double* src = &cols(row, col);
    for (Index c = 0; c < g.channels; ++c) dst[at + c] += src[c];
  });
  return out;
}

Tensor conv_forward(const std::string& name, int spatial, const Tensor& input,
                    const Tensor& kernel, Index stride, Padding padding, ConvPatches* keep) {
  const ConvGeometry g = make_geometry(name, spatial, input, kernel, stride, padding);
  RowMajor cols = im2col(g, input);
  Tensor out(g.output_shape());
  out.matrix(g.positions(), g.filters).noalias() = cols * kernel.matrix(g.patch(), g.filters);
  if (keep) keep->columns = std::move(cols);
  return out;
}

ConvGrads conv_backward(const std::string& name, int spatial, const Tensor& input,
                        const Tensor& kernel, const Tensor& upstream, Index stride,
                        Padding padding, const ConvPatches* cached) {
  const ConvGeometry g = make_geometry(name, spatial, input, kernel, stride, padding);
  if (upstream.shape() != g.output_shape())
    throw ShapeError(name + ": upstream gradient " + shape_string(upstream.shape()) +
                     " does not match output " + shape_string(g.output_shape()));
  const auto dy = upstream.matrix(g.positions(), g.filters);
  RowMajor rebuilt;
  if (!cached || cached->columns.rows() != g.positions() || cached->columns.cols() != g.patch())
    rebuilt = im2col(g, input);
  const RowMajor& cols = rebuilt.size() ? rebuilt : cached->columns;

  ConvGrads grads{Tensor(), Tensor(kernel.shape())};
  grads.kernel.matrix(g.patch(), g.filters).noalias() = cols.transpose() * dy;
  const RowMajor dcols = dy * kernel.matrix(g.patch(), g.filters).transpose();
  grads.input = col2im(g, dcols, input.shape());
  return grads;
}

}  // namespace

Index conv_output_extent(Index in, Index kernel, Index stride, Padding padding) {
  if (padding == Padding::Same) return (in + stride - 1) / stride;
  return in >= kernel ? (in - kernel) / stride + 1 : 0;
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, Index stride, Padding padding,
              ConvPatches* keep) {
  return conv_forward("conv1d", 1, input, kernel, stride, padding, keep);
}
Tensor conv2d(const Tensor& input, const Tensor& kernel, Index stride, Padding padding,
              ConvPatches* keep) {
  return conv_forward("conv2d", 2, input, kernel, stride, padding, keep);
}
Tensor conv3d(const Tensor& input, const Tensor& kernel, Index stride, Padding padding,
              ConvPatches* keep) {
  return conv_forward("conv3d", 3, input, kernel, stride, padding, keep);
}

ConvGrads conv1d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                          Index stride, Padding padding, const ConvPatches* cached) {
  return conv_backward("conv1d", 1, input, kernel, upstream, stride, padding, cached);
}
ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                          Index stride, Padding padding, const ConvPatches* cached) {
  return conv_backward("conv2d", 2, input, kernel, upstream, stride, padding, cached);
}
ConvGrads conv3d_backward(const Tensor& input, const Tensor& kernel, const Tensor& upstream,
                          Index stride, Padding padding, const ConvPatches* cached) {
  return conv_backward("conv3d", 3, input, kernel, upstream, stride, padding, cached);
}

Tensor add_bias(const Tensor& input, const Tensor& bias) {
  const Index channels = input.dim(input.rank() - 1);
  if (bias.rank() != 1 || bias.dim(0) != channels)
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) +
                     " does not match channel axis of " + shape_string(input.shape()));
  Tensor out = input;
  out.matrix(input.size() / channels, channels).rowwise() += bias.data().transpose();
  return out;
}

Tensor add_bias_backward(const Tensor& upstream) {
  const Index channels = upstream.dim(upstream.rank() - 1);
  Tensor grad({channels});
  grad.data() = upstream.matrix(upstream.size() / channels, channels).colwise().sum().transpose();
  return grad;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  out.data() = input.data().cwiseMax(0.0);
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (input.shape() != upstream.shape())
    throw ShapeError("relu_backward: upstream " + shape_string(upstream.shape()) + " vs input " +
                     shape_string(input.shape()));
  Tensor grad = upstream;
  grad.data() = (input.data().array() > 0.0).select(upstream.data(), 0.0);
  return grad;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) throw ShapeError("dense: weights must be a matrix");
  const Index m = weights.dim(0);
  const Index n = weights.dim(1);
  if (input.size() != n)
    throw ShapeError("dense: input length " + std::to_string(input.size()) +
                     " does not match weights axis 1 = " + std::to_string(n));
  if (bias.size() != m)
    throw ShapeError("dense: bias length " + std::to_string(bias.size()) +
                     " does not match weights axis 0 = " + std::to_string(m));
  Tensor out({m});
  out.data().noalias() = weights.matrix(m, n) * input.data();
  out.data() += bias.data();
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  const Index m = weights.dim(0);
  const Index n = weights.dim(1);
  if (upstream.size() != m) throw ShapeError("dense_backward: upstream length mismatch");
  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({m})};
  g.input.data().noalias() = weights.matrix(m, n).transpose() * upstream.data();
  g.weights.matrix(m, n).noalias() = upstream.data() * input.data().transpose();
  g.bias.data() = upstream.data();
  return g;
}

Tensor global_average_pool(const Tensor& input) {
  const Index channels = input.dim(input.rank() - 1);
  const Index count = input.size() / channels;
  Tensor out({channels});
  out.data() = input.matrix(count, channels).colwise().mean().transpose();
  return out;
}

Tensor global_average_pool_backward(const Shape& input_shape, const Tensor& upstream) {
  const Index channels = input_shape.back();
  const Index count = shape_size(input_shape) / channels;
  Tensor grad(input_shape);
  grad.matrix(count, channels).rowwise() = upstream.data().transpose() / double(count);
  return grad;
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const double top = logits.data().maxCoeff();
  p.data() = (logits.data().array() - top).exp();
  p.data() /= p.data().sum();
  return p;
}

double softmax_cross_entropy(const Tensor& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(logits.size()) + ")");
  const double top = logits.data().maxCoeff();
  const double log_sum = std::log((logits.data().array() - top).exp().sum()) + top;
  return log_sum - logits[label];
}

Tensor softmax_cross_entropy_backward(const Tensor& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw std::out_of_range("softmax_cross_entropy: label out of range");
  Tensor grad = softmax(logits);
  grad[label] -= 1.0;
  return grad;
}

}  // namespace opbil
