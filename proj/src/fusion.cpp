#include "opbil/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace opbil {
namespace {

struct FusionDims {
  Index u, v, n, t, m;
  Index grid() const { return u * v; }
};

FusionDims fusion_dims(const char* op, const Tensor& x, const Tensor& z) {
  if (x.rank() != 3)
    throw ShapeError(std::string(op) + ": x must be U x V x N, got " + shape_string(x.shape()));
  if (z.rank() != 2)
    throw ShapeError(std::string(op) + ": z must be T x M, got " + shape_string(z.shape()));
  return {x.dim(0), x.dim(1), x.dim(2), z.dim(0), z.dim(1)};
}

void check_upstream(const char* op, const Tensor& upstream, const Shape& expected) {
  if (upstream.shape() != expected)
    throw ShapeError(std::string(op) + ": upstream gradient " + shape_string(upstream.shape()) +
                     " does not match " + shape_string(expected));
}

Index check_reduce(const Tensor& features, const Tensor& weights) {
  if (weights.rank() != 2)
    throw ShapeError("sparse_reduce: weights must be out x in, got " +
                     shape_string(weights.shape()));
  const Index depth = features.dim(features.rank() - 1);
  if (weights.dim(1) != depth)
    throw ShapeError("sparse_reduce: feature depth (axis " + std::to_string(features.rank() - 1) +
                     ") = " + std::to_string(depth) + " but weights expect " +
                     std::to_string(weights.dim(1)));
  return depth;
}

Tensor pre_activation(const Tensor& features, const Tensor& weights) {
  const Index depth = check_reduce(features, weights);
  const Index out_depth = weights.dim(0);
  const Index sites = features.size() / depth;
  Shape shape = features.shape();
  shape.back() = out_depth;
  Tensor pre(shape);
  pre.matrix(sites, out_depth).noalias() =
      features.matrix(sites, depth) * weights.matrix(out_depth, depth).transpose();
  return pre;
}

}  // namespace

Tensor sparse_reduce(const Tensor& features, const Tensor& weights) {
  return relu(pre_activation(features, weights));
}

ReduceGrads sparse_reduce_backward(const Tensor& features, const Tensor& weights,
                                   const Tensor& upstream) {
  const Tensor pre = pre_activation(features, weights);
  check_upstream("sparse_reduce_backward", upstream, pre.shape());
  const Tensor dpre = relu_backward(pre, upstream);
  const Index depth = weights.dim(1);
  const Index out_depth = weights.dim(0);
  const Index sites = features.size() / depth;
  const auto g = dpre.matrix(sites, out_depth);

  ReduceGrads grads{Tensor(features.shape()), Tensor(weights.shape())};
  grads.features.matrix(sites, depth).noalias() = g * weights.matrix(out_depth, depth);
  grads.weights.matrix(out_depth, depth).noalias() =
      g.transpose() * features.matrix(sites, depth);
  return grads;
}

double l1_penalty(const Tensor& weights, double lambda) {
  return lambda * weights.data().cwiseAbs().sum();
}

Tensor l1_subgradient(const Tensor& weights, double lambda) {
  Tensor g = weights;
  g.data() = lambda * weights.data().array().sign();
  return g;
}

Tensor op_bilinear_fuse(const Tensor& x, const Tensor& z) {
  const FusionDims d = fusion_dims("op_bilinear_fuse", x, z);
  Tensor out({d.u, d.v, d.t, d.n * d.m});
  const auto xs = x.matrix(d.grid(), d.n);
  const auto zs = z.matrix(d.t, d.m);
  for (Index g = 0; g < d.grid(); ++g) {
    // Rows of this block are the T fused descriptors at grid site g.
    auto block = Eigen::Map<Tensor::RowMajorMatrix>(out.data().data() + g * d.t * d.n * d.m,
                                                    d.t, d.n * d.m);
    for (Index i = 0; i < d.n; ++i) block.middleCols(i * d.m, d.m) = xs(g, i) * zs;
  }
  return out;
}

FusionGrads op_bilinear_backward(const Tensor& x, const Tensor& z, const Tensor& upstream) {
  const FusionDims d = fusion_dims("op_bilinear_backward", x, z);
  check_upstream("op_bilinear_backward", upstream, {d.u, d.v, d.t, d.n * d.m});
  FusionGrads grads{Tensor(x.shape()), Tensor(z.shape())};
  const auto xs = x.matrix(d.grid(), d.n);
  const auto zs = z.matrix(d.t, d.m);
  auto dx = grads.x.matrix(d.grid(), d.n);
  auto dz = grads.z.matrix(d.t, d.m);
  for (Index g = 0; g < d.grid(); ++g) {
    auto block = Eigen::Map<const Tensor::RowMajorMatrix>(
        upstream.data().data() + g * d.t * d.n * d.m, d.t, d.n * d.m);
    for (Index i = 0; i < d.n; ++i) {
      const auto gi = block.middleCols(i * d.m, d.m);
      dx(g, i) = gi.cwiseProduct(zs).sum();
      dz.noalias() += xs(g, i) * gi;
    }
  }
  return grads;
}

namespace {

using RowMajor = Tensor::RowMajorMatrix;

struct FusedConvGeometry {
  FusionDims in;
  Index ka, kb, kc, filters, stride;
  Index ou, ov, ot;
  Index x_patch() const { return ka * kb * in.n; }  // (a, b, i)
  Index z_patch() const { return kc * in.m; }       // (c, j)
  Index sites() const { return ou * ov; }
};

FusedConvGeometry fused_conv_geometry(const char* op, const Tensor& x, const Tensor& z,
                                      const Tensor& kernel, Index stride) {
  FusedConvGeometry g{fusion_dims(op, x, z), 0, 0, 0, 0, stride, 0, 0, 0};
  if (stride < 1) throw ShapeError(std::string(op) + ": stride must be positive");
  if (kernel.rank() != 5 || kernel.dim(3) != g.in.n * g.in.m)
    throw ShapeError(std::string(op) + ": kernel must be ka x kb x kc x " +
                     std::to_string(g.in.n * g.in.m) + " x F, got " + shape_string(kernel.shape()));
  g.ka = kernel.dim(0);
  g.kb = kernel.dim(1);
  g.kc = kernel.dim(2);
  g.filters = kernel.dim(4);
  g.ou = conv_output_extent(g.in.u, g.ka, stride, Padding::Valid);
  g.ov = conv_output_extent(g.in.v, g.kb, stride, Padding::Valid);
  g.ot = conv_output_extent(g.in.t, g.kc, stride, Padding::Valid);
  if (g.ou < 1 || g.ov < 1 || g.ot < 1)
    throw ShapeError(std::string(op) + ": kernel " + shape_string(kernel.shape()) +
                     " does not fit fused grid " + std::to_string(g.in.u) + " x " +
                     std::to_string(g.in.v) + " x " + std::to_string(g.in.t));
  return g;
}

RowMajor x_patches(const FusedConvGeometry& g, const Tensor& x) {
  RowMajor p(g.sites(), g.x_patch());
  for (Index u = 0; u < g.ou; ++u)
    for (Index v = 0; v < g.ov; ++v)
      for (Index a = 0; a < g.ka; ++a)
        for (Index b = 0; b < g.kb; ++b)
          std::copy_n(x.data().data() + ((u * g.stride + a) * g.in.v + v * g.stride + b) * g.in.n,
                      g.in.n,
                      &p(u * g.ov + v, (a * g.kb + b) * g.in.n));
  return p;
}

RowMajor z_patches(const FusedConvGeometry& g, const Tensor& z) {
  RowMajor p(g.ot, g.z_patch());
  for (Index t = 0; t < g.ot; ++t)
    std::copy_n(z.data().data() + t * g.stride * g.in.m, g.z_patch(), &p(t, 0));
  return p;
}

// Kernel regrouped as rows (c, j) and columns (a, b, i, f).
RowMajor regroup_kernel(const FusedConvGeometry& g, const Tensor& kernel) {
  RowMajor w(g.z_patch(), g.x_patch() * g.filters);
  const double* src = kernel.data().data();
  for (Index a = 0; a < g.ka; ++a)
    for (Index b = 0; b < g.kb; ++b)
      for (Index c = 0; c < g.kc; ++c)
        for (Index i = 0; i < g.in.n; ++i)
          for (Index j = 0; j < g.in.m; ++j) {
            const double* from = src + ((((a * g.kb + b) * g.kc + c) * g.in.n + i) * g.in.m + j) * g.filters;
            std::copy_n(from, g.filters, &w(c * g.in.m + j, ((a * g.kb + b) * g.in.n + i) * g.filters));
          }
  return w;
}

Eigen::Map<const RowMajor> step_block(const RowMajor& m, Index t, Index rows, Index cols) {
  return Eigen::Map<const RowMajor>(m.data() + t * rows * cols, rows, cols);
}

using Strided = Eigen::Map<RowMajor, 0, Eigen::OuterStride<>>;
using ConstStrided = Eigen::Map<const RowMajor, 0, Eigen::OuterStride<>>;

}  // namespace

Tensor op_bilinear_conv3d(const Tensor& x, const Tensor& z, const Tensor& kernel, Index stride) {
  const FusedConvGeometry g = fused_conv_geometry("op_bilinear_conv3d", x, z, kernel, stride);
  const RowMajor xp = x_patches(g, x);
  // Row t of zw holds the kernel contracted with z patch t, as (a, b, i) x f.
  const RowMajor zw = z_patches(g, z) * regroup_kernel(g, kernel);
  Tensor out({g.ou, g.ov, g.ot, g.filters});
  for (Index t = 0; t < g.ot; ++t) {
    Strided y(out.data().data() + t * g.filters, g.sites(), g.filters,
              Eigen::OuterStride<>(g.ot * g.filters));
    y.noalias() = xp * step_block(zw, t, g.x_patch(), g.filters);
  }
  return out;
}

FusedConvGrads op_bilinear_conv3d_backward(const Tensor& x, const Tensor& z, const Tensor& kernel,
                                           const Tensor& upstream, Index stride) {
  const FusedConvGeometry g =
      fused_conv_geometry("op_bilinear_conv3d_backward", x, z, kernel, stride);
  check_upstream("op_bilinear_conv3d_backward", upstream, {g.ou, g.ov, g.ot, g.filters});
  const RowMajor xp = x_patches(g, x);
  const RowMajor zp = z_patches(g, z);
  const RowMajor w = regroup_kernel(g, kernel);
  const RowMajor zw = zp * w;

  RowMajor dzw(g.ot, g.x_patch() * g.filters);
  RowMajor dxp = RowMajor::Zero(g.sites(), g.x_patch());
  for (Index t = 0; t < g.ot; ++t) {
    ConstStrided dy(upstream.data().data() + t * g.filters, g.sites(), g.filters,
                    Eigen::OuterStride<>(g.ot * g.filters));
    Eigen::Map<RowMajor>(dzw.data() + t * g.x_patch() * g.filters, g.x_patch(), g.filters)
        .noalias() = xp.transpose() * dy;
    dxp.noalias() += dy * step_block(zw, t, g.x_patch(), g.filters).transpose();
  }
  const RowMajor dw = zp.transpose() * dzw;
  const RowMajor dzp = dzw * w.transpose();

  FusedConvGrads grads{Tensor(x.shape()), Tensor(z.shape()), Tensor(kernel.shape())};
  for (Index u = 0; u < g.ou; ++u)
    for (Index v = 0; v < g.ov; ++v)
      for (Index a = 0; a < g.ka; ++a)
        for (Index b = 0; b < g.kb; ++b) {
          double* to = grads.x.data().data() +
                       ((u * g.stride + a) * g.in.v + v * g.stride + b) * g.in.n;
          const double* from = &dxp(u * g.ov + v, (a * g.kb + b) * g.in.n);
          for (Index i = 0; i < g.in.n; ++i) to[i] += from[i];
        }
  for (Index t = 0; t < g.ot; ++t) {
    double* to = grads.z.data().data() + t * g.stride * g.in.m;
    for (Index k = 0; k < g.z_patch(); ++k) to[k] += dzp(t, k);
  }
  double* dst = grads.kernel.data().data();
  for (Index a = 0; a < g.ka; ++a)
    for (Index b = 0; b < g.kb; ++b)
      for (Index c = 0; c < g.kc; ++c)
        for (Index i = 0; i < g.in.n; ++i)
          for (Index j = 0; j < g.in.m; ++j)
            std::copy_n(&dw(c * g.in.m + j, ((a * g.kb + b) * g.in.n + i) * g.filters), g.filters,
                        dst + ((((a * g.kb + b) * g.kc + c) * g.in.n + i) * g.in.m + j) * g.filters);
  return grads;
}

Tensor orderless_bilinear_pool(const Tensor& x, const Tensor& z) {
  const FusionDims d = fusion_dims("orderless_bilinear_pool", x, z);
  // sum_{u,v,t} x_{uv} z_t^T = (sum_{uv} x_{uv}) (sum_t z_t)^T
  const Eigen::VectorXd xsum = x.matrix(d.grid(), d.n).colwise().sum().transpose();
  const Eigen::VectorXd zsum = z.matrix(d.t, d.m).colwise().sum().transpose();
  Tensor out({d.n * d.m});
  out.matrix(d.n, d.m).noalias() = xsum * zsum.transpose();
  return out;
}

FusionGrads orderless_bilinear_pool_backward(const Tensor& x, const Tensor& z,
                                             const Tensor& upstream) {
  const FusionDims d = fusion_dims("orderless_bilinear_pool_backward", x, z);
  check_upstream("orderless_bilinear_pool_backward", upstream, {d.n * d.m});
  const Eigen::VectorXd xsum = x.matrix(d.grid(), d.n).colwise().sum().transpose();
  const Eigen::VectorXd zsum = z.matrix(d.t, d.m).colwise().sum().transpose();
  const auto g = upstream.matrix(d.n, d.m);
  const Eigen::RowVectorXd gx = (g * zsum).transpose();
  const Eigen::RowVectorXd gz = xsum.transpose() * g;
  FusionGrads grads{Tensor(x.shape()), Tensor(z.shape())};
  grads.x.matrix(d.grid(), d.n).rowwise() = gx;
  grads.z.matrix(d.t, d.m).rowwise() = gz;
  return grads;
}

Tensor op_concatenate(const Tensor& x, const Tensor& z) {
  const FusionDims d = fusion_dims("op_concatenate", x, z);
  const Index depth = d.n + d.m;
  Tensor out({d.u, d.v, d.t, depth});
  auto rows = out.matrix(d.grid() * d.t, depth);
  const auto xs = x.matrix(d.grid(), d.n);
  const auto zs = z.matrix(d.t, d.m);
  for (Index g = 0; g < d.grid(); ++g) {
    rows.block(g * d.t, 0, d.t, d.n).rowwise() = xs.row(g);
    rows.block(g * d.t, d.n, d.t, d.m) = zs;
  }
  return out;
}

FusionGrads op_concatenate_backward(const Tensor& x, const Tensor& z, const Tensor& upstream) {
  const FusionDims d = fusion_dims("op_concatenate_backward", x, z);
  const Index depth = d.n + d.m;
  if (upstream.size() != d.grid() * d.t * depth)
    throw ShapeError("op_concatenate_backward: upstream gradient " +
                     shape_string(upstream.shape()) + " has the wrong size");
  FusionGrads grads{Tensor(x.shape()), Tensor(z.shape())};
  const auto rows = upstream.matrix(d.grid() * d.t, depth);
  auto dx = grads.x.matrix(d.grid(), d.n);
  auto dz = grads.z.matrix(d.t, d.m);
  for (Index g = 0; g < d.grid(); ++g) {
    dx.row(g) = rows.block(g * d.t, 0, d.t, d.n).colwise().sum();
    dz += rows.block(g * d.t, d.n, d.t, d.m);
  }
  return grads;
}

Tensor flat_concatenate(const Tensor& x, const Tensor& z) {
  Tensor stacked = op_concatenate(x, z);
  return stacked.reshaped({stacked.size()});
}

FactorizationCheck factorization_identity_check(const Tensor& x_raw, const Tensor& z_raw,
                                                const Tensor& wx, const Tensor& wz) {
  if (x_raw.rank() != 1 || z_raw.rank() != 1)
    throw ShapeError("factorization_identity_check: raw features must be vectors");
  if (wx.rank() != 2 || wx.dim(1) != x_raw.size())
    throw ShapeError("factorization_identity_check: wx axis 1 must equal len(x')");
  if (wz.rank() != 2 || wz.dim(1) != z_raw.size())
    throw ShapeError("factorization_identity_check: wz axis 1 must equal len(z')");

  const Index n = wx.dim(0), n_raw = wx.dim(1);
  const Index m = wz.dim(0), m_raw = wz.dim(1);
  const auto Wx = wx.matrix(n, n_raw);
  const auto Wz = wz.matrix(m, m_raw);
  const Eigen::VectorXd pre_x = Wx * x_raw.data();
  const Eigen::VectorXd pre_z = Wz * z_raw.data();

  FactorizationCheck check;
  for (Index i = 0; i < n; ++i)
    if (!(pre_x[i] > 0.0)) {
      check.violation = "visual pre-activation " + std::to_string(i) + " is not strictly positive";
      return check;
    }
  for (Index j = 0; j < m; ++j)
    if (!(pre_z[j] > 0.0)) {
      check.violation = "seismic pre-activation " + std::to_string(j) + " is not strictly positive";
      return check;
    }
  check.precondition_met = true;

  const Tensor x({n}, sparse_reduce(x_raw.reshaped({1, n_raw}), wx).data());
  const Tensor z({m}, sparse_reduce(z_raw.reshaped({1, m_raw}), wz).data());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) {
      // Second-order form with combined weights wx_ik * wz_jl.
      double bilinear = 0.0;
      for (Index k = 0; k < n_raw; ++k)
        for (Index l = 0; l < m_raw; ++l)
          bilinear += (Wx(i, k) * Wz(j, l)) * x_raw[k] * z_raw[l];
      check.max_deviation = std::max(check.max_deviation, std::abs(x[i] * z[j] - bilinear));
    }
  return check;
}

Var sparse_reduce(Var features, Var weights) {
  const Tensor pre = pre_activation(features.value(), weights.value());
  features.tape().note_relu_input(pre);
  return features.tape().record(
      "sparse_reduce", relu(pre), {features, weights}, [](const BackwardContext& ctx) {
        ReduceGrads g = sparse_reduce_backward(*ctx.inputs[0], *ctx.inputs[1], ctx.upstream);
        if (ctx.grads[0]) ctx.grads[0]->data() += g.features.data();
        if (ctx.grads[1]) ctx.grads[1]->data() += g.weights.data();
      });
}

Var l1_penalty(Var weights, double lambda) {
  Tensor value({1}, {l1_penalty(weights.value(), lambda)});
  return weights.tape().record("l1_penalty", std::move(value), {weights},
                               [lambda](const BackwardContext& ctx) {
                                 if (ctx.grads[0])
                                   ctx.grads[0]->data() +=
                                       ctx.upstream[0] *
                                       l1_subgradient(*ctx.inputs[0], lambda).data();
                               });
}

Var op_bilinear_fuse(Var x, Var z) {
  return x.tape().record("op_bilinear_fuse", op_bilinear_fuse(x.value(), z.value()), {x, z},
                         [](const BackwardContext& ctx) {
                           FusionGrads g =
                               op_bilinear_backward(*ctx.inputs[0], *ctx.inputs[1], ctx.upstream);
                           if (ctx.grads[0]) ctx.grads[0]->data() += g.x.data();
                           if (ctx.grads[1]) ctx.grads[1]->data() += g.z.data();
                         });
}

Var op_bilinear_conv3d(Var x, Var z, Var kernel, Index stride) {
  return x.tape().record(
      "op_bilinear_conv3d", op_bilinear_conv3d(x.value(), z.value(), kernel.value(), stride),
      {x, z, kernel}, [stride](const BackwardContext& ctx) {
        FusedConvGrads g = op_bilinear_conv3d_backward(*ctx.inputs[0], *ctx.inputs[1],
                                                       *ctx.inputs[2], ctx.upstream, stride);
        if (ctx.grads[0]) ctx.grads[0]->data() += g.x.data();
        if (ctx.grads[1]) ctx.grads[1]->data() += g.z.data();
        if (ctx.grads[2]) ctx.grads[2]->data() += g.kernel.data();
      });
}

Var orderless_bilinear_pool(Var x, Var z) {
  return x.tape().record("orderless_bilinear_pool", orderless_bilinear_pool(x.value(), z.value()),
                         {x, z}, [](const BackwardContext& ctx) {
                           FusionGrads g = orderless_bilinear_pool_backward(
                               *ctx.inputs[0], *ctx.inputs[1], ctx.upstream);
                           if (ctx.grads[0]) ctx.grads[0]->data() += g.x.data();
                           if (ctx.grads[1]) ctx.grads[1]->data() += g.z.data();
                         });
}

namespace {

Var concat_node(const char* name, Var x, Var z, Tensor value) {
  return x.tape().record(name, std::move(value), {x, z}, [](const BackwardContext& ctx) {
    FusionGrads g = op_concatenate_backward(*ctx.inputs[0], *ctx.inputs[1], ctx.upstream);
    if (ctx.grads[0]) ctx.grads[0]->data() += g.x.data();
    if (ctx.grads[1]) ctx.grads[1]->data() += g.z.data();
  });
}

}  // namespace

Var op_concatenate(Var x, Var z) {
  return concat_node("op_concatenate", x, z, op_concatenate(x.value(), z.value()));
}

Var flat_concatenate(Var x, Var z) {
  return concat_node("flat_concatenate", x, z, flat_concatenate(x.value(), z.value()));
}

}  // namespace opbil
