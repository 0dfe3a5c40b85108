#ifndef OPBIL_FUSION_HPP
#define OPBIL_FUSION_HPP

#include "opbil/tape.hpp"

#include <string>

namespace opbil {

// Shapes used throughout this header:
//   visual feature grid   x : U x V x N   (N' before reduction)
//   seismic feature seq.  z : T x M       (M' before reduction)
//   fused tensor            : U x V x T x (N*M)
// Entry (u, v, t, i*M + j) of the fused tensor is x[u,v,i] * z[t,j]; the
// pairwise matrix x z^T is vectorised row by row (x index outer).

/// Per-index 1x1 projection followed by relu: out_i = max(0, sum_k w_ik in_k).
/// Works on any tensor whose last axis is the feature depth. `weights` is
/// out x in with out < in; there is no bias.
Tensor sparse_reduce(const Tensor& features, const Tensor& weights);

struct ReduceGrads {
  Tensor features;
  Tensor weights;
};
ReduceGrads sparse_reduce_backward(const Tensor& features, const Tensor& weights,
                                   const Tensor& upstream);

/// lambda * sum |w|.
double l1_penalty(const Tensor& weights, double lambda);
/// lambda * sign(w), with sign(0) = 0.
Tensor l1_subgradient(const Tensor& weights, double lambda);

Tensor op_bilinear_fuse(const Tensor& x, const Tensor& z);

struct FusionGrads {
  Tensor x;
  Tensor z;
};

/// Analytic backward of op_bilinear_fuse. Each fused entry x_i z_j contributes
/// upstream * z_j to x_i and upstream * x_i to z_j; all other partials vanish.
/// Gradients are summed over the indices where a feature vector is reused
/// (x_{u,v} over t, z_t over u and v).
FusionGrads op_bilinear_backward(const Tensor& x, const Tensor& z, const Tensor& upstream);

/// conv3d(op_bilinear_fuse(x, z), kernel, stride, valid) without building the
/// fused tensor. The kernel is contracted with the z patches first, leaving one
/// small 2D correlation over x per output time step.
Tensor op_bilinear_conv3d(const Tensor& x, const Tensor& z, const Tensor& kernel, Index stride = 1);

struct FusedConvGrads {
  Tensor x;
  Tensor z;
  Tensor kernel;
};

FusedConvGrads op_bilinear_conv3d_backward(const Tensor& x, const Tensor& z, const Tensor& kernel,
                                           const Tensor& upstream, Index stride = 1);

/// sum over (u, v, t) of x_{u,v} z_t^T, vectorised to length N*M.
Tensor orderless_bilinear_pool(const Tensor& x, const Tensor& z);
FusionGrads orderless_bilinear_pool_backward(const Tensor& x, const Tensor& z,
                                             const Tensor& upstream);

/// [x_{u,v}; z_t] at every (u, v, t): U x V x T x (N+M).
Tensor op_concatenate(const Tensor& x, const Tensor& z);
FusionGrads op_concatenate_backward(const Tensor& x, const Tensor& z, const Tensor& upstream);

/// All op_concatenate descriptors stacked in (u, v, t) lexicographic order into
/// one vector of length U*V*T*(N+M).
Tensor flat_concatenate(const Tensor& x, const Tensor& z);

struct FactorizationCheck {
  bool precondition_met = false;
  /// Largest |x_i z_j - sum_kl (wx_ik wz_jl) x'_k z'_l| over all (i, j).
  double max_deviation = 0.0;
  /// Set when the strictly-positive pre-activation precondition fails.
  std::string violation;
};

/// Checks that reduced-then-fused features equal a bilinear form of the
/// unreduced features with weights wx_ik * wz_jl. Only meaningful when every
/// pre-activation is strictly positive; otherwise reports the violation.
FactorizationCheck factorization_identity_check(const Tensor& x_raw, const Tensor& z_raw,
                                                const Tensor& wx, const Tensor& wz);

// Tape primitives.
Var sparse_reduce(Var features, Var weights);
Var l1_penalty(Var weights, double lambda);
Var op_bilinear_fuse(Var x, Var z);
Var op_bilinear_conv3d(Var x, Var z, Var kernel, Index stride = 1);
Var orderless_bilinear_pool(Var x, Var z);
Var op_concatenate(Var x, Var z);
Var flat_concatenate(Var x, Var z);

}  // namespace opbil

#endif  // OPBIL_FUSION_HPP
