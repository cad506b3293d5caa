#pragma once

#include <span>
#include <vector>

#include "spnet/tensor.hpp"

namespace spnet {

/// 2-D convolution over NCHW input with an [out_c, in_c, k, k] weight
/// (stored in the tensor's n, c, h, w extents). `bias` may be undefined.
/// Output extent per axis is floor((H + 2*padding - dilation*(k-1) - 1)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0, int dilation = 1);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Batch normalization with statistics of the current batch. `gamma` and
/// `beta` have shape (1, C, 1, 1). Throws PreconditionError when N*H*W < 2.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double epsilon = kBatchNormEpsilon);

struct BconvParams {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
};

/// 3x3 convolution, batch norm, ReLU.
Tensor bconv(const Tensor& x, const BconvParams& p, int stride = 1);

enum class EltwiseOp { kAdd, kMul, kMax };

/// Pointwise binary op on equal shapes. For kMax a tie sends the gradient to `a`.
Tensor eltwise(EltwiseOp op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) {
  return eltwise(EltwiseOp::kAdd, a, b);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return eltwise(EltwiseOp::kMul, a, b);
}
inline Tensor maximum(const Tensor& a, const Tensor& b) {
  return eltwise(EltwiseOp::kMax, a, b);
}

Tensor scale(const Tensor& x, double factor);

Tensor concat_channels(std::span<const Tensor> parts);
inline Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}
Tensor slice_channels(const Tensor& x, int begin, int count);

/// Selects samples [begin, begin + count) along the batch axis.
Tensor slice_batch(const Tensor& x, int begin, int count);
Tensor concat_batch(std::span<const Tensor> parts);

/// Bilinear resampling with half-pixel centers (align_corners = false).
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor upsample_bilinear_2x(const Tensor& x);
Tensor downsample_avg_2x(const Tensor& x);
Tensor maxpool_2x(const Tensor& x);

/// Sum of all entries as a (1,1,1,1) tensor.
Tensor sum(const Tensor& x);
/// sum(x * weights) with a constant weight tensor of the same shape.
Tensor dot_const(const Tensor& x, const Tensor& weights);

namespace testing {

// Fault injection used to prove the gradient checker catches broken rules.
enum class BackwardFault { kNone, kSigmoid, kConv2dWeight };
void set_backward_fault(BackwardFault fault);
BackwardFault backward_fault();

}  // namespace testing

}  // namespace spnet
