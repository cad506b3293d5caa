#pragma once

#include <vector>

#include "spnet/config.hpp"
#include "spnet/model.hpp"
#include "spnet/tensor.hpp"

namespace spnet {

/// Boundary emphasis weights 1 + gain * |boxmean(gt) - gt|. The box mean
/// averages only the in-image pixels of the window.
std::vector<double> boundary_weights(const Tensor& gt, const LossConfig& cfg);

/// Pixel position-aware loss on logits: weighted BCE plus weighted IoU,
/// averaged over the batch.
Tensor ppa_loss(const Tensor& logits, const Tensor& gt, const LossConfig& cfg);

/// Shared-decoder loss plus both modality-specific losses when present.
Tensor total_loss(const ForwardOutput& out, const Tensor& gt,
                  const LossConfig& cfg);

}  // namespace spnet
