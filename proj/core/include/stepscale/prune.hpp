#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stepscale/mask.hpp"
#include "stepscale/nn.hpp"

namespace stepscale {

/// Normalised connection-sensitivity scores, one per parameter.
struct SaliencyVector {
  std::vector<double> values;
};

/// Number of parameters pruned at sparsity s: floor(s * m).
std::size_t pruned_count(std::size_t m, double sparsity);

/// saliency_j = |g_j w_j| / sum_i |g_i w_i| with g the mini-batch gradient of
/// the untrained model. All zeros when the normaliser vanishes.
/// Throws UsageError on a model that already carries a pruning mask.
SaliencyVector connection_sensitivity(const Model& model, const Tensor& inputs, std::span<const int> targets);

/// Keeps the m - floor(s m) most salient entries; ties go to the lower index.
Mask topk_mask(const SaliencyVector& saliency, double sparsity);

/// Zeroes the masked parameters and stores the mask on the model.
void apply_mask(Model& model, const Mask& mask);

}  // namespace stepscale
