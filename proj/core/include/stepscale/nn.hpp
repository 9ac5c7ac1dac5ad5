#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "stepscale/dataset.hpp"
#include "stepscale/mask.hpp"
#include "stepscale/tensor.hpp"

namespace stepscale {

// Layer descriptors. Parameterised layers record where their weights start in
// the model's flat parameter vector; weights come first, then biases.

/// y = W x + b with W stored (out, in) row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;
};

/// 3x3 convolution, stride 1, zero padding 1. Weights stored (out, in, 3, 3).
struct Conv3x3Layer {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t offset = 0;
};

struct ReluLayer {};

/// Non-overlapping 2x2 average pooling; odd trailing rows/columns are dropped.
struct MeanPool2x2Layer {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// (C, H, W) -> (C) by spatial averaging.
struct GlobalMeanPoolLayer {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

using Layer = std::variant<DenseLayer, Conv3x3Layer, ReluLayer, MeanPool2x2Layer, GlobalMeanPoolLayer>;

/// Location of one layer's parameters inside the flat vector.
struct ParamBlock {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
  std::size_t fan_in = 0;

  std::size_t size() const noexcept { return weight_count + bias_count; }
};

/// A layered network with a flat parameter vector and a sparsity mask.
///
/// Parameters at masked positions are ignored by forward and zeroed whenever
/// the mask is applied or enforced. Every mutable access to the parameters
/// bumps the model's version so that caches from earlier forward passes are
/// recognised as stale.
class Model {
 public:
  Model() = default;
  Model(std::vector<Layer> layers, Shape input_shape, std::size_t num_classes);

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<ParamBlock>& param_blocks() const noexcept { return blocks_; }

  std::size_t parameter_count() const noexcept { return params_.size(); }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> mutable_parameters();
  void set_parameters(std::span<const double> values);

  const Mask& mask() const noexcept { return mask_; }
  bool pruned() const noexcept { return pruned_; }

  /// Stores the mask, zeroes masked parameters and flags the model as pruned.
  void install_mask(Mask mask);
  /// Re-zeroes masked parameters.
  void enforce_mask();
  bool mask_respected() const noexcept;

  /// Parameters with masked entries forced to zero.
  std::vector<double> effective_parameters() const;

  std::uint64_t version() const noexcept { return version_; }

 private:
  void touch();

  std::vector<Layer> layers_;
  Shape input_shape_;
  std::size_t num_classes_ = 0;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  Mask mask_;
  bool pruned_ = false;
  std::uint64_t version_ = 0;
};

/// Mini-batch gradient in the model's flat layout.
struct Gradient {
  std::vector<double> flat;

  std::span<const double> weights(const ParamBlock& b) const {
    return std::span<const double>(flat).subspan(b.offset, b.weight_count);
  }
  std::span<const double> bias(const ParamBlock& b) const {
    return std::span<const double>(flat).subspan(b.offset + b.weight_count, b.bias_count);
  }
};

/// Activations recorded by forward for a single backward call.
class BatchCache {
 public:
  BatchCache() = default;
  BatchCache(const BatchCache&) = delete;
  BatchCache& operator=(const BatchCache&) = delete;
  BatchCache(BatchCache&& other) noexcept;
  BatchCache& operator=(BatchCache&& other) noexcept;

  bool live() const noexcept { return live_; }
  std::size_t batch_size() const noexcept { return logits_.rows(); }

 private:
  friend struct CacheAccess;

  std::vector<Tensor> inputs_;  // input seen by each layer
  Tensor logits_;
  std::uint64_t model_version_ = 0;
  bool live_ = false;
};

struct ForwardResult {
  Tensor logits;
  BatchCache cache;
};

struct LossAndError {
  double mean_loss = 0.0;
  double error_rate = 0.0;
};

/// Throws ConfigError on shape mismatch, NumericOverflow on non-finite logits.
ForwardResult forward(const Model& model, const Tensor& inputs);

/// Logits only, without recording a cache.
Tensor predict(const Model& model, const Tensor& inputs);

/// Softmax cross-entropy (log-sum-exp stabilised) and argmax error rate;
/// argmax ties resolve to the lowest class index.
LossAndError loss_and_error(const Tensor& logits, std::span<const int> targets);

/// Mean mini-batch gradient of the cross-entropy loss. Consumes the cache;
/// a cache from another forward pass or a modified model is a UsageError.
Gradient backward(const Model& model, BatchCache&& cache, std::span<const int> targets);

/// Exact mean gradient over every example in `data`, evaluated in chunks.
Gradient full_gradient(const Model& model, const Dataset& data);

struct LossAndGradient {
  double mean_loss = 0.0;
  Gradient gradient;
};
LossAndGradient full_loss_and_gradient(const Model& model, const Dataset& data);

/// Mean loss and error rate over a whole dataset.
LossAndError evaluate(const Model& model, const Dataset& data);

}  // namespace stepscale
