#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stepscale/nn.hpp"

namespace stepscale {

/// Architecture description.
///
/// simple-mlp: `widths` lists every layer width, input first and class count
/// last; hidden layers use ReLU.
///
/// cnn-lite: `widths` holds the two conv channel counts [c1, c2] and
/// `input_shape` is (channels, height, width). The network is
/// conv3x3(c1) -> ReLU -> 2x2 mean-pool -> conv3x3(c2) -> ReLU ->
/// global mean-pool -> dense classifier.
struct ModelSpec {
  std::string architecture = "simple-mlp";
  std::vector<std::size_t> widths;
  Shape input_shape;
  std::size_t num_classes = 0;
  std::string init = "he-uniform";  // or "zeros"
  std::uint64_t seed = 0;

  void validate() const;
  /// Per-sample input shape, filling the MLP default from widths.front().
  Shape resolved_input_shape() const;
  std::size_t resolved_num_classes() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

/// Deterministic in `spec.seed`: He-uniform weights U(-sqrt(6/fan_in),
/// sqrt(6/fan_in)), zero biases, all-ones mask.
Model build_model(const ModelSpec& spec);

}  // namespace stepscale
