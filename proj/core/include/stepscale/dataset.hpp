#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "stepscale/tensor.hpp"

namespace stepscale {

/// Labelled examples. inputs has shape (n, feature...) and labels[i] < num_classes.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Shape feature_shape() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  void validate() const;
};

struct SplitDataset {
  Dataset train;
  Dataset validation;
};

/// Holds out a seeded `fraction` of the examples as the validation split.
SplitDataset split_validation(const Dataset& data, double fraction, std::uint64_t seed);

// IDX (MNIST-style) files: big-endian, images magic 0x00000803 and labels
// magic 0x00000801. Pixel bytes are scaled to [0, 1].
inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxColourImagesMagic = 0x00000804;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);
/// Returns a tensor of shape (n, 1, rows, cols), or (n, channels, rows, cols)
/// for the four-dimensional variant used for colour images.
Tensor parse_idx_images(std::span<const std::uint8_t> bytes);

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Serializers for the same layout; used to produce fixtures.
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);
std::vector<std::uint8_t> encode_idx_images(std::span<const std::uint8_t> pixels, std::uint32_t count,
                                            std::uint32_t rows, std::uint32_t cols);

/// Isotropic Gaussian class blobs. Each class owns `clusters_per_class`
/// centres drawn from N(0, I/dims) and scaled by `separation`; samples are
/// assigned round-robin to their class's centres and get N(0, noise^2 I) added.
/// Every class receives exactly `per_class` samples.
struct SynthSpec {
  std::size_t classes = 4;
  std::size_t dims = 16;
  std::size_t per_class = 500;
  std::size_t clusters_per_class = 1;
  double separation = 3.0;
  double noise = 1.0;
  // Coordinate d is multiplied by scale_ratio^(d/(dims-1) - 1/2), giving
  // geometrically spread feature scales (an ill-conditioned input).
  double scale_ratio = 1.0;
  // Added to every coordinate before scaling, so inputs have a nonzero mean.
  double offset = 0.0;
  // Applies a seeded random rotation after scaling, so the ill-conditioned
  // axes are no longer aligned with the input coordinates.
  bool rotate = false;
};

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

}  // namespace stepscale
