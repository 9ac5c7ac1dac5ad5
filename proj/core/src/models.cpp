#include "stepscale/models.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "stepscale/errors.hpp"

namespace stepscale {

Shape ModelSpec::resolved_input_shape() const {
  if (!input_shape.empty()) return input_shape;
  if (architecture == "simple-mlp" && !widths.empty()) return {widths.front()};
  return {};
}

std::size_t ModelSpec::resolved_num_classes() const {
  if (num_classes != 0) return num_classes;
  if (architecture == "simple-mlp" && !widths.empty()) return widths.back();
  return 0;
}

void ModelSpec::validate() const {
  for (auto w : widths) {
    if (w < 1) throw ConfigError("model widths must be >= 1");
  }
  if (resolved_num_classes() < 2) throw ConfigError("model class count must be >= 2");
  if (init != "he-uniform" && init != "zeros") throw ConfigError("unknown init scheme '" + init + "'");
  const Shape in = resolved_input_shape();
  if (architecture == "simple-mlp") {
    if (widths.size() < 2) throw ConfigError("simple-mlp needs at least input and output widths");
    if (shape_size(in) != widths.front()) {
      throw ConfigError("simple-mlp first width " + std::to_string(widths.front()) + " != input size " +
                        std::to_string(shape_size(in)));
    }
    if (widths.back() != resolved_num_classes()) {
      throw ConfigError("simple-mlp last width must equal the class count");
    }
  } else if (architecture == "cnn-lite") {
    if (widths.size() != 2) throw ConfigError("cnn-lite takes exactly two channel counts");
    if (in.size() != 3) throw ConfigError("cnn-lite input shape must be (channels, height, width)");
    if (in[1] < 2 || in[2] < 2) throw ConfigError("cnn-lite input must be at least 2x2");
  } else {
    throw ConfigError("unknown architecture '" + architecture + "'");
  }
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  j = nlohmann::json{{"architecture", spec.architecture},
                     {"widths", spec.widths},
                     {"input_shape", spec.input_shape},
                     {"num_classes", spec.num_classes},
                     {"init", spec.init},
                     {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  ModelSpec out;
  out.architecture = j.value("architecture", out.architecture);
  out.widths = j.value("widths", out.widths);
  out.input_shape = j.value("input_shape", out.input_shape);
  out.num_classes = j.value("num_classes", out.num_classes);
  out.init = j.value("init", out.init);
  out.seed = j.value("seed", out.seed);
  spec = std::move(out);
}

namespace {

std::vector<Layer> mlp_layers(const ModelSpec& spec) {
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < spec.widths.size(); ++i) {
    if (i > 0) layers.emplace_back(ReluLayer{});
    layers.emplace_back(DenseLayer{spec.widths[i], spec.widths[i + 1], 0});
  }
  return layers;
}

std::vector<Layer> cnn_lite_layers(const ModelSpec& spec, const Shape& in) {
  const std::size_t c = in[0], h = in[1], w = in[2];
  const std::size_t c1 = spec.widths[0], c2 = spec.widths[1];
  return {
      Conv3x3Layer{c, c1, h, w, 0},
      ReluLayer{},
      MeanPool2x2Layer{c1, h, w},
      Conv3x3Layer{c1, c2, h / 2, w / 2, 0},
      ReluLayer{},
      GlobalMeanPoolLayer{c2, h / 2, w / 2},
      DenseLayer{c2, spec.resolved_num_classes(), 0},
  };
}

}  // namespace

Model build_model(const ModelSpec& spec) {
  spec.validate();
  const Shape in = spec.resolved_input_shape();
  Model model(spec.architecture == "cnn-lite" ? cnn_lite_layers(spec, in) : mlp_layers(spec), in,
              spec.resolved_num_classes());
  if (spec.init == "zeros") return model;

  std::mt19937_64 rng(spec.seed);
  auto params = model.mutable_parameters();
  for (const auto& block : model.param_blocks()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(block.fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < block.weight_count; ++i) params[block.offset + i] = dist(rng);
  }
  return model;
}

}  // namespace stepscale
