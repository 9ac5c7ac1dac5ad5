#include "stepscale/nn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "stepscale/errors.hpp"

namespace stepscale {

namespace {

std::atomic<std::uint64_t> g_version_counter{0};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t chw(std::size_t c, std::size_t h, std::size_t w) { return c * h * w; }

void expect_width(const Tensor& x, std::size_t want, const char* layer) {
  if (x.row_size() != want) {
    throw ConfigError(std::string(layer) + " expects " + std::to_string(want) + " features per sample, got " +
                      std::to_string(x.row_size()));
  }
}

// ---------------------------------------------------------------- forward

Tensor dense_forward(const DenseLayer& l, const double* p, const Tensor& x) {
  expect_width(x, l.in, "dense layer");
  const std::size_t n = x.rows();
  const double* W = p + l.offset;
  const double* b = W + l.in * l.out;
  Tensor y({n, l.out});
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * l.in;
    double* yr = y.data().data() + r * l.out;
    std::size_t o = 0;
    for (; o + 4 <= l.out; o += 4) {
      const double* w0 = W + o * l.in;
      const double* w1 = w0 + l.in;
      const double* w2 = w1 + l.in;
      const double* w3 = w2 + l.in;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t i = 0; i < l.in; ++i) {
        const double xi = xr[i];
        s0 += w0[i] * xi;
        s1 += w1[i] * xi;
        s2 += w2[i] * xi;
        s3 += w3[i] * xi;
      }
      yr[o] = s0 + b[o];
      yr[o + 1] = s1 + b[o + 1];
      yr[o + 2] = s2 + b[o + 2];
      yr[o + 3] = s3 + b[o + 3];
    }
    for (; o < l.out; ++o) {
      const double* w = W + o * l.in;
      double s = 0.0;
      for (std::size_t i = 0; i < l.in; ++i) s += w[i] * xr[i];
      yr[o] = s + b[o];
    }
  }
  return y;
}

// Output rows h in [lo, hi) read input row h + k - 1 for kernel offset k.
inline void valid_range(std::size_t k, std::size_t extent, std::size_t& lo, std::size_t& hi) {
  lo = (k == 0) ? 1 : 0;
  hi = (k == 2) ? extent - 1 : extent;
  if (extent == 0) hi = 0;
}

Tensor conv_forward(const Conv3x3Layer& l, const double* p, const Tensor& x) {
  const std::size_t H = l.height, Wd = l.width;
  expect_width(x, chw(l.in_channels, H, Wd), "conv3x3 layer");
  const std::size_t n = x.rows();
  const double* W = p + l.offset;
  const double* b = W + l.out_channels * l.in_channels * 9;
  Tensor y({n, l.out_channels, H, Wd});
  const std::size_t plane = H * Wd;
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * l.in_channels * plane;
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      double* yo = y.data().data() + (r * l.out_channels + o) * plane;
      std::fill(yo, yo + plane, b[o]);
      for (std::size_t c = 0; c < l.in_channels; ++c) {
        const double* xc = xr + c * plane;
        const double* k = W + (o * l.in_channels + c) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          std::size_t h0, h1;
          valid_range(ky, H, h0, h1);
          for (std::size_t kx = 0; kx < 3; ++kx) {
            std::size_t w0, w1;
            valid_range(kx, Wd, w0, w1);
            const double kv = k[ky * 3 + kx];
            for (std::size_t h = h0; h < h1; ++h) {
              const double* xrow = xc + (h + ky - 1) * Wd;
              double* yrow = yo + h * Wd;
              for (std::size_t w = w0; w < w1; ++w) yrow[w] += kv * xrow[w + kx - 1];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor meanpool_forward(const MeanPool2x2Layer& l, const Tensor& x) {
  expect_width(x, chw(l.channels, l.height, l.width), "mean-pool layer");
  const std::size_t n = x.rows(), oh = l.height / 2, ow = l.width / 2;
  Tensor y({n, l.channels, oh, ow});
  for (std::size_t rc = 0; rc < n * l.channels; ++rc) {
    const double* xi = x.data().data() + rc * l.height * l.width;
    double* yo = y.data().data() + rc * oh * ow;
    for (std::size_t h = 0; h < oh; ++h) {
      for (std::size_t w = 0; w < ow; ++w) {
        const double* a = xi + (2 * h) * l.width + 2 * w;
        yo[h * ow + w] = 0.25 * (a[0] + a[1] + a[l.width] + a[l.width + 1]);
      }
    }
  }
  return y;
}

Tensor globalpool_forward(const GlobalMeanPoolLayer& l, const Tensor& x) {
  expect_width(x, chw(l.channels, l.height, l.width), "global mean-pool layer");
  const std::size_t n = x.rows(), plane = l.height * l.width;
  Tensor y({n, l.channels});
  for (std::size_t rc = 0; rc < n * l.channels; ++rc) {
    const double* xi = x.data().data() + rc * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += xi[i];
    y[rc] = s / static_cast<double>(plane);
  }
  return y;
}

Tensor layer_forward(const Layer& layer, const double* p, const Tensor& x) {
  return std::visit(Overloaded{
                        [&](const DenseLayer& l) { return dense_forward(l, p, x); },
                        [&](const Conv3x3Layer& l) { return conv_forward(l, p, x); },
                        [&](const ReluLayer&) { return relu_forward(x); },
                        [&](const MeanPool2x2Layer& l) { return meanpool_forward(l, x); },
                        [&](const GlobalMeanPoolLayer& l) { return globalpool_forward(l, x); },
                    },
                    layer);
}

// ---------------------------------------------------------------- backward

// Each backward accumulates parameter gradients into g (flat layout) and
// returns the gradient with respect to the layer input when `need_dx`.

Tensor dense_backward(const DenseLayer& l, const double* p, const Tensor& x, const Tensor& dy, double* g,
                      bool need_dx) {
  const std::size_t n = x.rows();
  const double* W = p + l.offset;
  double* gW = g + l.offset;
  double* gb = gW + l.in * l.out;
  Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
  const double* X = x.data().data();
  const double* DY = dy.data().data();
  for (std::size_t o = 0; o < l.out; ++o) {
    double* gw = gW + o * l.in;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = DY[r * l.out + o];
      if (d == 0.0) continue;
      gb[o] += d;
      const double* xr = X + r * l.in;
      for (std::size_t i = 0; i < l.in; ++i) gw[i] += d * xr[i];
    }
  }
  if (!need_dx) return dx;
  for (std::size_t r = 0; r < n; ++r) {
    const double* dyr = DY + r * l.out;
    double* dxr = dx.data().data() + r * l.in;
    for (std::size_t o = 0; o < l.out; ++o) {
      const double d = dyr[o];
      if (d == 0.0) continue;
      const double* w = W + o * l.in;
      for (std::size_t i = 0; i < l.in; ++i) dxr[i] += d * w[i];
    }
  }
  return dx;
}

Tensor conv_backward(const Conv3x3Layer& l, const double* p, const Tensor& x, const Tensor& dy, double* g,
                     bool need_dx) {
  const std::size_t n = x.rows(), H = l.height, Wd = l.width, plane = H * Wd;
  const double* W = p + l.offset;
  double* gW = g + l.offset;
  double* gb = gW + l.out_channels * l.in_channels * 9;
  Tensor dx = need_dx ? Tensor(x.shape()) : Tensor();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.data().data() + r * l.in_channels * plane;
    double* dxr = need_dx ? dx.data().data() + r * l.in_channels * plane : nullptr;
    for (std::size_t o = 0; o < l.out_channels; ++o) {
      const double* dyo = dy.data().data() + (r * l.out_channels + o) * plane;
      double sb = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sb += dyo[i];
      gb[o] += sb;
      for (std::size_t c = 0; c < l.in_channels; ++c) {
        const double* xc = xr + c * plane;
        double* dxc = dxr ? dxr + c * plane : nullptr;
        const double* k = W + (o * l.in_channels + c) * 9;
        double* gk = gW + (o * l.in_channels + c) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          std::size_t h0, h1;
          valid_range(ky, H, h0, h1);
          for (std::size_t kx = 0; kx < 3; ++kx) {
            std::size_t w0, w1;
            valid_range(kx, Wd, w0, w1);
            const double kv = k[ky * 3 + kx];
            double acc = 0.0;
            for (std::size_t h = h0; h < h1; ++h) {
              const std::size_t in_row = (h + ky - 1) * Wd;
              const double* xrow = xc + in_row;
              const double* dyrow = dyo + h * Wd;
              for (std::size_t w = w0; w < w1; ++w) acc += dyrow[w] * xrow[w + kx - 1];
              if (dxc) {
                double* dxrow = dxc + in_row;
                for (std::size_t w = w0; w < w1; ++w) dxrow[w + kx - 1] += kv * dyrow[w];
              }
            }
            gk[ky * 3 + kx] += acc;
          }
        }
      }
    }
  }
  return dx;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(x[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

Tensor meanpool_backward(const MeanPool2x2Layer& l, const Tensor& x, const Tensor& dy) {
  const std::size_t n = x.rows(), oh = l.height / 2, ow = l.width / 2;
  Tensor dx(x.shape());
  for (std::size_t rc = 0; rc < n * l.channels; ++rc) {
    double* di = dx.data().data() + rc * l.height * l.width;
    const double* dyo = dy.data().data() + rc * oh * ow;
    for (std::size_t h = 0; h < oh; ++h) {
      for (std::size_t w = 0; w < ow; ++w) {
        const double d = 0.25 * dyo[h * ow + w];
        double* a = di + (2 * h) * l.width + 2 * w;
        a[0] += d;
        a[1] += d;
        a[l.width] += d;
        a[l.width + 1] += d;
      }
    }
  }
  return dx;
}

Tensor globalpool_backward(const GlobalMeanPoolLayer& l, const Tensor& x, const Tensor& dy) {
  const std::size_t n = x.rows(), plane = l.height * l.width;
  Tensor dx(x.shape());
  const double scale = 1.0 / static_cast<double>(plane);
  for (std::size_t rc = 0; rc < n * l.channels; ++rc) {
    double* di = dx.data().data() + rc * plane;
    std::fill(di, di + plane, dy[rc] * scale);
  }
  return dx;
}

// Holds params ⊙ mask for pruned models, otherwise aliases the parameters.
class EffectiveParams {
 public:
  explicit EffectiveParams(const Model& m) {
    if (m.pruned()) {
      owned_ = m.effective_parameters();
      ptr_ = owned_.data();
    } else {
      ptr_ = m.parameters().data();
    }
  }
  const double* get() const noexcept { return ptr_; }

 private:
  std::vector<double> owned_;
  const double* ptr_ = nullptr;
};

void check_inputs(const Model& model, const Tensor& inputs) {
  if (inputs.rank() < 2 || inputs.rows() == 0) {
    throw ConfigError("inputs must have a batch dimension >= 1, got shape " + shape_to_string(inputs.shape()));
  }
  const Shape features(inputs.shape().begin() + 1, inputs.shape().end());
  const bool same = features == model.input_shape();
  const bool flat_ok = !model.layers().empty() && std::holds_alternative<DenseLayer>(model.layers().front()) &&
                       shape_size(features) == shape_size(model.input_shape());
  if (!same && !flat_ok) {
    throw ConfigError("input feature shape " + shape_to_string(features) + " does not match model input " +
                      shape_to_string(model.input_shape()));
  }
}

void check_logits(const Tensor& logits) {
  if (!logits.all_finite()) throw NumericOverflow("non-finite activation in forward pass");
}

}  // namespace

struct CacheAccess {
  static std::vector<Tensor>& inputs(BatchCache& c) { return c.inputs_; }
  static Tensor& logits(BatchCache& c) { return c.logits_; }
  static std::uint64_t& version(BatchCache& c) { return c.model_version_; }
  static bool& live(BatchCache& c) { return c.live_; }
};

// ---------------------------------------------------------------- Model

Model::Model(std::vector<Layer> layers, Shape input_shape, std::size_t num_classes)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)), num_classes_(num_classes) {
  if (num_classes_ < 2) throw ConfigError("model needs at least 2 classes");
  std::size_t width = shape_size(input_shape_);
  if (input_shape_.empty() || width == 0) throw ConfigError("model input shape must be non-empty");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit(Overloaded{
                   [&](DenseLayer& l) {
                     if (l.in != width || l.out == 0) {
                       throw ConfigError("dense layer " + std::to_string(i) + " expects " + std::to_string(l.in) +
                                         " inputs but receives " + std::to_string(width));
                     }
                     l.offset = offset;
                     blocks_.push_back({i, offset, l.in * l.out, l.out, l.in});
                     offset += l.in * l.out + l.out;
                     width = l.out;
                   },
                   [&](Conv3x3Layer& l) {
                     if (chw(l.in_channels, l.height, l.width) != width || l.out_channels == 0 || width == 0) {
                       throw ConfigError("conv layer " + std::to_string(i) + " shape mismatch");
                     }
                     l.offset = offset;
                     const std::size_t wc = l.out_channels * l.in_channels * 9;
                     blocks_.push_back({i, offset, wc, l.out_channels, l.in_channels * 9});
                     offset += wc + l.out_channels;
                     width = chw(l.out_channels, l.height, l.width);
                   },
                   [&](ReluLayer&) {},
                   [&](MeanPool2x2Layer& l) {
                     if (chw(l.channels, l.height, l.width) != width || l.height < 2 || l.width < 2) {
                       throw ConfigError("mean-pool layer " + std::to_string(i) + " shape mismatch");
                     }
                     width = chw(l.channels, l.height / 2, l.width / 2);
                   },
                   [&](GlobalMeanPoolLayer& l) {
                     if (chw(l.channels, l.height, l.width) != width) {
                       throw ConfigError("global mean-pool layer " + std::to_string(i) + " shape mismatch");
                     }
                     width = l.channels;
                   },
               },
               layers_[i]);
  }
  if (width != num_classes_) {
    throw ConfigError("network output width " + std::to_string(width) + " != class count " +
                      std::to_string(num_classes_));
  }
  params_.assign(offset, 0.0);
  mask_ = Mask::all_ones(offset);
  touch();
}

void Model::touch() { version_ = ++g_version_counter; }

std::span<double> Model::mutable_parameters() {
  touch();
  return params_;
}

void Model::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) throw ConfigError("parameter vector length mismatch");
  std::copy(values.begin(), values.end(), params_.begin());
  touch();
}

void Model::install_mask(Mask mask) {
  if (mask.size() != params_.size()) {
    throw ConfigError("mask length " + std::to_string(mask.size()) + " != parameter count " +
                      std::to_string(params_.size()));
  }
  mask_ = std::move(mask);
  pruned_ = true;
  enforce_mask();
}

void Model::enforce_mask() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!mask_.bits[i]) params_[i] = 0.0;
  }
  touch();
}

bool Model::mask_respected() const noexcept {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!mask_.bits[i] && params_[i] != 0.0) return false;
  }
  return true;
}

std::vector<double> Model::effective_parameters() const {
  std::vector<double> out(params_);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mask_.bits[i]) out[i] = 0.0;
  }
  return out;
}

// ---------------------------------------------------------------- BatchCache

BatchCache::BatchCache(BatchCache&& other) noexcept
    : inputs_(std::move(other.inputs_)),
      logits_(std::move(other.logits_)),
      model_version_(other.model_version_),
      live_(other.live_) {
  other.live_ = false;
}

BatchCache& BatchCache::operator=(BatchCache&& other) noexcept {
  if (this != &other) {
    inputs_ = std::move(other.inputs_);
    logits_ = std::move(other.logits_);
    model_version_ = other.model_version_;
    live_ = other.live_;
    other.live_ = false;
  }
  return *this;
}

// ---------------------------------------------------------------- passes

ForwardResult forward(const Model& model, const Tensor& inputs) {
  check_inputs(model, inputs);
  EffectiveParams params(model);
  ForwardResult result;
  auto& cached = CacheAccess::inputs(result.cache);
  cached.reserve(model.layers().size());
  Tensor x = inputs;
  for (const auto& layer : model.layers()) {
    cached.push_back(std::move(x));
    x = layer_forward(layer, params.get(), cached.back());
  }
  check_logits(x);
  CacheAccess::logits(result.cache) = x;
  CacheAccess::version(result.cache) = model.version();
  CacheAccess::live(result.cache) = true;
  result.logits = std::move(x);
  return result;
}

Tensor predict(const Model& model, const Tensor& inputs) {
  check_inputs(model, inputs);
  EffectiveParams params(model);
  Tensor x = layer_forward(model.layers().front(), params.get(), inputs);
  for (std::size_t i = 1; i < model.layers().size(); ++i) x = layer_forward(model.layers()[i], params.get(), x);
  check_logits(x);
  return x;
}

LossAndError loss_and_error(const Tensor& logits, std::span<const int> targets) {
  const std::size_t n = logits.rows(), c = logits.row_size();
  if (n != targets.size()) {
    throw ConfigError("logits batch " + std::to_string(n) + " != targets " + std::to_string(targets.size()));
  }
  if (n == 0) throw ConfigError("loss of an empty batch");
  check_logits(logits);
  double loss = 0.0;
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.data().data() + r * c;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (z[j] > z[arg]) arg = j;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - z[arg]);
    const auto y = static_cast<std::size_t>(targets[r]);
    if (y >= c) throw ConfigError("target class out of range");
    loss += z[arg] + std::log(s) - z[y];
    if (arg != y) ++wrong;
  }
  return {loss / static_cast<double>(n), static_cast<double>(wrong) / static_cast<double>(n)};
}

Gradient backward(const Model& model, BatchCache&& cache, std::span<const int> targets) {
  if (!cache.live()) throw UsageError("backward: cache already consumed or never filled");
  if (CacheAccess::version(cache) != model.version()) {
    throw UsageError("backward: stale cache (model parameters changed since forward)");
  }
  CacheAccess::live(cache) = false;

  const Tensor& logits = CacheAccess::logits(cache);
  const std::size_t n = logits.rows(), c = logits.row_size();
  if (targets.size() != n) throw ConfigError("backward: targets length does not match batch");

  // d(mean CE)/d logits = (softmax - onehot) / n
  Tensor dy(logits.shape());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.data().data() + r * c;
    double* d = dy.data().data() + r * c;
    const double zmax = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      d[j] = std::exp(z[j] - zmax);
      s += d[j];
    }
    for (std::size_t j = 0; j < c; ++j) d[j] = d[j] / s * inv_n;
    d[static_cast<std::size_t>(targets[r])] -= inv_n;
  }

  EffectiveParams params(model);
  Gradient grad{std::vector<double>(model.parameter_count(), 0.0)};
  auto& inputs = CacheAccess::inputs(cache);
  for (std::size_t i = model.layers().size(); i-- > 0;) {
    const Tensor& x = inputs[i];
    const bool need_dx = i > 0;
    dy = std::visit(Overloaded{
                        [&](const DenseLayer& l) {
                          return dense_backward(l, params.get(), x, dy, grad.flat.data(), need_dx);
                        },
                        [&](const Conv3x3Layer& l) {
                          return conv_backward(l, params.get(), x, dy, grad.flat.data(), need_dx);
                        },
                        [&](const ReluLayer&) { return relu_backward(x, dy); },
                        [&](const MeanPool2x2Layer& l) { return meanpool_backward(l, x, dy); },
                        [&](const GlobalMeanPoolLayer& l) { return globalpool_backward(l, x, dy); },
                    },
                    model.layers()[i]);
  }
  inputs.clear();

  if (model.pruned()) {
    const auto& bits = model.mask().bits;
    for (std::size_t j = 0; j < grad.flat.size(); ++j) {
      if (!bits[j]) grad.flat[j] = 0.0;
    }
  }
  return grad;
}

namespace {
constexpr std::size_t kFullPassChunk = 256;
}

LossAndGradient full_loss_and_gradient(const Model& model, const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("full gradient of an empty dataset");
  LossAndGradient out{0.0, Gradient{std::vector<double>(model.parameter_count(), 0.0)}};
  for (std::size_t begin = 0; begin < n; begin += kFullPassChunk) {
    const std::size_t end = std::min(n, begin + kFullPassChunk);
    const Tensor x = data.inputs.slice_rows(begin, end);
    const std::span<const int> y(data.labels.data() + begin, end - begin);
    auto fw = forward(model, x);
    const double w = static_cast<double>(end - begin) / static_cast<double>(n);
    out.mean_loss += w * loss_and_error(fw.logits, y).mean_loss;
    const Gradient g = backward(model, std::move(fw.cache), y);
    for (std::size_t j = 0; j < g.flat.size(); ++j) out.gradient.flat[j] += w * g.flat[j];
  }
  return out;
}

Gradient full_gradient(const Model& model, const Dataset& data) {
  return full_loss_and_gradient(model, data).gradient;
}

LossAndError evaluate(const Model& model, const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("evaluate on an empty dataset");
  double loss = 0.0, wrong = 0.0;
  for (std::size_t begin = 0; begin < n; begin += kFullPassChunk) {
    const std::size_t end = std::min(n, begin + kFullPassChunk);
    const Tensor logits = predict(model, data.inputs.slice_rows(begin, end));
    const auto le = loss_and_error(logits, std::span<const int>(data.labels.data() + begin, end - begin));
    loss += le.mean_loss * static_cast<double>(end - begin);
    wrong += std::round(le.error_rate * static_cast<double>(end - begin));
  }
  return {loss / static_cast<double>(n), wrong / static_cast<double>(n)};
}

}  // namespace stepscale
