#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "stepscale/nn.hpp"

namespace stepscale::testing {

inline Tensor random_inputs(const Shape& sample_shape, std::size_t n, std::uint64_t seed) {
  Shape shape{n};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = normal(rng);
  return Tensor(shape, std::move(data));
}

inline std::vector<int> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(classes) - 1);
  std::vector<int> y(n);
  for (int& v : y) v = pick(rng);
  return y;
}

inline void randomize_parameters(Model& model, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> p(model.parameter_count());
  for (double& v : p) v = dist(rng);
  model.set_parameters(p);
}

/// Mean cross-entropy of the model on (x, y), evaluated through predict.
inline double batch_loss(const Model& model, const Tensor& x, std::span<const int> y) {
  const Tensor logits = predict(model, x);
  const std::size_t c = logits.row_size();
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double* z = logits.data().data() + i * c;
    double denom = 0.0;
    for (std::size_t k = 0; k < c; ++k) denom += std::exp(z[k]);
    acc -= std::log(std::exp(z[y[i]]) / denom);
  }
  return acc / static_cast<double>(y.size());
}

/// Central finite differences of batch_loss on every parameter.
inline std::vector<double> finite_difference_gradient(const Model& model, const Tensor& x, std::span<const int> y,
                                                      double h = 1e-5) {
  Model probe = model;
  std::vector<double> w(model.parameters().begin(), model.parameters().end());
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double orig = w[i];
    w[i] = orig + h;
    probe.set_parameters(w);
    const double up = batch_loss(probe, x, y);
    w[i] = orig - h;
    probe.set_parameters(w);
    const double down = batch_loss(probe, x, y);
    w[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

}  // namespace stepscale::testing
