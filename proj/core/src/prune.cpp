#include "stepscale/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stepscale/errors.hpp"

namespace stepscale {

std::size_t pruned_count(std::size_t m, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must be in [0, 1)");
  // Sparsity levels are decimal fractions; absorb representation error so
  // that e.g. 0.7 * 10 counts as 7.
  const double raw = sparsity * static_cast<double>(m);
  return static_cast<std::size_t>(std::floor(raw + 1e-9 * std::max(1.0, raw)));
}

SaliencyVector connection_sensitivity(const Model& model, const Tensor& inputs, std::span<const int> targets) {
  if (model.pruned()) throw UsageError("connection sensitivity needs an unpruned model");
  if (inputs.rows() == 0) throw ConfigError("saliency batch is empty");

  auto fw = forward(model, inputs);
  const Gradient g = backward(model, std::move(fw.cache), targets);
  const auto w = model.parameters();

  SaliencyVector s{std::vector<double>(w.size())};
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    s.values[j] = std::abs(g.flat[j] * w[j]);
    total += s.values[j];
  }
  if (!std::isfinite(total)) throw NumericOverflow("non-finite gradient in connection sensitivity");
  if (total > 0.0) {
    for (auto& v : s.values) v /= total;
  }
  return s;
}

Mask topk_mask(const SaliencyVector& saliency, double sparsity) {
  const std::size_t m = saliency.values.size();
  const std::size_t keep = m - pruned_count(m, sparsity);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  const auto& v = saliency.values;
  auto more_salient = [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), more_salient);

  Mask mask{std::vector<std::uint8_t>(m, 0), sparsity};
  for (std::size_t i = 0; i < keep; ++i) mask.bits[order[i]] = 1;
  return mask;
}

void apply_mask(Model& model, const Mask& mask) { model.install_mask(mask); }

}  // namespace stepscale
