#include "stepscale/quadratic.hpp"

#include <algorithm>
#include <random>

#include "stepscale/errors.hpp"
#include "stepscale/optim.hpp"

namespace stepscale {

QuadraticProblem::QuadraticProblem(std::vector<double> curvature, std::vector<std::vector<double>> anchors)
    : curvature_(std::move(curvature)), anchors_(std::move(anchors)), mean_(curvature_.size(), 0.0) {
  if (curvature_.empty() || anchors_.empty()) throw ConfigError("quadratic problem needs dimensions and anchors");
  for (double c : curvature_) {
    if (!(c > 0.0)) throw ConfigError("quadratic curvatures must be positive");
  }
  for (const auto& a : anchors_) {
    if (a.size() != dim()) throw ConfigError("anchor dimension mismatch");
    for (std::size_t j = 0; j < dim(); ++j) mean_[j] += a[j];
  }
  for (double& m : mean_) m /= static_cast<double>(size());
}

QuadraticProblem QuadraticProblem::random(std::size_t dim, std::size_t n, double lo, double hi, double spread,
                                          std::uint64_t seed) {
  std::vector<double> curv(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    curv[j] = dim == 1 ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(dim - 1);
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, spread);
  std::vector<std::vector<double>> anchors(n, std::vector<double>(dim));
  for (auto& a : anchors) {
    for (double& v : a) v = normal(rng);
  }
  return QuadraticProblem(std::move(curv), std::move(anchors));
}

double QuadraticProblem::value(std::span<const double> w) const {
  double acc = 0.0;
  for (const auto& a : anchors_) {
    for (std::size_t j = 0; j < dim(); ++j) acc += 0.5 * curvature_[j] * (w[j] - a[j]) * (w[j] - a[j]);
  }
  return acc / static_cast<double>(size());
}

std::vector<double> QuadraticProblem::gradient(std::span<const double> w) const {
  std::vector<double> g(dim());
  for (std::size_t j = 0; j < dim(); ++j) g[j] = curvature_[j] * (w[j] - mean_[j]);
  return g;
}

std::vector<double> QuadraticProblem::sample_gradient(std::span<const double> w,
                                                      std::span<const std::size_t> indices) const {
  std::vector<double> g(dim(), 0.0);
  for (std::size_t i : indices) {
    for (std::size_t j = 0; j < dim(); ++j) g[j] += curvature_[j] * (w[j] - anchors_[i][j]);
  }
  for (double& v : g) v /= static_cast<double>(indices.size());
  return g;
}

double QuadraticProblem::lipschitz() const { return *std::max_element(curvature_.begin(), curvature_.end()); }

double QuadraticProblem::beta() const {
  double acc = 0.0;
  for (const auto& a : anchors_) {
    for (std::size_t j = 0; j < dim(); ++j) {
      const double d = curvature_[j] * (a[j] - mean_[j]);
      acc += d * d;
    }
  }
  return acc / static_cast<double>(size());
}

double QuadraticProblem::minimum() const { return value(mean_); }

SgdRun run_quadratic_sgd(const QuadraticProblem& problem, std::span<const double> w1, double eta,
                         std::int64_t K, std::size_t batch_size, std::uint64_t seed) {
  if (w1.size() != problem.dim()) throw ConfigError("start point dimension mismatch");
  if (batch_size < 1 || K < 1) throw ConfigError("SGD run needs K >= 1 and B >= 1");

  std::vector<double> w(w1.begin(), w1.end());
  const std::vector<std::uint8_t> mask(w.size(), 1);
  OptimizerConfig cfg;
  cfg.algorithm = Algorithm::sgd;
  cfg.eta_bar = eta;
  OptimizerState state;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, problem.size() - 1);
  std::vector<std::size_t> batch(batch_size);

  SgdRun run;
  run.initial_gap = problem.value(w) - problem.minimum();
  double acc = 0.0;
  for (std::int64_t k = 0; k < K; ++k) {
    for (double v : problem.gradient(w)) acc += v * v;
    for (auto& i : batch) i = pick(rng);
    const auto g = problem.sample_gradient(w, batch);
    step(w, g, mask, cfg, state);
  }
  run.mean_grad_norm2 = acc / static_cast<double>(K);
  return run;
}

}  // namespace stepscale
