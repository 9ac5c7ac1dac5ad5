#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace stepscale {

/// f(w) = (1/n) sum_i 1/2 (w - a_i)^T A (w - a_i) with diagonal A. Sampling
/// one anchor uniformly gives an unbiased gradient whose variance does not
/// depend on w, so every constant of the SGD bound is known exactly:
/// L = max A, mu = 1, M_G = 1, beta = mean |A (a_i - a_bar)|^2, M = beta / B,
/// and f_inf = f(a_bar).
class QuadraticProblem {
 public:
  QuadraticProblem(std::vector<double> curvature, std::vector<std::vector<double>> anchors);

  /// Curvatures evenly spaced in [lo, hi], anchors drawn N(0, spread^2).
  static QuadraticProblem random(std::size_t dim, std::size_t n, double lo, double hi, double spread,
                                 std::uint64_t seed);

  std::size_t dim() const noexcept { return curvature_.size(); }
  std::size_t size() const noexcept { return anchors_.size(); }

  double value(std::span<const double> w) const;
  std::vector<double> gradient(std::span<const double> w) const;
  /// Mean gradient over the given anchor indices.
  std::vector<double> sample_gradient(std::span<const double> w, std::span<const std::size_t> indices) const;

  double lipschitz() const;
  double beta() const;
  double minimum() const;
  const std::vector<double>& minimizer() const noexcept { return mean_; }

 private:
  std::vector<double> curvature_;
  std::vector<std::vector<double>> anchors_;
  std::vector<double> mean_;
};

struct SgdRun {
  double mean_grad_norm2 = 0.0;  // (1/K) sum_k |grad f(w_k)|^2
  double initial_gap = 0.0;      // f(w1) - f_inf
};

/// K fixed-step SGD updates with batches of `batch_size` anchors drawn with
/// replacement.
SgdRun run_quadratic_sgd(const QuadraticProblem& problem, std::span<const double> w1, double eta,
                         std::int64_t K, std::size_t batch_size, std::uint64_t seed);

}  // namespace stepscale
