#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepscale/dataset.hpp"
#include "stepscale/harness.hpp"
#include "stepscale/nn.hpp"

namespace stepscale {

enum class ScalingForm { fixed_lr, decaying_lr };
std::string to_string(ScalingForm f);
/// Accepts "fixed-lr"/"fixed" and "decaying-lr"/"decay".
ScalingForm parse_scaling_form(const std::string& s);

struct ScalingPoint {
  double batch_size = 1.0;
  double steps = 1.0;
};

/// K(B) = c1/B + c2. For the decaying form the constants are the tilde
/// variants; the functional shape is the same.
struct ScalingFit {
  ScalingForm form = ScalingForm::fixed_lr;
  double c1 = 0.0;
  double c2 = 0.0;
  double residual = 0.0;  // RMS relative error over the fitted points
  std::size_t n_points = 0;
};

/// Unweighted least squares of K against 1/B, with negative coefficients
/// clamped to zero and the other refitted. Throws InsufficientData with fewer
/// than two distinct batch sizes, ConfigError on non-positive K or B.
ScalingFit fit_scaling(std::span<const ScalingPoint> points, ScalingForm form = ScalingForm::fixed_lr);

double predict_steps(const ScalingFit& fit, double batch_size);

/// Root-mean-square of (K_hat - K)/K.
double relative_rms(const ScalingFit& fit, std::span<const ScalingPoint> points);

struct TheoryParams {
  double L = 0.0;
  double beta = 0.0;     // variance bound at B = 1
  double M_G = 1.0;
  double mu = 1.0;
  double delta = 0.0;    // 2 (f(w1) - f_inf)
  double epsilon = 1.0;  // convergence degree (cancels in ratios)
  double H = 0.0;        // sum of squared step sizes, decaying schedules

  double M(double batch_size) const { return beta / batch_size; }
  void validate() const;
};

struct ScalingConstants {
  double c1 = 0.0;
  double c2 = 0.0;
};

/// c1 = Delta L beta / (mu^2 eps^2), c2 = Delta / (eta_star mu eps).
ScalingConstants fixed_lr_constants(const TheoryParams& p, double eta_star);
/// c1 = L H beta / (mu eps), c2 = Delta / (mu eps).
ScalingConstants decaying_lr_constants(const TheoryParams& p);

/// Right-hand side of the fixed step-size SGD bound on the average squared
/// gradient norm: eta L M / mu + 2 gap / (K mu eta), gap = f(w1) - f_inf.
double convergence_bound(double eta_bar, double L, double M, double mu, std::int64_t K, double gap);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// max over gamma in {delta, 2 delta, ..., 1} of
/// |grad(w_k + gamma d) - grad(w_k)| / |gamma d| with d = w_k1 - w_k.
/// Returns nullopt when d = 0. Throws ConfigError unless 1/delta is integral.
std::optional<double> estimate_lipschitz(const GradientFn& grad, std::span<const double> w_k,
                                         std::span<const double> w_k1, double delta = 0.1);

/// Full-training-set gradient of `model` evaluated at arbitrary parameters.
GradientFn full_gradient_fn(const Model& model, const Dataset& data);

/// Mean over samples of |g_i - g_bar|^2 at the model's current parameters.
double estimate_beta(const Model& model, const Dataset& data);

/// 2 (first - min). Throws InsufficientData on an empty history.
double estimate_delta(std::span<const double> loss_history);

struct RatioReport {
  double delta_ratio = 1.0;
  double beta_ratio = 1.0;
  double L_ratio = 1.0;
  double c1_ratio = 1.0;
  bool slowdown_explained = false;  // c1_ratio > 1
};

/// Sparse over dense. Throws DegenerateInput when a dense quantity is zero.
RatioReport ratio_report(const TheoryParams& sparse, const TheoryParams& dense);

struct TracePoint {
  std::int64_t step = 0;
  std::optional<double> lipschitz;
  double train_loss = 0.0;  // full training loss at w_k
};

struct SmoothnessTrace {
  double sparsity = 0.0;
  std::vector<TracePoint> points;
  std::vector<double> loss_history;  // full training loss at each sample, then at the end
  double beta = 0.0;                 // at the (pruned) initialisation
  bool diverged = false;

  /// Mean of the present L_hat values; 0 when none.
  double average() const;
};

struct TraceOptions {
  std::int64_t stride = 100;
  std::int64_t steps = 2000;
  double delta = 0.1;
  bool with_beta = true;
};

/// Fixed-metaparameter training run sampling L_hat at steps k with
/// (k - 1) % stride == 0, i.e. ceil(steps / stride) samples.
SmoothnessTrace trace_smoothness(const Workload& workload, const SplitDataset& data, StudyPoint point,
                                 const Metaparams& metaparams, std::uint64_t seed, const TraceOptions& options);

/// Summary quantities of one trace as theory parameters.
TheoryParams theory_params_from_trace(const SmoothnessTrace& trace);

}  // namespace stepscale
