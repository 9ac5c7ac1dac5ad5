#include "stepscale/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stepscale/errors.hpp"

namespace stepscale {

std::string to_string(ScalingForm f) { return f == ScalingForm::fixed_lr ? "fixed-lr" : "decaying-lr"; }

ScalingForm parse_scaling_form(const std::string& s) {
  if (s == "fixed-lr" || s == "fixed") return ScalingForm::fixed_lr;
  if (s == "decaying-lr" || s == "decay") return ScalingForm::decaying_lr;
  throw ConfigError("unknown scaling form '" + s + "' (expected fixed or decay)");
}

ScalingFit fit_scaling(std::span<const ScalingPoint> points, ScalingForm form) {
  std::set<double> distinct;
  for (const auto& p : points) {
    if (!(p.batch_size > 0.0) || !(p.steps > 0.0)) throw ConfigError("scaling fit needs positive B and K");
    distinct.insert(p.batch_size);
  }
  if (distinct.size() < 2) throw InsufficientData("scaling fit needs at least two distinct batch sizes");

  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += 1.0 / p.batch_size;
    my += p.steps;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, sx2 = 0.0, sx_y = 0.0;
  for (const auto& p : points) {
    const double x = 1.0 / p.batch_size;
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (p.steps - my);
    sx2 += x * x;
    sx_y += x * p.steps;
  }

  ScalingFit fit;
  fit.form = form;
  fit.n_points = points.size();
  fit.c1 = sxy / sxx;
  fit.c2 = my - fit.c1 * mx;
  if (fit.c1 < 0.0) {
    fit.c1 = 0.0;
    fit.c2 = my;
  } else if (fit.c2 < 0.0) {
    fit.c2 = 0.0;
    fit.c1 = sx_y / sx2;
  }
  fit.residual = relative_rms(fit, points);
  return fit;
}

double predict_steps(const ScalingFit& fit, double batch_size) { return fit.c1 / batch_size + fit.c2; }

double relative_rms(const ScalingFit& fit, std::span<const ScalingPoint> points) {
  if (points.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& p : points) {
    const double r = (predict_steps(fit, p.batch_size) - p.steps) / p.steps;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(points.size()));
}

void TheoryParams::validate() const {
  if (!(L >= 0.0) || !(beta >= 0.0) || !(delta >= 0.0) || !(H >= 0.0)) {
    throw ConfigError("theory parameters L, beta, delta, H must be non-negative");
  }
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  if (!(M_G >= mu * mu)) throw ConfigError("M_G must be at least mu^2");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

ScalingConstants fixed_lr_constants(const TheoryParams& p, double eta_star) {
  p.validate();
  if (!(eta_star > 0.0)) throw ConfigError("optimal learning rate must be positive");
  return {p.delta * p.L * p.beta / (p.mu * p.mu * p.epsilon * p.epsilon), p.delta / (eta_star * p.mu * p.epsilon)};
}

ScalingConstants decaying_lr_constants(const TheoryParams& p) {
  p.validate();
  return {p.L * p.H * p.beta / (p.mu * p.epsilon), p.delta / (p.mu * p.epsilon)};
}

double convergence_bound(double eta_bar, double L, double M, double mu, std::int64_t K, double gap) {
  if (K < 1) throw ConfigError("bound needs K >= 1");
  return eta_bar * L * M / mu + 2.0 * gap / (static_cast<double>(K) * mu * eta_bar);
}

std::optional<double> estimate_lipschitz(const GradientFn& grad, std::span<const double> w_k,
                                         std::span<const double> w_k1, double delta) {
  if (w_k.size() != w_k1.size()) throw ConfigError("Lipschitz estimate needs equally sized iterates");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must be in (0, 1]");
  const double inv = 1.0 / delta;
  const long count = std::lround(inv);
  if (std::abs(inv - static_cast<double>(count)) > 1e-9 * inv) throw ConfigError("1/delta must be an integer");

  std::vector<double> d(w_k.size());
  double dnorm2 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = w_k1[i] - w_k[i];
    dnorm2 += d[i] * d[i];
  }
  if (dnorm2 == 0.0) return std::nullopt;
  const double dnorm = std::sqrt(dnorm2);

  const std::vector<double> g0 = grad(w_k);
  std::vector<double> w(w_k.size());
  double best = 0.0;
  for (long j = 1; j <= count; ++j) {
    const double gamma = static_cast<double>(j) / static_cast<double>(count);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w_k[i] + gamma * d[i];
    const std::vector<double> g = grad(w);
    double diff2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) diff2 += (g[i] - g0[i]) * (g[i] - g0[i]);
    best = std::max(best, std::sqrt(diff2) / (gamma * dnorm));
  }
  return best;
}

GradientFn full_gradient_fn(const Model& model, const Dataset& data) {
  return [scratch = model, &data](std::span<const double> w) mutable {
    scratch.set_parameters(w);
    return full_gradient(scratch, data).flat;
  };
}

double estimate_beta(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw InsufficientData("beta needs a non-empty dataset");
  const std::vector<double> gbar = full_gradient(model, data).flat;
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor x = data.inputs.slice_rows(i, i + 1);
    const std::span<const int> y(&data.labels[i], 1);
    auto fw = forward(model, x);
    const Gradient g = backward(model, std::move(fw.cache), y);
    double d2 = 0.0;
    for (std::size_t p = 0; p < gbar.size(); ++p) d2 += (g.flat[p] - gbar[p]) * (g.flat[p] - gbar[p]);
    acc += d2;
  }
  return acc / static_cast<double>(data.size());
}

double estimate_delta(std::span<const double> loss_history) {
  if (loss_history.empty()) throw InsufficientData("delta needs a non-empty loss history");
  const double lo = *std::min_element(loss_history.begin(), loss_history.end());
  return 2.0 * (loss_history.front() - lo);
}

RatioReport ratio_report(const TheoryParams& sparse, const TheoryParams& dense) {
  if (dense.delta == 0.0 || dense.beta == 0.0 || dense.L == 0.0) {
    throw DegenerateInput("dense reference has a zero delta, beta or L");
  }
  RatioReport r;
  r.delta_ratio = sparse.delta / dense.delta;
  r.beta_ratio = sparse.beta / dense.beta;
  r.L_ratio = sparse.L / dense.L;
  // mu and epsilon are shared by both sides and cancel.
  r.c1_ratio = r.delta_ratio * r.beta_ratio * r.L_ratio;
  r.slowdown_explained = r.c1_ratio > 1.0;
  return r;
}

double SmoothnessTrace::average() const {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& p : points) {
    if (p.lipschitz) {
      acc += *p.lipschitz;
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

TheoryParams theory_params_from_trace(const SmoothnessTrace& trace) {
  TheoryParams p;
  p.L = trace.average();
  p.beta = trace.beta;
  p.delta = trace.loss_history.empty() ? 0.0 : estimate_delta(trace.loss_history);
  return p;
}

}  // namespace stepscale
