#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "stepscale/analysis.hpp"
#include "stepscale/errors.hpp"
#include "stepscale/quadratic.hpp"

namespace stepscale {
namespace {

std::vector<ScalingPoint> exact_points(double c1, double c2, std::initializer_list<double> bs) {
  std::vector<ScalingPoint> pts;
  for (double b : bs) pts.push_back({b, c1 / b + c2});
  return pts;
}

double sse(double c1, double c2, const std::vector<ScalingPoint>& pts) {
  double acc = 0.0;
  for (const auto& p : pts) acc += (c1 / p.batch_size + c2 - p.steps) * (c1 / p.batch_size + c2 - p.steps);
  return acc;
}

TEST(Fit, RecoversExactModel) {
  const auto fit = fit_scaling(exact_points(1000, 50, {2, 8, 32, 128}));
  EXPECT_NEAR(fit.c1, 1000.0, 1e-9);
  EXPECT_NEAR(fit.c2, 50.0, 1e-9);
  EXPECT_LT(fit.residual, 1e-12);
  EXPECT_EQ(fit.n_points, 4u);
  EXPECT_EQ(fit.form, ScalingForm::fixed_lr);
}

TEST(Fit, TwoPointSolve) {
  const std::vector<ScalingPoint> pts{{1, 110}, {10, 20}};
  const auto fit = fit_scaling(pts);
  EXPECT_NEAR(fit.c1, 100.0, 1e-10);
  EXPECT_NEAR(fit.c2, 10.0, 1e-10);
}

TEST(Fit, NoisyDataMatchesExhaustiveGridSearch) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  std::vector<ScalingPoint> pts;
  for (double b : {2, 4, 8, 16, 32, 64, 128, 256}) pts.push_back({b, (400.0 / b + 25.0) * (1.0 + noise(rng))});
  const auto fit = fit_scaling(pts);
  EXPECT_NEAR(fit.c1, 400.0, 40.0);
  EXPECT_NEAR(fit.c2, 25.0, 2.5);

  double best = std::numeric_limits<double>::infinity(), g1 = 0, g2 = 0;
  for (int i = 0; i < 400; ++i) {
    for (int j = 0; j < 400; ++j) {
      const double c1 = 300.0 + 200.0 * i / 399.0, c2 = 15.0 + 20.0 * j / 399.0;
      const double v = sse(c1, c2, pts);
      if (v < best) best = v, g1 = c1, g2 = c2;
    }
  }
  EXPECT_LE(sse(fit.c1, fit.c2, pts), best + 1e-9);
  EXPECT_NEAR(fit.c1, g1, 200.0 / 399.0);
  EXPECT_NEAR(fit.c2, g2, 20.0 / 399.0);
}

TEST(Fit, NegativeInterceptIsClamped) {
  // Steeper than 1/B: the unconstrained intercept is negative.
  const std::vector<ScalingPoint> pts{{1, 100}, {2, 30}, {4, 5}};
  const auto fit = fit_scaling(pts);
  EXPECT_EQ(fit.c2, 0.0);
  EXPECT_GT(fit.c1, 0.0);
  double sx2 = 0, sxy = 0;
  for (const auto& p : pts) sx2 += 1 / (p.batch_size * p.batch_size), sxy += p.steps / p.batch_size;
  EXPECT_NEAR(fit.c1, sxy / sx2, 1e-12);
  EXPECT_NEAR(fit.residual, relative_rms(fit, pts), 1e-15);
}

TEST(Fit, IncreasingDataClampsSlope) {
  const std::vector<ScalingPoint> pts{{2, 10}, {4, 20}, {8, 30}};
  const auto fit = fit_scaling(pts);
  EXPECT_EQ(fit.c1, 0.0);
  EXPECT_NEAR(fit.c2, 20.0, 1e-12);
}

TEST(Fit, NeedsTwoDistinctBatchSizes) {
  const std::vector<ScalingPoint> one{{8, 100}, {8, 120}};
  EXPECT_THROW(fit_scaling(one), InsufficientData);
  const std::vector<ScalingPoint> bad{{8, 100}, {16, 0}};
  EXPECT_THROW(fit_scaling(bad), ConfigError);
}

TEST(Fit, FormsShareShapeButNotLabel) {
  const auto pts = exact_points(300, 12, {2, 4, 16});
  const auto a = fit_scaling(pts, ScalingForm::fixed_lr), b = fit_scaling(pts, ScalingForm::decaying_lr);
  EXPECT_EQ(a.c1, b.c1);
  EXPECT_EQ(a.c2, b.c2);
  EXPECT_EQ(to_string(b.form), "decaying-lr");
  EXPECT_EQ(parse_scaling_form("decay"), ScalingForm::decaying_lr);
  EXPECT_EQ(parse_scaling_form("fixed"), ScalingForm::fixed_lr);
}

TEST(Predict, ApproachesInterceptForHugeBatches) {
  ScalingFit fit;
  fit.c1 = 5000;
  fit.c2 = 70;
  EXPECT_NEAR(predict_steps(fit, 1e9), 70.0, 5000 * 1e-9 + 1e-12);
}

TEST(Predict, DoublingIdentity) {
  ScalingFit fit;
  fit.c1 = 1234.5;
  fit.c2 = 67.25;
  for (double b : {1.0, 3.0, 16.0}) {
    for (int r = 1; r <= 5; ++r) {
      const double f = std::ldexp(1.0, r);
      EXPECT_NEAR(predict_steps(fit, f * b), predict_steps(fit, b) / f + (1 - 1 / f) * fit.c2, 1e-12);
    }
  }
}

TEST(Predict, DecreasingAndBoundedBelow) {
  ScalingFit fit;
  fit.c1 = 10;
  fit.c2 = 3;
  double prev = predict_steps(fit, 1);
  for (double b = 2; b < 1e6; b *= 2) {
    const double k = predict_steps(fit, b);
    EXPECT_LT(k, prev);
    EXPECT_GT(k, fit.c2);
    prev = k;
  }
}

GradientFn quadratic_gradient(std::vector<double> diag) {
  return [diag](std::span<const double> w) {
    std::vector<double> g(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) g[i] = diag[i] * w[i];
    return g;
  };
}

TEST(Lipschitz, QuadraticAlongTopEigenvector) {
  const auto grad = quadratic_gradient({1.0, 3.0});
  const std::vector<double> w0{0.3, -0.2}, w1{0.3, 0.8};
  const auto l = estimate_lipschitz(grad, w0, w1, 0.1);
  ASSERT_TRUE(l);
  EXPECT_NEAR(*l, 3.0, 1e-12);
}

TEST(Lipschitz, AffineGradientIsZero) {
  const GradientFn grad = [](std::span<const double> w) { return std::vector<double>(w.size(), 2.5); };
  EXPECT_EQ(*estimate_lipschitz(grad, std::vector<double>{0, 0}, std::vector<double>{1, 2}, 0.1), 0.0);
}

TEST(Lipschitz, UsesExactlyOneOverDeltaCandidates) {
  int calls = 0;
  const GradientFn grad = [&](std::span<const double> w) {
    ++calls;
    return std::vector<double>(w.begin(), w.end());
  };
  estimate_lipschitz(grad, std::vector<double>{0}, std::vector<double>{1}, 0.1);
  EXPECT_EQ(calls, 11);
  calls = 0;
  estimate_lipschitz(grad, std::vector<double>{0}, std::vector<double>{1}, 0.25);
  EXPECT_EQ(calls, 5);
  EXPECT_THROW(estimate_lipschitz(grad, std::vector<double>{0}, std::vector<double>{1}, 0.3), ConfigError);
}

TEST(Lipschitz, NeverExceedsLargestEigenvalue) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  const auto grad = quadratic_gradient({0.5, 1.0, 2.0, 4.0});
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    EXPECT_LE(*estimate_lipschitz(grad, a, b), 4.0 + 1e-12);
  }
}

TEST(Lipschitz, ZeroStepIsAbsent) {
  const auto grad = quadratic_gradient({1.0});
  EXPECT_FALSE(estimate_lipschitz(grad, std::vector<double>{1}, std::vector<double>{1}));
}

Model two_class_linear(double w0, double w1, double b0, double b1) {
  Model m({DenseLayer{1, 2, 0}}, {1}, 2);
  m.set_parameters(std::vector<double>{w0, w1, b0, b1});
  return m;
}

TEST(Beta, SingleSampleHasNoVariance) {
  const Model m = two_class_linear(0.4, -0.3, 0.1, 0.0);
  const Dataset d{Tensor({1, 1}, std::vector<double>{2.0}), {1}, 2};
  EXPECT_NEAR(estimate_beta(m, d), 0.0, 1e-30);
}

TEST(Beta, DuplicatedDatasetIsUnchanged) {
  const Model m = two_class_linear(0.4, -0.3, 0.1, 0.0);
  const Dataset once{Tensor({3, 1}, std::vector<double>{2.0, -1.0, 0.5}), {1, 0, 0}, 2};
  const Dataset twice{Tensor({6, 1}, std::vector<double>{2.0, -1.0, 0.5, 2.0, -1.0, 0.5}), {1, 0, 0, 1, 0, 0}, 2};
  EXPECT_NEAR(estimate_beta(m, once), estimate_beta(m, twice), 1e-14);
}

TEST(Beta, MatchesPerSampleSummation) {
  const double w0 = 0.7, w1 = -0.4, b0 = 0.05, b1 = -0.1;
  const Model m = two_class_linear(w0, w1, b0, b1);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1.5);
  std::vector<double> xs(20);
  std::vector<int> ys(20);
  for (int i = 0; i < 20; ++i) xs[i] = n(rng), ys[i] = i % 3 == 0 ? 1 : 0;
  const Dataset d{Tensor({20, 1}, xs), ys, 2};

  // Closed-form per-sample gradient of softmax cross-entropy: dz = p - onehot,
  // dW = dz x, db = dz.
  std::vector<std::array<long double, 4>> g(20);
  std::array<long double, 4> mean{};
  for (int i = 0; i < 20; ++i) {
    const long double z0 = w0 * xs[i] + b0, z1 = w1 * xs[i] + b1;
    const long double p1 = 1.0L / (1.0L + std::exp(z0 - z1)), p0 = 1.0L - p1;
    const long double d0 = p0 - (ys[i] == 0), d1 = p1 - (ys[i] == 1);
    g[i] = {d0 * xs[i], d1 * xs[i], d0, d1};
    for (int k = 0; k < 4; ++k) mean[k] += g[i][k] / 20.0L;
  }
  long double beta = 0;
  for (const auto& gi : g) {
    for (int k = 0; k < 4; ++k) beta += (gi[k] - mean[k]) * (gi[k] - mean[k]);
  }
  beta /= 20.0L;
  EXPECT_NEAR(estimate_beta(m, d), static_cast<double>(beta), 1e-13);
}

TEST(Delta, ConstantHistoryIsZero) {
  const std::vector<double> h{1.2, 1.2, 1.2};
  EXPECT_EQ(estimate_delta(h), 0.0);
}

TEST(Delta, TwiceTheDrop) {
  const std::vector<double> h{2.3, 1.1, 0.4, 0.01, 0.02};
  EXPECT_NEAR(estimate_delta(h), 4.58, 1e-12);
  EXPECT_THROW(estimate_delta(std::vector<double>{}), InsufficientData);
}

TEST(Ratios, IdenticalParamsGiveOnes) {
  TheoryParams p;
  p.L = 0.57;
  p.beta = 197.06;
  p.delta = 4.66;
  const auto r = ratio_report(p, p);
  EXPECT_EQ(r.delta_ratio, 1.0);
  EXPECT_EQ(r.beta_ratio, 1.0);
  EXPECT_EQ(r.L_ratio, 1.0);
  EXPECT_EQ(r.c1_ratio, 1.0);
  EXPECT_FALSE(r.slowdown_explained);
}

TEST(Ratios, PublishedFullScaleDecomposition) {
  TheoryParams dense, sparse;
  dense.delta = 4.66;
  sparse.delta = 4.68;
  dense.beta = 197.06;
  sparse.beta = 107.39;
  dense.L = 0.57;
  sparse.L = 1.76;
  const auto r = ratio_report(sparse, dense);
  EXPECT_NEAR(r.delta_ratio, 1.00, 0.005);
  EXPECT_NEAR(r.beta_ratio, 0.54, 0.005);
  EXPECT_NEAR(r.L_ratio, 3.09, 0.005);
  EXPECT_NEAR(r.c1_ratio, r.delta_ratio * r.beta_ratio * r.L_ratio, 1e-12);
  EXPECT_NEAR(r.c1_ratio, 1.67, 0.02);
  EXPECT_TRUE(r.slowdown_explained);
  EXPECT_NEAR(1.00 * 0.54 * 3.09, 1.67, 0.005);
}

TEST(Ratios, ZeroDenseQuantityIsDegenerate) {
  TheoryParams dense, sparse;
  sparse.L = sparse.beta = sparse.delta = 1.0;
  dense.L = 1.0;
  dense.delta = 1.0;
  EXPECT_THROW(ratio_report(sparse, dense), DegenerateInput);
}

TEST(Constants, FixedAndDecayingFormulas) {
  TheoryParams p;
  p.L = 2.0;
  p.beta = 3.0;
  p.delta = 5.0;
  p.mu = 0.5;
  p.M_G = 1.0;
  p.epsilon = 0.1;
  p.H = 7.0;
  const auto f = fixed_lr_constants(p, 0.2);
  EXPECT_NEAR(f.c1, 5.0 * 2.0 * 3.0 / (0.25 * 0.01), 1e-9);
  EXPECT_NEAR(f.c2, 5.0 / (0.2 * 0.5 * 0.1), 1e-9);
  const auto d = decaying_lr_constants(p);
  EXPECT_NEAR(d.c1, 2.0 * 7.0 * 3.0 / (0.5 * 0.1), 1e-9);
  EXPECT_NEAR(d.c2, 5.0 / (0.5 * 0.1), 1e-9);
  EXPECT_NEAR(p.M(4.0), 0.75, 1e-15);
  p.M_G = 0.1;  // below mu^2
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Constants, DecayingInterceptIgnoresLearningRate) {
  TheoryParams p;
  p.L = 1;
  p.beta = 1;
  p.delta = 2;
  p.H = squared_rate_sum(ScheduleSpec{ScheduleKind::linear_decay, 100, 0.0}, 0.5, 100);
  TheoryParams q = p;
  q.H = squared_rate_sum(ScheduleSpec{ScheduleKind::linear_decay, 100, 0.0}, 0.1, 100);
  EXPECT_EQ(decaying_lr_constants(p).c2, decaying_lr_constants(q).c2);
  EXPECT_NEAR(decaying_lr_constants(p).c1 / decaying_lr_constants(q).c1, 25.0, 1e-9);
}

TEST(Quadratic, ConstantsAreExact) {
  const QuadraticProblem q({1.0, 4.0}, {{1.0, 0.0}, {-1.0, 2.0}});
  EXPECT_EQ(q.lipschitz(), 4.0);
  EXPECT_EQ(q.minimizer(), (std::vector<double>{0.0, 1.0}));
  // A (a_i - a_bar) = (1, -4) and (-1, 4)
  EXPECT_NEAR(q.beta(), 17.0, 1e-12);
  // f(a_bar) = 1/2 (1 * 1 + 4 * 1) on average
  EXPECT_NEAR(q.minimum(), 2.5, 1e-12);
  const std::vector<double> w{2.0, 2.0};
  EXPECT_EQ(q.gradient(w), (std::vector<double>{2.0, 4.0}));
}

TEST(Quadratic, BoundHoldsAcrossSeeds) {
  const auto q = QuadraticProblem::random(10, 200, 0.1, 2.0, 1.0, 5);
  const std::vector<double> w1(10, 3.0);
  const double L = q.lipschitz();
  for (double frac : {0.1, 0.5, 1.0}) {
    for (std::int64_t K : {100, 1000}) {
      for (std::size_t B : {1u, 8u}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
          const auto run = run_quadratic_sgd(q, w1, frac / L, K, B, seed);
          const double bound = convergence_bound(frac / L, L, q.beta() / static_cast<double>(B), 1.0, K, run.initial_gap);
          EXPECT_LE(run.mean_grad_norm2, bound);
        }
      }
    }
  }
}

TEST(Trace, LengthIsCeilOfStepsOverStride) {
  Workload w;
  w.id = "trace";
  w.data.synth = SynthSpec{.classes = 2, .dims = 4, .per_class = 40};
  w.model = ModelSpec{.architecture = "simple-mlp", .widths = {4, 6, 2}};
  w.search_space = {{"learning_rate", Scale::log10, 0.01, 1.0}};
  const SplitDataset data = load_workload_data(w);
  TraceOptions o;
  o.stride = 10;
  o.steps = 50;
  o.with_beta = false;
  auto t = trace_smoothness(w, data, {8, 0.0}, {{"learning_rate", 0.1}}, 1, o);
  ASSERT_EQ(t.points.size(), 5u);
  EXPECT_EQ(t.points[0].step, 1);
  EXPECT_EQ(t.points[4].step, 41);
  EXPECT_EQ(t.loss_history.size(), 6u);
  for (const auto& p : t.points) EXPECT_GE(p.lipschitz.value_or(0.0), 0.0);

  o.stride = 1000;
  t = trace_smoothness(w, data, {8, 0.0}, {{"learning_rate", 0.1}}, 1, o);
  EXPECT_EQ(t.points.size(), 1u);

  o.stride = 7;
  t = trace_smoothness(w, data, {8, 0.5}, {{"learning_rate", 0.1}}, 1, o);
  EXPECT_EQ(t.points.size(), 8u);
  EXPECT_GT(t.average(), 0.0);
}

}  // namespace
}  // namespace stepscale
