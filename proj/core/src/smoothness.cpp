#include <vector>

#include "stepscale/analysis.hpp"
#include "stepscale/errors.hpp"

namespace stepscale {

SmoothnessTrace trace_smoothness(const Workload& workload, const SplitDataset& data, StudyPoint point,
                                 const Metaparams& metaparams, std::uint64_t seed, const TraceOptions& options) {
  if (options.stride < 1) throw ConfigError("trace stride must be >= 1");
  if (options.steps < 1) throw ConfigError("trace length must be >= 1");

  SmoothnessTrace trace;
  trace.sparsity = point.sparsity;

  const OptimizerConfig opt = optimizer_for(workload, metaparams);
  Model model = initial_model(workload, data.train, point.sparsity, seed);
  if (options.with_beta) trace.beta = estimate_beta(model, data.train);

  BatchSampler sampler(data.train.size(), point.batch_size, mix_seed(seed, 3));
  OptimizerState state;
  const GradientFn grad = full_gradient_fn(model, data.train);

  try {
    for (std::int64_t k = 1; k <= options.steps; ++k) {
      const bool sample = (k - 1) % options.stride == 0;
      std::vector<double> w_k;
      double loss_k = 0.0;
      if (sample) {
        w_k.assign(model.parameters().begin(), model.parameters().end());
        loss_k = evaluate(model, data.train).mean_loss;
        trace.loss_history.push_back(loss_k);
      }

      const auto idx = sampler.next();
      const Tensor x = data.train.inputs.gather_rows(idx);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.train.labels[idx[i]];
      auto fw = forward(model, x);
      const Gradient g = backward(model, std::move(fw.cache), y);
      step(model, g, opt, state);

      if (sample) {
        const auto w_k1 = model.parameters();
        trace.points.push_back({k, estimate_lipschitz(grad, w_k, w_k1, options.delta), loss_k});
      }
    }
    trace.loss_history.push_back(evaluate(model, data.train).mean_loss);
  } catch (const NumericOverflow&) {
    trace.diverged = true;
  }
  return trace;
}

}  // namespace stepscale
