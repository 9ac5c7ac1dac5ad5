#include "stepscale/optim.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "stepscale/errors.hpp"

namespace stepscale {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::sgd: return "sgd";
    case Algorithm::momentum: return "momentum";
    case Algorithm::nesterov: return "nesterov";
  }
  return "?";
}

std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::constant ? "constant" : "linear-decay";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "sgd") return Algorithm::sgd;
  if (s == "momentum") return Algorithm::momentum;
  if (s == "nesterov") return Algorithm::nesterov;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd, momentum or nesterov)");
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "linear-decay") return ScheduleKind::linear_decay;
  throw ConfigError("unknown schedule '" + s + "' (expected constant or linear-decay)");
}

void ScheduleSpec::validate() const {
  if (!(floor_fraction >= 0.0 && floor_fraction < 1.0)) throw ConfigError("floor_fraction must be in [0, 1)");
  if (kind == ScheduleKind::linear_decay && decay_horizon < 1) {
    throw ConfigError("linear-decay needs decay_horizon >= 1");
  }
}

void OptimizerConfig::validate() const {
  if (!(eta_bar > 0.0) || !std::isfinite(eta_bar)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  schedule.validate();
}

void to_json(nlohmann::json& j, const ScheduleSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)}, {"decay_horizon", s.decay_horizon}, {"floor_fraction", s.floor_fraction}};
}

void from_json(const nlohmann::json& j, ScheduleSpec& s) {
  s.kind = parse_schedule_kind(j.value("kind", std::string("constant")));
  s.decay_horizon = j.value("decay_horizon", std::int64_t{0});
  s.floor_fraction = j.value("floor_fraction", 0.0);
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"algorithm", to_string(c.algorithm)},
                     {"eta_bar", c.eta_bar},
                     {"momentum", c.momentum},
                     {"schedule", c.schedule}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.algorithm = parse_algorithm(j.value("algorithm", std::string("sgd")));
  c.eta_bar = j.value("eta_bar", 0.1);
  c.momentum = j.value("momentum", 0.0);
  c.schedule = j.contains("schedule") ? j.at("schedule").get<ScheduleSpec>() : ScheduleSpec{};
}

double schedule_eta(const ScheduleSpec& spec, double eta_bar, std::int64_t k) {
  k = std::max<std::int64_t>(k, 1);
  if (spec.kind == ScheduleKind::constant) return eta_bar;
  const double frac = 1.0 - static_cast<double>(k) / static_cast<double>(spec.decay_horizon);
  return eta_bar * std::max(spec.floor_fraction, frac);
}

double squared_rate_sum(const ScheduleSpec& spec, double eta_bar, std::int64_t steps) {
  double h = 0.0;
  for (std::int64_t k = 1; k <= steps; ++k) {
    const double eta = schedule_eta(spec, eta_bar, k);
    h += eta * eta;
  }
  return h;
}

void step(std::span<double> params, std::span<const double> grad, std::span<const std::uint8_t> mask,
          const OptimizerConfig& config, OptimizerState& state) {
  const std::size_t m = params.size();
  if (grad.size() != m) throw ConfigError("gradient length does not match parameters");
  if (!mask.empty() && mask.size() != m) throw ConfigError("mask length does not match parameters");

  const std::int64_t k = state.step + 1;
  const double eta = schedule_eta(config.schedule, config.eta_bar, k);
  const double mu = config.momentum;
  const bool masked = !mask.empty();
  bool finite = true;

  switch (config.algorithm) {
    case Algorithm::sgd:
      for (std::size_t i = 0; i < m; ++i) {
        if (masked && !mask[i]) {
          params[i] = 0.0;
          continue;
        }
        params[i] -= eta * grad[i];
        finite &= std::isfinite(params[i]);
      }
      break;
    case Algorithm::momentum:
    case Algorithm::nesterov: {
      if (state.velocity.size() != m) state.velocity.assign(m, 0.0);
      const bool nesterov = config.algorithm == Algorithm::nesterov;
      for (std::size_t i = 0; i < m; ++i) {
        if (masked && !mask[i]) {
          params[i] = 0.0;
          state.velocity[i] = 0.0;
          continue;
        }
        double& v = state.velocity[i];
        v = mu * v + grad[i];
        params[i] -= eta * (nesterov ? grad[i] + mu * v : v);
        finite &= std::isfinite(params[i]);
      }
      break;
    }
  }
  state.step = k;
  if (!finite) throw NumericOverflow("non-finite parameter after update " + std::to_string(k));
}

void step(Model& model, const Gradient& grad, const OptimizerConfig& config, OptimizerState& state) {
  std::span<const std::uint8_t> mask;
  if (model.pruned()) mask = model.mask().bits;
  step(model.mutable_parameters(), grad.flat, mask, config, state);
}

}  // namespace stepscale
