#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stepscale/nn.hpp"

namespace stepscale {

enum class Algorithm { sgd, momentum, nesterov };
enum class ScheduleKind { constant, linear_decay };

std::string to_string(Algorithm a);
std::string to_string(ScheduleKind k);
Algorithm parse_algorithm(const std::string& s);
ScheduleKind parse_schedule_kind(const std::string& s);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant;
  std::int64_t decay_horizon = 0;  // T, linear-decay only
  double floor_fraction = 0.0;

  void validate() const;
};

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::sgd;
  double eta_bar = 0.1;
  double momentum = 0.0;  // ignored by sgd
  ScheduleSpec schedule;

  void validate() const;
};

void to_json(nlohmann::json& j, const ScheduleSpec& s);
void from_json(const nlohmann::json& j, ScheduleSpec& s);
void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

struct OptimizerState {
  std::vector<double> velocity;
  std::int64_t step = 0;  // number of updates applied so far
};

/// Learning rate for step k (1-based; k < 1 is treated as 1).
/// constant: eta_bar. linear-decay: eta_bar * max(floor, 1 - k/T).
double schedule_eta(const ScheduleSpec& spec, double eta_bar, std::int64_t k);

/// H = sum_{k=1..K} eta_k^2.
double squared_rate_sum(const ScheduleSpec& spec, double eta_bar, std::int64_t steps);

/// One update of params in place.
///   sgd:      w -= eta g
///   momentum: v = m v + g;  w -= eta v
///   nesterov: v = m v + g;  w -= eta (g + m v)
/// Masked coordinates (mask[i] == 0) keep w and v at exactly zero; an empty
/// mask means all-ones. Throws NumericOverflow if any updated value is not finite.
void step(std::span<double> params, std::span<const double> grad, std::span<const std::uint8_t> mask,
          const OptimizerConfig& config, OptimizerState& state);

void step(Model& model, const Gradient& grad, const OptimizerConfig& config, OptimizerState& state);

}  // namespace stepscale
