#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stepscale/dataset.hpp"
#include "stepscale/models.hpp"
#include "stepscale/optim.hpp"
#include "stepscale/quasirand.hpp"

namespace stepscale {

/// Where a workload's examples come from.
struct DataSource {
  std::string kind = "synth";  // "synth" or "idx"
  SynthSpec synth;
  std::uint64_t seed = 0;
  std::string images;  // idx: paths, relative ones resolved against the data root
  std::string labels;
  std::size_t num_classes = 0;  // idx: 0 infers from the labels
  std::size_t limit = 0;        // idx: keep only the first `limit` examples when > 0
  double validation_fraction = 0.1;
};

/// A (data set, model, optimizer + schedule) triple plus its protocol
/// constants.
struct Workload {
  std::string id = "workload";
  DataSource data;
  ModelSpec model;
  Algorithm algorithm = Algorithm::sgd;
  ScheduleSpec schedule;
  double goal_error = 0.1;
  std::int64_t eval_interval = 16;
  std::int64_t max_steps = 40000;
  std::vector<SearchDimension> search_space;
  double default_momentum = 0.9;  // used when momentum is not searched
  double divergence_factor = 1e4;

  void validate() const;
};

struct StudyPoint {
  std::size_t batch_size = 2;
  double sparsity = 0.0;
};

enum class TrialStatus { complete, incomplete, infeasible };
std::string to_string(TrialStatus s);
TrialStatus parse_trial_status(const std::string& s);

struct EvalPoint {
  std::int64_t step = 0;
  double error = 1.0;

  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct TrialRecord {
  std::string key;
  std::string workload;
  std::size_t batch_size = 0;
  double sparsity = 0.0;
  std::size_t trial_index = 0;
  std::uint64_t seed = 0;
  Metaparams metaparams;
  TrialStatus status = TrialStatus::incomplete;
  std::optional<std::int64_t> steps_to_goal;
  std::vector<EvalPoint> history;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::int64_t steps_run = 0;
  std::size_t kept_parameters = 0;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Deterministic 64-bit mixing (splitmix64) used to derive per-purpose seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Hex FNV-1a digest of (workload id, B, s, trial index, seed).
std::string trial_key(const std::string& workload_id, StudyPoint point, std::size_t trial_index, std::uint64_t seed);

/// Seed of trial t; identical across study points so batch sizes and
/// sparsity levels are compared on matched seeds.
std::uint64_t trial_seed(std::uint64_t study_seed, std::size_t trial_index);

/// Optimizer settings for one metaparameter assignment ("learning_rate",
/// optionally "momentum").
OptimizerConfig optimizer_for(const Workload& workload, const Metaparams& metaparams);

/// Builds the model of a trial, pruned at initialisation to `sparsity` using a
/// seeded saliency batch of min(128, n) training examples.
Model initial_model(const Workload& workload, const Dataset& train, double sparsity, std::uint64_t seed);

/// Endless stream of size-B mini-batches: a seeded full shuffle per epoch,
/// short tail batches dropped.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::span<const std::size_t> next();

 private:
  void reshuffle();

  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_;
  std::uint64_t rng_state_;
};

/// Trains one metaparameter assignment at one study point and classifies it.
/// Failure modes are encoded in the record's status, never thrown.
TrialRecord run_trial(const Workload& workload, const SplitDataset& data, StudyPoint point,
                      const Metaparams& metaparams, std::uint64_t seed);

struct BestTrial {
  std::int64_t k_star = 0;
  std::string key;
  Metaparams metaparams;
};

/// Lowest steps_to_goal over complete records; ties keep the smallest key.
std::optional<BestTrial> steps_to_result(std::span<const TrialRecord> records);

struct StudyRow {
  std::size_t batch_size = 0;
  double sparsity = 0.0;
  std::optional<std::int64_t> k_star;
  std::optional<double> eta_star;
  std::optional<double> momentum_star;
  std::string best_key;
  std::size_t n_complete = 0;
  std::size_t n_incomplete = 0;
  std::size_t n_infeasible = 0;
};

struct StudyTable {
  std::vector<StudyRow> rows;

  const StudyRow* find(std::size_t batch_size, double sparsity) const;
  std::vector<double> sparsities() const;
};

/// Settings of the smoothness-trace runs.
struct LipschitzSettings {
  std::int64_t stride = 100;
  std::int64_t steps = 2000;
  double delta = 0.1;
  std::size_t batch_size = 16;
  Metaparams metaparams{{"learning_rate", 0.05}};
  std::vector<double> sparsities{0.0, 0.5, 0.7, 0.9};
  std::uint64_t seed = 0;
};

struct StudyConfig {
  std::string profile = "desk";
  Workload workload;
  std::vector<std::size_t> batch_sizes;
  std::vector<double> sparsities;
  std::size_t budget = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  LipschitzSettings lipschitz;

  void validate() const;
};

StudyTable aggregate(const StudyConfig& config, std::span<const TrialRecord> records);

/// Loads and splits the workload's data; `data_root` anchors relative IDX paths.
SplitDataset load_workload_data(const Workload& workload, const std::filesystem::path& data_root = {});

struct StudyOptions {
  std::filesystem::path out_dir;  // records.jsonl and summary.csv land here
  std::size_t workers = 1;
  std::filesystem::path data_root;
  std::function<void(const TrialRecord&)> on_record;  // called under the sink lock
};

struct StudyOutcome {
  StudyTable table;
  std::size_t executed = 0;  // trials run by this call
  std::size_t reused = 0;    // trials found in the existing record file
};

/// Runs `budget` Sobol trials at every (B, s) grid point, skipping trials
/// whose key already appears in out_dir/records.jsonl.
StudyOutcome run_study(const StudyConfig& config, const StudyOptions& options);

/// Same, against data already in memory.
StudyOutcome run_study(const StudyConfig& config, const SplitDataset& data, const StudyOptions& options);

}  // namespace stepscale
