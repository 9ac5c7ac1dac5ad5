#include "stepscale/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "stepscale/errors.hpp"
#include "stepscale/prune.hpp"
#include "stepscale/records.hpp"

namespace stepscale {

void Workload::validate() const {
  if (id.empty()) throw ConfigError("workload id must be non-empty");
  if (!(goal_error >= 0.0 && goal_error <= 1.0)) throw ConfigError("goal error must be in [0, 1]");
  if (eval_interval < 1) throw ConfigError("evaluation interval must be >= 1");
  if (max_steps < 1) throw ConfigError("max step budget must be >= 1");
  if (!(divergence_factor > 1.0)) throw ConfigError("divergence factor must exceed 1");
  if (data.kind != "synth" && data.kind != "idx") throw ConfigError("unknown data source '" + data.kind + "'");
  if (search_space.empty()) throw ConfigError("search space must name at least one metaparameter");
  bool has_lr = false;
  for (const auto& d : search_space) {
    d.validate();
    has_lr |= d.name == "learning_rate";
    if (d.name != "learning_rate" && d.name != "momentum") {
      throw ConfigError("unsupported metaparameter '" + d.name + "'");
    }
  }
  if (!has_lr) throw ConfigError("search space must include learning_rate");
  if (search_space.size() > SobolSequence::kMaxDimension) throw ConfigError("too many searched metaparameters");
  model.validate();
  schedule.validate();
}

std::string to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::complete: return "complete";
    case TrialStatus::incomplete: return "incomplete";
    case TrialStatus::infeasible: return "infeasible";
  }
  return "?";
}

TrialStatus parse_trial_status(const std::string& s) {
  if (s == "complete") return TrialStatus::complete;
  if (s == "incomplete") return TrialStatus::incomplete;
  if (s == "infeasible") return TrialStatus::infeasible;
  throw ConfigError("unknown trial status '" + s + "'");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string trial_key(const std::string& workload_id, StudyPoint point, std::size_t trial_index, std::uint64_t seed) {
  char canonical[96];
  std::snprintf(canonical, sizeof canonical, "|%zu|%.6f|%zu|%llu", point.batch_size, point.sparsity, trial_index,
                static_cast<unsigned long long>(seed));
  const std::string text = workload_id + canonical;
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

std::uint64_t trial_seed(std::uint64_t study_seed, std::size_t trial_index) {
  return mix_seed(study_seed, trial_index);
}

OptimizerConfig optimizer_for(const Workload& workload, const Metaparams& metaparams) {
  OptimizerConfig cfg;
  cfg.algorithm = workload.algorithm;
  cfg.schedule = workload.schedule;
  auto lr = metaparams.find("learning_rate");
  if (lr == metaparams.end()) throw ConfigError("metaparameters lack learning_rate");
  cfg.eta_bar = lr->second;
  if (workload.algorithm != Algorithm::sgd) {
    auto mom = metaparams.find("momentum");
    cfg.momentum = mom != metaparams.end() ? mom->second : workload.default_momentum;
  }
  cfg.validate();
  return cfg;
}

Model initial_model(const Workload& workload, const Dataset& train, double sparsity, std::uint64_t seed) {
  ModelSpec spec = workload.model;
  spec.seed = mix_seed(seed, 1);
  Model model = build_model(spec);
  if (sparsity > 0.0) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(seed, 2));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min<std::size_t>(128, order.size()));
    const Dataset batch = train.subset(order);
    const auto saliency = connection_sensitivity(model, batch.inputs, batch.labels);
    apply_mask(model, topk_mask(saliency, sparsity));
  }
  return model;
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : order_(n), batch_size_(batch_size), pos_(n), rng_state_(seed) {
  if (batch_size == 0 || batch_size > n) {
    throw ConfigError("batch size " + std::to_string(batch_size) + " must be in [1, " + std::to_string(n) + "]");
  }
  std::iota(order_.begin(), order_.end(), 0);
}

void BatchSampler::reshuffle() {
  std::mt19937_64 rng(rng_state_);
  std::shuffle(order_.begin(), order_.end(), rng);
  rng_state_ = mix_seed(rng_state_, 0);
  pos_ = 0;
}

std::span<const std::size_t> BatchSampler::next() {
  if (pos_ + batch_size_ > order_.size()) reshuffle();
  std::span<const std::size_t> out(order_.data() + pos_, batch_size_);
  pos_ += batch_size_;
  return out;
}

TrialRecord run_trial(const Workload& workload, const SplitDataset& data, StudyPoint point,
                      const Metaparams& metaparams, std::uint64_t seed) {
  TrialRecord rec;
  rec.workload = workload.id;
  rec.batch_size = point.batch_size;
  rec.sparsity = point.sparsity;
  rec.seed = seed;
  rec.metaparams = metaparams;

  const OptimizerConfig opt = optimizer_for(workload, metaparams);
  Model model = initial_model(workload, data.train, point.sparsity, seed);
  const Mask mask_at_start = model.mask();
  rec.kept_parameters = model.mask().kept();

  BatchSampler sampler(data.train.size(), point.batch_size, mix_seed(seed, 3));
  OptimizerState state;
  rec.status = TrialStatus::incomplete;

  try {
    for (std::int64_t k = 1; k <= workload.max_steps; ++k) {
      const auto idx = sampler.next();
      const Tensor x = data.train.inputs.gather_rows(idx);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.train.labels[idx[i]];

      auto fw = forward(model, x);
      const double loss = loss_and_error(fw.logits, y).mean_loss;
      if (k == 1) rec.initial_loss = loss;
      rec.final_loss = loss;
      rec.steps_run = k;
      if (loss > workload.divergence_factor * std::max(rec.initial_loss, 1e-6)) {
        rec.status = TrialStatus::infeasible;
        break;
      }
      const Gradient g = backward(model, std::move(fw.cache), y);
      step(model, g, opt, state);

      if (k % workload.eval_interval == 0) {
        const double err = evaluate(model, data.validation).error_rate;
        rec.history.push_back({k, err});
        if (err <= workload.goal_error) {
          rec.status = TrialStatus::complete;
          rec.steps_to_goal = k;
          break;
        }
      }
    }
  } catch (const NumericOverflow&) {
    rec.status = TrialStatus::infeasible;
  }

  if (rec.status != TrialStatus::infeasible && (!model.mask_respected() || model.mask() != mask_at_start)) {
    throw std::logic_error("pruning mask changed during training");
  }
  if (!std::isfinite(rec.final_loss)) rec.final_loss = std::numeric_limits<double>::infinity();
  return rec;
}

std::optional<BestTrial> steps_to_result(std::span<const TrialRecord> records) {
  std::optional<BestTrial> best;
  for (const auto& r : records) {
    if (r.status != TrialStatus::complete || !r.steps_to_goal) continue;
    const std::int64_t k = *r.steps_to_goal;
    if (!best || k < best->k_star || (k == best->k_star && r.key < best->key)) {
      best = BestTrial{k, r.key, r.metaparams};
    }
  }
  return best;
}

namespace {
bool same_sparsity(double a, double b) { return std::abs(a - b) < 1e-9; }
}  // namespace

const StudyRow* StudyTable::find(std::size_t batch_size, double sparsity) const {
  for (const auto& r : rows) {
    if (r.batch_size == batch_size && same_sparsity(r.sparsity, sparsity)) return &r;
  }
  return nullptr;
}

std::vector<double> StudyTable::sparsities() const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (std::none_of(out.begin(), out.end(), [&](double s) { return same_sparsity(s, r.sparsity); })) {
      out.push_back(r.sparsity);
    }
  }
  return out;
}

void StudyConfig::validate() const {
  workload.validate();
  if (batch_sizes.empty()) throw ConfigError("study grid needs at least one batch size");
  if (sparsities.empty()) throw ConfigError("study grid needs at least one sparsity level");
  for (auto b : batch_sizes) {
    if (b < 1) throw ConfigError("batch sizes must be >= 1");
  }
  for (auto s : sparsities) {
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity levels must be in [0, 1)");
  }
  if (budget < 1) throw ConfigError("trial budget must be >= 1");
  if (lipschitz.stride < 1 || lipschitz.steps < 1) throw ConfigError("lipschitz stride/steps must be >= 1");
  if (!(lipschitz.delta > 0.0 && lipschitz.delta < 1.0)) throw ConfigError("lipschitz delta must be in (0, 1)");
}

StudyTable aggregate(const StudyConfig& config, std::span<const TrialRecord> records) {
  StudyTable table;
  for (double s : config.sparsities) {
    for (std::size_t b : config.batch_sizes) {
      std::vector<TrialRecord> here;
      for (std::size_t t = 0; t < config.budget; ++t) {
        const std::string key = trial_key(config.workload.id, {b, s}, t, trial_seed(config.seed, t));
        auto it = std::find_if(records.begin(), records.end(), [&](const TrialRecord& r) { return r.key == key; });
        if (it != records.end()) here.push_back(*it);
      }
      StudyRow row;
      row.batch_size = b;
      row.sparsity = s;
      for (const auto& r : here) {
        switch (r.status) {
          case TrialStatus::complete: ++row.n_complete; break;
          case TrialStatus::incomplete: ++row.n_incomplete; break;
          case TrialStatus::infeasible: ++row.n_infeasible; break;
        }
      }
      if (auto best = steps_to_result(here)) {
        row.k_star = best->k_star;
        row.best_key = best->key;
        if (auto it = best->metaparams.find("learning_rate"); it != best->metaparams.end()) row.eta_star = it->second;
        if (auto it = best->metaparams.find("momentum"); it != best->metaparams.end()) row.momentum_star = it->second;
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

SplitDataset load_workload_data(const Workload& workload, const std::filesystem::path& data_root) {
  const DataSource& src = workload.data;
  Dataset all;
  if (src.kind == "synth") {
    all = synth_dataset(src.synth, src.seed);
  } else {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !data_root.empty() ? data_root / path : path;
    };
    const auto images = resolve(src.images), labels = resolve(src.labels);
    for (const auto& p : {images, labels}) {
      if (!std::filesystem::exists(p)) {
        throw IoError("dataset file not found: " + p.string() + " (set STEPSCALE_DATA_ROOT or fix the config path)");
      }
    }
    all = load_idx(images, labels);
    if (src.num_classes) all.num_classes = src.num_classes;
    if (src.limit && src.limit < all.size()) {
      std::vector<std::size_t> head(src.limit);
      std::iota(head.begin(), head.end(), 0);
      all = all.subset(head);
    }
  }
  all.validate();
  return split_validation(all, src.validation_fraction, mix_seed(src.seed, 7));
}

StudyOutcome run_study(const StudyConfig& config, const StudyOptions& options) {
  config.validate();
  const SplitDataset data = load_workload_data(config.workload, options.data_root);
  return run_study(config, data, options);
}

StudyOutcome run_study(const StudyConfig& config, const SplitDataset& data, const StudyOptions& options) {
  config.validate();
  for (auto b : config.batch_sizes) {
    if (b > data.train.size()) {
      throw ConfigError("batch size " + std::to_string(b) + " exceeds the training split (" +
                        std::to_string(data.train.size()) + " examples)");
    }
  }

  std::filesystem::create_directories(options.out_dir);
  const auto records_path = options.out_dir / "records.jsonl";
  std::vector<TrialRecord> records = load_records(records_path);
  std::set<std::string> done;
  for (const auto& r : records) done.insert(r.key);

  // The full budget of Sobol points is drawn up front; every study point
  // sees the same metaparameter sequence.
  const auto assignments = draw_metaparams(config.workload.search_space, config.budget);

  struct Task {
    StudyPoint point;
    std::size_t index;
    std::uint64_t seed;
    std::string key;
  };
  std::vector<Task> tasks;
  StudyOutcome outcome;
  for (double s : config.sparsities) {
    for (std::size_t b : config.batch_sizes) {
      for (std::size_t t = 0; t < config.budget; ++t) {
        const std::uint64_t seed = trial_seed(config.seed, t);
        std::string key = trial_key(config.workload.id, {b, s}, t, seed);
        if (done.count(key)) {
          ++outcome.reused;
          continue;
        }
        tasks.push_back({{b, s}, t, seed, std::move(key)});
      }
    }
  }

  RecordSink sink(records_path);
  std::mutex sink_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      try {
        TrialRecord rec = run_trial(config.workload, data, task.point, assignments[task.index], task.seed);
        rec.key = task.key;
        rec.trial_index = task.index;
        std::lock_guard lock(sink_mutex);
        sink.append(rec);
        if (options.on_record) options.on_record(rec);
        records.push_back(std::move(rec));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };

  const std::size_t n_workers = std::max<std::size_t>(1, std::min(options.workers, tasks.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  outcome.executed = tasks.size();
  outcome.table = aggregate(config, records);
  write_summary_csv(options.out_dir / "summary.csv", outcome.table);
  return outcome;
}

}  // namespace stepscale
