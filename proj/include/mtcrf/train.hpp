#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtcrf/corpus.hpp"
#include "mtcrf/eval.hpp"
#include "mtcrf/model.hpp"

namespace mtcrf {

// Hyperparameter axes sampled per experiment. "layers" is the featurizer's
// projection depth.
struct HyperGrid {
  std::vector<int> hidden_dim = {256, 512};
  std::vector<int> batch_size = {8, 16, 32};
  std::vector<int> layers = {1, 2, 3};

  bool operator==(const HyperGrid&) const = default;
};

struct HyperSetting {
  int hidden_dim = 0;
  int batch_size = 0;
  int layers = 0;

  std::string name() const;
  bool operator==(const HyperSetting&) const = default;
};

// Independent uniform draw per axis, deterministic in `seed`.
HyperSetting sample_grid(const HyperGrid& grid, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 100;
  int patience = 5;
  double clip_norm = 5.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  HyperGrid grid;
  int trials = 1;              // grid settings sampled per experiment
  std::uint64_t grid_seed = 0;
  FeatureConfig features;      // hidden_dim and layers come from the setting
  BpConfig bp;
  int threads = 1;             // workers for per-sentence gradients

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

class AdamOptimizer {
 public:
  AdamOptimizer(const TensorSpans& params, double beta1 = 0.9,
                double beta2 = 0.999, double epsilon = 1e-8);

  void step(const TensorSpans& params, const TensorSpans& grads,
            double learning_rate);
  long steps() const { return steps_; }

 private:
  double beta1_;
  double beta2_;
  double epsilon_;
  long steps_ = 0;
  std::vector<Eigen::VectorXd> first_;
  std::vector<Eigen::VectorXd> second_;
};

// Rescales `grads` in place so their global L2 norm is at most
// `clip_norm`. Returns the norm before clipping.
double clip_global_norm(const TensorSpans& grads, double clip_norm);

// Linear ramp from 0 to `base` over the first epoch; `step` is 1-based.
double warmup_learning_rate(double base, long step, long steps_per_epoch);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct RunRecord {
  std::string variant;
  std::string split;
  std::size_t split_sentences = 0;
  std::string task_scope;  // task name for single-task runs, else empty
  HyperSetting setting;
  std::uint64_t seed = 0;
  double initial_dev_loss = 0.0;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;  // 0 = initial parameters
  double best_dev_loss = 0.0;
  long steps = 0;
  F1Report dev;
  F1Report test;
  double wall_seconds = 0.0;

  nlohmann::json to_json(bool include_timing = false) const;
};

struct TrainResult {
  Tagger tagger;
  RunRecord record;
};

// Mean per-sentence loss of the training objective.
double dataset_loss(const Tagger& tagger, const std::vector<Sentence>& data);

// Mini-batch Adam with warmup, clipping and dev-loss early stopping; returns
// the best-dev-loss checkpoint. Deterministic in (data, config, seed).
TrainResult train_model(Tagger initial, const std::vector<Sentence>& train,
                        const std::vector<Sentence>& dev,
                        const TrainConfig& config, const HyperSetting& setting,
                        std::uint64_t seed);

struct SplitData {
  SplitSize size;
  std::vector<Sentence> train;
};

struct ProtocolInput {
  MultiTaskSchema schema;
  std::vector<SplitData> splits;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;
};

struct SettingSummary {
  std::string variant;
  std::string split;
  std::string task_scope;
  HyperSetting setting;
  double mean_dev_f1 = 0.0;
  bool selected = false;
  std::vector<RunRecord> runs;
};

struct ProtocolReport {
  std::vector<SettingSummary> settings;

  std::vector<RunRecord> selected_runs() const;
  // Test F1 per task of the selected runs, ready for compare_report.
  std::vector<ResultPoint> points() const;
  ComparisonTable table() const { return compare_report(points()); }
};

// Called after each run with its record and trained tagger.
using RunObserver = std::function<void(const RunRecord&, const Tagger&)>;

// For every (variant, split) and sampled setting, trains one model per seed,
// averages dev F1 over seeds, and keeps the best-average setting. Single-task
// variants run once per task on that task alone.
ProtocolReport multi_seed_protocol(const std::vector<ModelKind>& kinds,
                                   const ProtocolInput& input,
                                   const TrainConfig& config,
                                   const RunObserver& observer = {});

}  // namespace mtcrf
