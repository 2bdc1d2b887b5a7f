#include "mtcrf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "mtcrf/error.hpp"

namespace mtcrf {

std::string HyperSetting::name() const {
  return "h" + std::to_string(hidden_dim) + "_b" + std::to_string(batch_size) +
         "_l" + std::to_string(layers);
}

HyperSetting sample_grid(const HyperGrid& grid, std::uint64_t seed) {
  if (grid.hidden_dim.empty() || grid.batch_size.empty() ||
      grid.layers.empty()) {
    throw Error(ErrorKind::kEmptyGrid, "every grid axis needs a value");
  }
  std::mt19937_64 rng(seed);
  auto pick = [&rng](const std::vector<int>& axis) {
    std::uniform_int_distribution<std::size_t> d(0, axis.size() - 1);
    return axis[d(rng)];
  };
  HyperSetting s;
  s.hidden_dim = pick(grid.hidden_dim);
  s.batch_size = pick(grid.batch_size);
  s.layers = pick(grid.layers);
  return s;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || max_epochs <= 0 || patience <= 0 ||
      !(clip_norm > 0.0) || trials <= 0 || threads <= 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "training needs positive lr, epochs, patience, clip_norm, "
                "trials and threads");
  }
  if (seeds.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "at least one seed is required");
  }
  if (grid.hidden_dim.empty() || grid.batch_size.empty() ||
      grid.layers.empty()) {
    throw Error(ErrorKind::kEmptyGrid, "every grid axis needs a value");
  }
  for (int b : grid.batch_size) {
    if (b <= 0) throw Error(ErrorKind::kInvalidArgument, "batch sizes must be positive");
  }
  for (int h : grid.hidden_dim) {
    if (h <= 0) throw Error(ErrorKind::kInvalidArgument, "hidden sizes must be positive");
  }
  for (int l : grid.layers) {
    if (l <= 0) throw Error(ErrorKind::kInvalidArgument, "layer counts must be positive");
  }
  bp.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["learning_rate"] = c.learning_rate;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["clip_norm"] = c.clip_norm;
  j["seeds"] = c.seeds;
  j["trials"] = c.trials;
  j["grid_seed"] = c.grid_seed;
  j["threads"] = c.threads;
  j["grid"] = {{"hidden_dim", c.grid.hidden_dim},
               {"batch_size", c.grid.batch_size},
               {"layers", c.grid.layers}};
  j["features"] = {{"embedding_dim", c.features.embedding_dim},
                   {"char_ngram_orders", c.features.char_ngram_orders},
                   {"hash_buckets", c.features.hash_buckets},
                   {"window", c.features.window}};
  j["bp"] = {{"max_iterations", c.bp.max_iterations},
             {"damping", c.bp.damping},
             {"tolerance", c.bp.tolerance}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seeds = j.value("seeds", c.seeds);
    c.trials = j.value("trials", c.trials);
    c.grid_seed = j.value("grid_seed", c.grid_seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.grid.hidden_dim = g.value("hidden_dim", c.grid.hidden_dim);
      c.grid.batch_size = g.value("batch_size", c.grid.batch_size);
      c.grid.layers = g.value("layers", c.grid.layers);
    }
    if (j.contains("features")) {
      const auto& f = j.at("features");
      c.features.embedding_dim = f.value("embedding_dim", c.features.embedding_dim);
      c.features.char_ngram_orders =
          f.value("char_ngram_orders", c.features.char_ngram_orders);
      c.features.hash_buckets = f.value("hash_buckets", c.features.hash_buckets);
      c.features.window = f.value("window", c.features.window);
    }
    if (j.contains("bp")) {
      const auto& b = j.at("bp");
      c.bp.max_iterations = b.value("max_iterations", c.bp.max_iterations);
      c.bp.damping = b.value("damping", c.bp.damping);
      c.bp.tolerance = b.value("tolerance", c.bp.tolerance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("training config: ") + e.what());
  }
  return c;
}

AdamOptimizer::AdamOptimizer(const TensorSpans& params, double beta1,
                             double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (auto span : params) {
    first_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(span.size())));
    second_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(span.size())));
  }
}

void AdamOptimizer::step(const TensorSpans& params, const TensorSpans& grads,
                         double learning_rate) {
  if (params.size() != first_.size() || grads.size() != first_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "optimizer tensor count changed");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    if (p.size() != g.size() ||
        p.size() != static_cast<std::size_t>(first_[i].size())) {
      throw Error(ErrorKind::kShapeMismatch, "optimizer tensor shape changed");
    }
    double* m = first_[i].data();
    double* v = second_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gk;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gk * gk;
      // With a zero gradient history m stays 0 and the update is exactly 0.
      p[k] -= learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon_);
    }
  }
}

double clip_global_norm(const TensorSpans& grads, double clip_norm) {
  const double norm = std::sqrt(squared_norm(grads));
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto span : grads) {
      for (double& v : span) v *= scale;
    }
  }
  return norm;
}

double warmup_learning_rate(double base, long step, long steps_per_epoch) {
  if (steps_per_epoch <= 0 || step >= steps_per_epoch) return base;
  return base * static_cast<double>(step) / static_cast<double>(steps_per_epoch);
}

namespace {

nlohmann::json report_json(const F1Report& report) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : report.tasks) {
    const PrfCounts& c = t.scheme == Scheme::kBio ? t.spans : t.tokens;
    out.push_back({{"task", t.task},
                   {"scheme", to_string(t.scheme)},
                   {"precision", t.precision()},
                   {"recall", t.recall()},
                   {"f1", t.f1()},
                   {"accuracy", t.accuracy()},
                   {"tp", c.true_positives},
                   {"fp", c.false_positives},
                   {"fn", c.false_negatives},
                   {"repairs", t.repairs}});
  }
  return out;
}

}  // namespace

nlohmann::json RunRecord::to_json(bool include_timing) const {
  nlohmann::json j;
  j["variant"] = variant;
  j["split"] = split;
  j["split_sentences"] = split_sentences;
  if (!task_scope.empty()) j["task"] = task_scope;
  j["setting"] = {{"hidden_dim", setting.hidden_dim},
                  {"batch_size", setting.batch_size},
                  {"layers", setting.layers}};
  j["seed"] = seed;
  j["initial_dev_loss"] = initial_dev_loss;
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}});
  }
  j["epochs"] = std::move(epochs_json);
  j["best_epoch"] = best_epoch;
  j["best_dev_loss"] = best_dev_loss;
  j["steps"] = steps;
  j["dev"] = report_json(dev);
  j["test"] = report_json(test);
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

namespace {

std::vector<EncodedTokens> encode_all(const Tagger& tagger,
                                      const std::vector<Sentence>& data) {
  std::vector<EncodedTokens> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    out.push_back(encode_tokens(tagger.model.base.featurizer, s.tokens));
  }
  return out;
}

double mean_loss(const Tagger& tagger, const std::vector<EncodedTokens>& enc,
                 const std::vector<Sentence>& data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += tagger_loss(tagger, enc[i], data[i].gold);
  }
  return total / static_cast<double>(data.size());
}

void set_zero(FactorialGradient& grad) {
  TensorSpans spans;
  append_spans(grad, spans);
  for (auto span : spans) std::fill(span.begin(), span.end(), 0.0);
}

}  // namespace

double dataset_loss(const Tagger& tagger, const std::vector<Sentence>& data) {
  return mean_loss(tagger, encode_all(tagger, data), data);
}

TrainResult train_model(Tagger initial, const std::vector<Sentence>& train,
                        const std::vector<Sentence>& dev,
                        const TrainConfig& config, const HyperSetting& setting,
                        std::uint64_t seed) {
  config.validate();
  if (train.empty() || dev.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "training needs train and dev sentences");
  }
  if (setting.batch_size <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "batch size must be positive");
  }
  for (const auto& s : train) check_conforms(initial.schema, s);
  for (const auto& s : dev) check_conforms(initial.schema, s);

  const auto started = std::chrono::steady_clock::now();
  TrainResult result{std::move(initial), {}};
  Tagger& tagger = result.tagger;
  RunRecord& record = result.record;
  record.variant = to_string(tagger.kind);
  record.setting = setting;
  record.seed = seed;

  const auto train_enc = encode_all(tagger, train);
  const auto dev_enc = encode_all(tagger, dev);

  TensorSpans params;
  append_spans(tagger, params);
  AdamOptimizer adam(params);

  const std::size_t batch = static_cast<std::size_t>(setting.batch_size);
  const long steps_per_epoch =
      static_cast<long>((train.size() + batch - 1) / batch);
  const int workers =
      static_cast<int>(std::min<std::size_t>(config.threads, batch));

  FactorialGradient batch_grad = zero_gradient(tagger);
  TensorSpans grad_spans;
  append_spans(batch_grad, grad_spans);
  std::vector<FactorialGradient> scratch(batch, batch_grad);
  std::vector<double> losses(batch, 0.0);

  record.initial_dev_loss = mean_loss(tagger, dev_enc, dev);
  record.best_dev_loss = record.initial_dev_loss;
  record.best_epoch = 0;
  Tagger checkpoint = tagger;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  long step = 0;
  int stale = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t count = std::min(batch, order.size() - begin);
      auto work = [&](std::size_t slot) {
        const std::size_t i = order[begin + slot];
        set_zero(scratch[slot]);
        losses[slot] =
            tagger_loss_and_grad(tagger, train_enc[i], train[i].gold, scratch[slot]);
      };
      if (workers <= 1 || count == 1) {
        for (std::size_t slot = 0; slot < count; ++slot) work(slot);
      } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
          pool.emplace_back([&, w] {
            try {
              for (std::size_t slot = w; slot < count; slot += workers) work(slot);
            } catch (...) {
              errors[w] = std::current_exception();
            }
          });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }
      // Fixed summation order keeps results independent of the worker count.
      set_zero(batch_grad);
      double batch_loss = 0.0;
      for (std::size_t slot = 0; slot < count; ++slot) {
        batch_grad += scratch[slot];
        batch_loss += losses[slot];
      }
      ++step;
      batch_loss /= static_cast<double>(count);
      batch_grad *= 1.0 / static_cast<double>(count);
      const double norm = clip_global_norm(grad_spans, config.clip_norm);
      if (!std::isfinite(batch_loss) || !std::isfinite(norm)) {
        throw Error(ErrorKind::kNonFiniteLoss,
                    "step " + std::to_string(step) + " (epoch " +
                        std::to_string(epoch) + "): loss " +
                        std::to_string(batch_loss) + ", gradient norm " +
                        std::to_string(norm));
      }
      adam.step(params, grad_spans,
                warmup_learning_rate(config.learning_rate, step, steps_per_epoch));
      epoch_loss += batch_loss * static_cast<double>(count);
    }
    const double dev_loss = mean_loss(tagger, dev_enc, dev);
    if (!std::isfinite(dev_loss)) {
      throw Error(ErrorKind::kNonFiniteLoss,
                  "dev loss after epoch " + std::to_string(epoch));
    }
    record.epochs.push_back(
        {epoch, epoch_loss / static_cast<double>(train.size()), dev_loss});
    if (dev_loss < record.best_dev_loss) {
      record.best_dev_loss = dev_loss;
      record.best_epoch = epoch;
      checkpoint = tagger;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  record.steps = step;
  tagger = std::move(checkpoint);
  record.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  return result;
}

std::vector<RunRecord> ProtocolReport::selected_runs() const {
  std::vector<RunRecord> out;
  for (const auto& s : settings) {
    if (s.selected) out.insert(out.end(), s.runs.begin(), s.runs.end());
  }
  return out;
}

std::vector<ResultPoint> ProtocolReport::points() const {
  std::vector<ResultPoint> out;
  for (const auto& run : selected_runs()) {
    for (const auto& t : run.test.tasks) {
      out.push_back({run.variant, run.split, run.split_sentences, t.task, t.f1()});
    }
  }
  return out;
}

namespace {

std::vector<Sentence> project_sentences(const std::vector<Sentence>& data, int task) {
  std::vector<Sentence> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(Sentence{s.tokens, {s.gold.at(task)}});
  return out;
}

}  // namespace

ProtocolReport multi_seed_protocol(const std::vector<ModelKind>& kinds,
                                   const ProtocolInput& input,
                                   const TrainConfig& config,
                                   const RunObserver& observer) {
  config.validate();
  std::vector<HyperSetting> settings;
  for (int i = 0; i < config.trials; ++i) {
    const HyperSetting s = sample_grid(config.grid, config.grid_seed + i);
    if (std::find(settings.begin(), settings.end(), s) == settings.end()) {
      settings.push_back(s);
    }
  }
  const std::string config_json = to_json(config).dump();

  ProtocolReport report;
  for (ModelKind kind : kinds) {
    std::vector<int> scopes = {-1};
    if (kind == ModelKind::kSingleTask) {
      scopes.resize(input.schema.num_tasks());
      std::iota(scopes.begin(), scopes.end(), 0);
    }
    for (const auto& split : input.splits) {
      for (int scope : scopes) {
        const MultiTaskSchema schema =
            scope < 0 ? input.schema : MultiTaskSchema({input.schema.task(scope)});
        const auto train = scope < 0 ? split.train : project_sentences(split.train, scope);
        const auto dev = scope < 0 ? input.dev : project_sentences(input.dev, scope);
        const auto test = scope < 0 ? input.test : project_sentences(input.test, scope);
        const auto vocabulary = collect_vocabulary(train);

        std::size_t first = report.settings.size();
        int best = -1;
        for (const auto& setting : settings) {
          SettingSummary summary;
          summary.variant = to_string(kind);
          summary.split = split_name(split.size);
          summary.task_scope = scope < 0 ? "" : input.schema.task(scope).name();
          summary.setting = setting;
          std::vector<double> dev_scores;
          for (std::uint64_t seed : config.seeds) {
            FeatureConfig fc = config.features;
            fc.hidden_dim = setting.hidden_dim;
            fc.layers = setting.layers;
            Tagger tagger = init_tagger(kind, schema, vocabulary, fc, config.bp, seed);
            tagger.config_json = config_json;
            TrainResult result =
                train_model(std::move(tagger), train, dev, config, setting, seed);
            RunRecord& record = result.record;
            record.split = summary.split;
            record.split_sentences = train.size();
            record.task_scope = summary.task_scope;
            record.dev = evaluate(schema, dev, predict_sentences(result.tagger, dev));
            record.test = evaluate(schema, test, predict_sentences(result.tagger, test));
            dev_scores.push_back(record.dev.mean_f1());
            if (observer) observer(record, result.tagger);
            summary.runs.push_back(std::move(record));
          }
          summary.mean_dev_f1 = mean_of(dev_scores);
          const int index = static_cast<int>(report.settings.size() - first);
          if (best < 0 || summary.mean_dev_f1 >
                              report.settings[first + best].mean_dev_f1) {
            best = index;
          }
          report.settings.push_back(std::move(summary));
        }
        report.settings[first + best].selected = true;
      }
    }
  }
  return report;
}

}  // namespace mtcrf
