#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtcrf/corpus.hpp"
#include "mtcrf/error.hpp"
#include "mtcrf/eval.hpp"
#include "mtcrf/model.hpp"
#include "mtcrf/synthetic.hpp"
#include "mtcrf/tagset.hpp"
#include "mtcrf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Bad flags or configuration values.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code(mtcrf::ErrorKind kind) {
  switch (kind) {
    case mtcrf::ErrorKind::kNonFiniteLoss: return kExitNumeric;
    case mtcrf::ErrorKind::kInvalidArgument:
    case mtcrf::ErrorKind::kEmptyGrid: return kExitUsage;
    default: return kExitData;
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw mtcrf::Error(mtcrf::ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw mtcrf::Error(mtcrf::ErrorKind::kIo, "cannot create " + dir.string());
}

// Caps the requested worker count by MTCRF_THREADS when set.
int capped_threads(int requested) {
  if (const char* env = std::getenv("MTCRF_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) return std::min(requested, cap);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("MTCRF_THREADS must be a positive integer, got '") + env + "'");
  }
  return requested;
}

// ---- split ----------------------------------------------------------------

struct SplitArgs {
  std::string train;
  std::string sizes = "100,500,1000,full";
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_split(const SplitArgs& a) {
  std::vector<mtcrf::SplitSize> sizes;
  for (const auto& s : split_list(a.sizes)) {
    try {
      sizes.push_back(mtcrf::parse_split_size(s));
    } catch (const mtcrf::Error& e) {
      throw UsageError(e.detail());
    }
  }
  if (sizes.empty()) throw UsageError("--sizes is empty");
  const mtcrf::Dataset data = mtcrf::read_conll_infer(a.train);
  const auto subsets = mtcrf::sample_low_resource(data.sentences, {sizes, a.seed});
  make_dir(a.out);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const fs::path file = fs::path(a.out) / ("train_" + mtcrf::split_name(sizes[i]) + ".conll");
    mtcrf::write_conll(file.string(), data.schema, subsets[i]);
    std::cout << file.string() << '\t' << subsets[i].size() << '\n';
  }
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct SilverSpec {
  std::string name;
  std::string scheme;
  std::string train, dev, test;
};

// Experiment configuration file (JSON):
//   data:     train, dev, test, optional schema file, tasks, schemes,
//             sizes, split_seed, silver[]
//   variants: list of st|mh|fac|wfac|cfac
//   training: TrainConfig fields
struct ExperimentConfig {
  std::string train, dev, test, schema;
  std::vector<std::string> tasks;
  std::vector<std::string> schemes;
  std::vector<std::string> sizes = {"full"};
  std::uint64_t split_seed = 0;
  std::vector<SilverSpec> silver;
  std::vector<std::string> variants = {"mh"};
  mtcrf::TrainConfig training;
};

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

json to_json(const ExperimentConfig& c) {
  json silver = json::array();
  for (const auto& s : c.silver) {
    silver.push_back({{"name", s.name}, {"scheme", s.scheme}, {"train", s.train},
                      {"dev", s.dev}, {"test", s.test}});
  }
  json data = {{"train", c.train}, {"dev", c.dev}, {"test", c.test},
               {"tasks", c.tasks}, {"schemes", c.schemes}, {"sizes", c.sizes},
               {"split_seed", c.split_seed}, {"silver", silver}};
  if (!c.schema.empty()) data["schema"] = c.schema;
  return {{"data", data}, {"variants", c.variants}, {"training", mtcrf::to_json(c.training)}};
}

// A run manifest is accepted as well; its "config" member is used.
ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  ExperimentConfig c;
  try {
    json j = json::parse(in);
    if (j.contains("config") && j.contains("output_dir")) j = j.at("config");
    const fs::path base = fs::absolute(path).parent_path();
    const json& d = j.at("data");
    c.train = resolve(base, d.at("train").get<std::string>());
    c.dev = resolve(base, d.at("dev").get<std::string>());
    c.test = resolve(base, d.at("test").get<std::string>());
    c.schema = resolve(base, d.value("schema", std::string()));
    c.tasks = d.value("tasks", c.tasks);
    c.schemes = d.value("schemes", c.schemes);
    c.sizes = d.value("sizes", c.sizes);
    c.split_seed = d.value("split_seed", c.split_seed);
    for (const auto& s : d.value("silver", json::array())) {
      c.silver.push_back({s.at("name").get<std::string>(), s.at("scheme").get<std::string>(),
                          resolve(base, s.at("train").get<std::string>()),
                          resolve(base, s.at("dev").get<std::string>()),
                          resolve(base, s.at("test").get<std::string>())});
    }
    c.variants = j.value("variants", c.variants);
    if (j.contains("training")) c.training = mtcrf::train_config_from_json(j.at("training"));
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const mtcrf::Error& e) {
    throw UsageError(path + ": " + e.detail());
  }
  return c;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> variants;
  std::string out;
  std::string seeds;
  std::string sizes;
  std::optional<int> threads;
  std::optional<int> max_epochs;
  std::optional<int> trials;
};

mtcrf::Corpus load_experiment_corpus(const ExperimentConfig& c) {
  std::vector<mtcrf::Scheme> schemes;
  for (const auto& s : c.schemes) schemes.push_back(mtcrf::parse_scheme(s));
  mtcrf::Corpus corpus;
  if (!c.schema.empty()) {
    std::ifstream in(c.schema);
    if (!in) throw mtcrf::Error(mtcrf::ErrorKind::kIo, "cannot open " + c.schema);
    corpus.schema = mtcrf::read_schema(in);
    corpus.train = mtcrf::read_conll(c.train, corpus.schema);
    corpus.dev = mtcrf::read_conll(c.dev, corpus.schema);
    corpus.test = mtcrf::read_conll(c.test, corpus.schema);
  } else {
    corpus = mtcrf::load_corpus(c.train, c.dev, c.test, c.tasks, schemes);
  }
  for (const auto& s : c.silver) {
    const auto train = mtcrf::read_silver_labels(s.train);
    const auto dev = mtcrf::read_silver_labels(s.dev);
    const auto test = mtcrf::read_silver_labels(s.test);
    std::vector<std::string> surfaces;
    for (const auto* part : {&train, &dev, &test})
      for (const auto& sentence : *part) surfaces.insert(surfaces.end(), sentence.begin(), sentence.end());
    const mtcrf::TaskSchema task =
        mtcrf::build_schema({s.name}, {surfaces}, {mtcrf::parse_scheme(s.scheme)}).task(0);
    const auto merged_train = mtcrf::merge_silver_labels(corpus.train_set(), train, task);
    corpus.dev = mtcrf::merge_silver_labels(corpus.dev_set(), dev, task).sentences;
    corpus.test = mtcrf::merge_silver_labels(corpus.test_set(), test, task).sentences;
    corpus.train = merged_train.sentences;
    corpus.schema = merged_train.schema;
  }
  return corpus;
}

fs::path run_directory(const fs::path& out, const mtcrf::RunRecord& r) {
  fs::path dir = out / "runs" / r.variant / r.split / r.setting.name() /
                 ("seed-" + std::to_string(r.seed));
  if (!r.task_scope.empty()) dir /= r.task_scope;
  return dir;
}

int cmd_train(const TrainArgs& a) {
  ExperimentConfig c = load_config(a.config);
  if (!a.variants.empty()) {
    c.variants.clear();
    for (const auto& v : a.variants)
      for (const auto& item : split_list(v)) c.variants.push_back(item);
  }
  if (!a.seeds.empty()) {
    c.training.seeds.clear();
    for (const auto& s : split_list(a.seeds)) {
      try {
        c.training.seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw UsageError("bad seed '" + s + "'");
      }
    }
  }
  if (!a.sizes.empty()) c.sizes = split_list(a.sizes);
  if (a.threads) c.training.threads = *a.threads;
  if (a.max_epochs) c.training.max_epochs = *a.max_epochs;
  if (a.trials) c.training.trials = *a.trials;

  std::vector<mtcrf::ModelKind> kinds;
  std::vector<mtcrf::SplitSize> sizes;
  try {
    for (const auto& v : c.variants) kinds.push_back(mtcrf::parse_model_kind(v));
    for (const auto& s : c.sizes) sizes.push_back(mtcrf::parse_split_size(s));
    c.training.validate();
  } catch (const mtcrf::Error& e) {
    throw UsageError(e.detail());
  }
  if (kinds.empty()) throw UsageError("no variants given");
  if (sizes.empty()) throw UsageError("no split sizes given");

  // The snapshot records the configured thread count; the cap only affects
  // scheduling, never results.
  mtcrf::TrainConfig effective = c.training;
  effective.threads = capped_threads(c.training.threads);

  const fs::path out(a.out);
  make_dir(out);
  json manifest = {{"config_path", fs::absolute(a.config).lexically_normal().string()},
                   {"config", to_json(c)},
                   {"data", {{"train", c.train}, {"dev", c.dev}, {"test", c.test}}},
                   {"output_dir", fs::absolute(out).lexically_normal().string()},
                   {"seeds", c.training.seeds},
                   {"variants", c.variants}};
  write_json(out / "manifest.json", manifest);

  const mtcrf::Corpus corpus = load_experiment_corpus(c);
  mtcrf::ProtocolInput input{corpus.schema, {}, corpus.dev, corpus.test};
  const auto subsets = mtcrf::sample_low_resource(corpus.train, {sizes, c.split_seed});
  for (std::size_t i = 0; i < sizes.size(); ++i) input.splits.push_back({sizes[i], subsets[i]});

  const auto observer = [&](const mtcrf::RunRecord& record, const mtcrf::Tagger& tagger) {
    const fs::path dir = run_directory(out, record);
    make_dir(dir);
    mtcrf::save_tagger(tagger, (dir / "model.bin").string());
    write_json(dir / "run_record.json", record.to_json());
    write_json(dir / "timings.json", {{"wall_seconds", record.wall_seconds}});
    std::cerr << dir.string() << ": best epoch " << record.best_epoch << ", dev F1 "
              << mtcrf::format_double(record.dev.mean_f1()) << '\n';
  };
  const mtcrf::ProtocolReport report =
      mtcrf::multi_seed_protocol(kinds, input, effective, observer);

  json settings = json::array();
  for (const auto& s : report.settings) {
    json runs = json::array();
    for (const auto& r : s.runs) runs.push_back(run_directory(fs::path(), r).string());
    settings.push_back({{"variant", s.variant}, {"split", s.split}, {"task", s.task_scope},
                        {"setting", s.setting.name()}, {"mean_dev_f1", s.mean_dev_f1},
                        {"selected", s.selected}, {"runs", runs}});
  }
  write_json(out / "protocol.json", {{"settings", settings}});
  const mtcrf::ComparisonTable table = report.table();
  {
    std::ofstream csv(out / "comparison.csv");
    mtcrf::write_comparison_csv(csv, table);
    std::ofstream curve(out / "learning_curve.csv");
    mtcrf::write_learning_curve_csv(curve, table);
    std::ofstream text(out / "comparison.txt");
    mtcrf::write_comparison_text(text, table);
  }
  mtcrf::write_comparison_text(std::cout, table);
  return kExitOk;
}

// ---- predict --------------------------------------------------------------

struct PredictArgs {
  std::string model, input, out;
  std::optional<int> threads;
};

int cmd_predict(const PredictArgs& a) {
  const mtcrf::Tagger tagger = mtcrf::load_tagger(a.model);
  const auto raw = mtcrf::read_conll_raw(a.input);
  std::vector<mtcrf::Sentence> input;
  const int J = tagger.num_tasks();
  if (!raw.empty() && raw.front().columns.empty()) {
    // Tokens only.
    for (const auto& r : raw) {
      mtcrf::Sentence s{r.tokens, {}};
      for (int j = 0; j < J; ++j) s.gold.emplace_back(r.tokens.size(), 0);
      input.push_back(std::move(s));
    }
  } else {
    if (!raw.empty() && static_cast<int>(raw.front().columns.size()) != J) {
      throw mtcrf::Error(mtcrf::ErrorKind::kColumnCountMismatch,
                         a.input + ": " + std::to_string(raw.front().columns.size()) +
                             " label columns, model has " + std::to_string(J) + " tasks");
    }
    input = mtcrf::encode_sentences(tagger.schema, raw);
  }
  const auto predicted = mtcrf::predict_sentences(tagger, input);
  const fs::path out(a.out);
  if (out.has_parent_path()) make_dir(out.parent_path());
  mtcrf::write_conll(a.out, tagger.schema, predicted);
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string gold, pred, schema, out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::ifstream in(a.schema);
  if (!in) throw mtcrf::Error(mtcrf::ErrorKind::kIo, "cannot open " + a.schema);
  const mtcrf::MultiTaskSchema schema = mtcrf::read_schema(in);
  const auto gold = mtcrf::read_conll(a.gold, schema);
  const auto pred = mtcrf::read_conll(a.pred, schema);
  const mtcrf::F1Report report = mtcrf::evaluate(schema, gold, pred);
  make_dir(a.out);
  std::ofstream csv(fs::path(a.out) / "report.csv");
  mtcrf::write_report_csv(csv, report);
  mtcrf::write_report_csv(std::cout, report);
  return kExitOk;
}

// ---- inspect-coupling -----------------------------------------------------

struct InspectArgs {
  std::string model, pair, out;
};

int cmd_inspect(const InspectArgs& a) {
  const auto names = split_list(a.pair);
  if (names.size() != 2) throw UsageError("--pair needs two task names: T1,T2");
  const mtcrf::Tagger tagger = mtcrf::load_tagger(a.model);
  make_dir(a.out);
  mtcrf::export_coupling_heatmap(tagger, names[0], names[1], a.out);
  return kExitOk;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string kind = "coupled";
  std::size_t train = 400;
  std::size_t dev = 100;
  std::size_t test = 100;
  std::uint64_t seed = 0;
  double noise = 0.1;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  const std::size_t total = a.train + a.dev + a.test;
  mtcrf::Dataset data;
  if (a.kind == "coupled") {
    mtcrf::CoupledCorpusConfig config;
    config.sentences = total;
    config.seed = a.seed;
    config.noise = a.noise;
    data = mtcrf::coupled_corpus(config);
  } else if (a.kind == "separable") {
    data = mtcrf::separable_corpus(total, a.seed);
  } else {
    throw UsageError("unknown corpus kind '" + a.kind + "'");
  }
  make_dir(a.out);
  const auto begin = data.sentences.begin();
  const auto dev_begin = begin + static_cast<std::ptrdiff_t>(a.train);
  const auto test_begin = dev_begin + static_cast<std::ptrdiff_t>(a.dev);
  const fs::path out(a.out);
  mtcrf::write_conll((out / "train.conll").string(), data.schema, {begin, dev_begin});
  mtcrf::write_conll((out / "dev.conll").string(), data.schema, {dev_begin, test_begin});
  mtcrf::write_conll((out / "test.conll").string(), data.schema, {test_begin, data.sentences.end()});
  std::ofstream schema(out / "schema.txt");
  mtcrf::write_schema(schema, data.schema);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task CRF sequence tagger"};
  app.require_subcommand(1);

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Sample nested low-resource training subsets");
  split_cmd->add_option("--train", split.train, "Training CoNLL file")->required();
  split_cmd->add_option("--sizes", split.sizes, "Comma-separated sizes; 'full' for all")
      ->capture_default_str();
  split_cmd->add_option("--seed", split.seed, "Sampling seed")->capture_default_str();
  split_cmd->add_option("--out", split.out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run the multi-seed training protocol");
  train_cmd->add_option("--config", train.config, "Experiment config (JSON) or run manifest")
      ->required();
  train_cmd->add_option("--variant", train.variants, "st, mh, fac, wfac or cfac; repeatable");
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--seeds", train.seeds, "Comma-separated seeds");
  train_cmd->add_option("--sizes", train.sizes, "Comma-separated split sizes");
  train_cmd->add_option("--threads", train.threads, "Gradient workers (capped by MTCRF_THREADS)");
  train_cmd->add_option("--max-epochs", train.max_epochs, "Epoch limit");
  train_cmd->add_option("--trials", train.trials, "Grid settings sampled per experiment");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Tag a CoNLL file");
  predict_cmd->add_option("--model", predict.model, "model.bin")->required();
  predict_cmd->add_option("--input", predict.input, "CoNLL input, tokens with or without labels")
      ->required();
  predict_cmd->add_option("--out", predict.out, "Output CoNLL file")->required();

  EvaluateArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against gold");
  eval_cmd->add_option("--gold", evaluate.gold, "Gold CoNLL file")->required();
  eval_cmd->add_option("--pred", evaluate.pred, "Predicted CoNLL file")->required();
  eval_cmd->add_option("--schema", evaluate.schema, "Schema file")->required();
  eval_cmd->add_option("--out", evaluate.out, "Output directory for report.csv")->required();

  InspectArgs inspect;
  auto* inspect_cmd =
      app.add_subcommand("inspect-coupling", "Export a coupling matrix as heatmap tables");
  inspect_cmd->add_option("--model", inspect.model, "model.bin")->required();
  inspect_cmd->add_option("--pair", inspect.pair, "T1,T2: columns are T1 labels, rows T2 labels")
      ->required();
  inspect_cmd->add_option("--out", inspect.out, "Output directory")->required();

  GenerateArgs generate;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic corpus");
  gen_cmd->add_option("--kind", generate.kind, "coupled or separable")->capture_default_str();
  gen_cmd->add_option("--train", generate.train, "Training sentences")->capture_default_str();
  gen_cmd->add_option("--dev", generate.dev, "Dev sentences")->capture_default_str();
  gen_cmd->add_option("--test", generate.test, "Test sentences")->capture_default_str();
  gen_cmd->add_option("--seed", generate.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--noise", generate.noise, "Label noise of the coupled corpus")
      ->capture_default_str();
  gen_cmd->add_option("--out", generate.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (split_cmd->parsed()) return cmd_split(split);
    if (train_cmd->parsed()) return cmd_train(train);
    if (predict_cmd->parsed()) return cmd_predict(predict);
    if (eval_cmd->parsed()) return cmd_evaluate(evaluate);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect);
    if (gen_cmd->parsed()) return cmd_generate(generate);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const mtcrf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
