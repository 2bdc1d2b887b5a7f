#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "mtcrf/corpus.hpp"
#include "mtcrf/eval.hpp"
#include "mtcrf/model.hpp"
#include "mtcrf/synthetic.hpp"
#include "support/support.hpp"

using namespace mtcrf;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mtcrf_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " " + MTCRF_CLI_PATH + " " + args + " >" +
                            path("stdout.txt") + " 2>" + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& file) const {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
  }

  // Synthetic data plus a small training config under the temp directory.
  void make_experiment(const std::string& kind, int epochs, double lr = 0.05,
                       const std::string& extra = "") {
    ASSERT_EQ(run("generate --kind " + kind + " --train 60 --dev 20 --test 20 --seed 3 --out " +
                  path("data")),
              0);
    write("cfg.json", R"({"data": {"train": "data/train.conll", "dev": "data/dev.conll",
      "test": "data/test.conll", "schema": "data/schema.txt"},
      "variants": ["mh"],
      "training": {"learning_rate": )" + std::to_string(lr) + R"(, "max_epochs": )" +
                          std::to_string(epochs) + R"(, "seeds": [1],)" + extra + R"(
        "grid": {"hidden_dim": [16], "batch_size": [4], "layers": [1]},
        "features": {"embedding_dim": 8, "char_ngram_orders": [2], "hash_buckets": 32,
                     "window": 1}}})");
  }

  fs::path dir_;
};

std::size_t count_sentences(const std::string& file) {
  return read_conll_raw(file).size();
}

std::vector<fs::path> find_files(const fs::path& root, const std::string& name) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().filename() == name) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_F(CliTest, SplitWritesNestedSizesDeterministically) {
  ASSERT_EQ(run("generate --train 2723 --dev 1 --test 1 --out " + path("data")), 0);
  ASSERT_EQ(run("split --train " + path("data/train.conll") + " --sizes 100,full --seed 4 --out " +
                path("a")),
            0);
  EXPECT_EQ(count_sentences(path("a/train_100.conll")), 100u);
  EXPECT_EQ(count_sentences(path("a/train_full.conll")), 2723u);
  ASSERT_EQ(run("split --train " + path("data/train.conll") + " --sizes 100,full --seed 4 --out " +
                path("b")),
            0);
  EXPECT_EQ(slurp(path("a/train_100.conll")), slurp(path("b/train_100.conll")));
  // The full split is a normalized copy of the input.
  EXPECT_EQ(slurp(path("a/train_full.conll")), slurp(path("data/train.conll")));
}

TEST_F(CliTest, SplitErrors) {
  ASSERT_EQ(run("generate --train 10 --dev 1 --test 1 --out " + path("data")), 0);
  EXPECT_EQ(run("split --train " + path("data/train.conll") + " --sizes 50 --out " + path("x")),
            3);
  EXPECT_EQ(run("split --train " + path("data/train.conll") + " --sizes ten --out " + path("x")),
            2);
  EXPECT_EQ(run("split --train " + path("missing.conll") + " --out " + path("x")), 3);
  EXPECT_EQ(run("split --out " + path("x")), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST_F(CliTest, TrainProducesModelRecordAndManifest) {
  make_experiment("coupled", 2);
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --out " + path("run")), 0)
      << slurp(path("stderr.txt"));
  EXPECT_TRUE(fs::exists(path("run/manifest.json")));
  const auto models = find_files(path("run"), "model.bin");
  const auto records = find_files(path("run"), "run_record.json");
  ASSERT_EQ(models.size(), 1u);
  ASSERT_EQ(records.size(), 1u);
  const auto record = nlohmann::json::parse(slurp(records[0].string()));
  EXPECT_EQ(record.at("variant"), "mh");
  EXPECT_EQ(record.at("epochs").size(), 2u);
  EXPECT_FALSE(record.contains("wall_seconds"));
  const Tagger t = load_tagger(models[0].string());
  EXPECT_EQ(t.kind, ModelKind::kMultiHead);
  EXPECT_FALSE(t.config_json.empty());
}

TEST_F(CliTest, SingleTaskTrainsOneModelPerTask) {
  make_experiment("coupled", 1);
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --variant st --out " + path("run")), 0);
  const auto models = find_files(path("run"), "model.bin");
  ASSERT_EQ(models.size(), 2u);
  std::set<std::string> tasks;
  for (const auto& m : models) {
    const Tagger t = load_tagger(m.string());
    ASSERT_EQ(t.num_tasks(), 1);
    tasks.insert(t.schema.task(0).name());
  }
  EXPECT_EQ(tasks, (std::set<std::string>{"span", "head"}));
}

TEST_F(CliTest, TrainIsDeterministicAndManifestReruns) {
  make_experiment("coupled", 2);
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --variant wfac --out " + path("r1")), 0);
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --variant wfac --out " + path("r2"),
                "MTCRF_THREADS=1"),
            0);
  ASSERT_EQ(run("train --config " + path("r1/manifest.json") + " --out " + path("r3")), 0);
  const auto a = find_files(path("r1"), "run_record.json");
  const auto b = find_files(path("r2"), "run_record.json");
  const auto c = find_files(path("r3"), "run_record.json");
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(b.size(), 1u);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(slurp(a[0].string()), slurp(b[0].string()));
  EXPECT_EQ(slurp(a[0].string()), slurp(c[0].string()));
  EXPECT_EQ(slurp(path("r1/comparison.csv")), slurp(path("r3/comparison.csv")));
}

TEST_F(CliTest, TrainExitCodes) {
  make_experiment("coupled", 1);
  EXPECT_EQ(run("train --config " + path("cfg.json") + " --variant xyz --out " + path("r")), 2);
  EXPECT_EQ(run("train --config " + path("nope.json") + " --out " + path("r")), 2);
  EXPECT_EQ(run("train --config " + path("cfg.json") + " --out " + path("r"), "MTCRF_THREADS=0"),
            2);
  write("broken.json", "{\"data\": ");
  EXPECT_EQ(run("train --config " + path("broken.json") + " --out " + path("r")), 2);
  std::ofstream(path("data/dev.conll"), std::ios::app) << "tok\tB-ZZZ\tO\n";
  EXPECT_EQ(run("train --config " + path("cfg.json") + " --out " + path("r")), 3);
}

TEST_F(CliTest, DivergentTrainingExitsWithNumericCode) {
  make_experiment("coupled", 3, 1e300, R"( "clip_norm": 1e300,)");
  EXPECT_EQ(run("train --config " + path("cfg.json") + " --out " + path("r")), 4)
      << slurp(path("stderr.txt"));
  EXPECT_NE(slurp(path("stderr.txt")).find("NonFiniteLoss"), std::string::npos);
  // The manifest precedes training.
  EXPECT_TRUE(fs::exists(path("r/manifest.json")));
}

TEST_F(CliTest, OverfitModelReproducesTrainingLabels) {
  make_experiment("separable", 30, 0.05);
  ASSERT_EQ(run("train --config " + path("cfg.json") + " --out " + path("run")), 0);
  const auto models = find_files(path("run"), "model.bin");
  ASSERT_EQ(models.size(), 1u);
  ASSERT_EQ(run("predict --model " + models[0].string() + " --input " + path("data/train.conll") +
                " --out " + path("pred.conll")),
            0);
  const auto schema = separable_schema();
  const auto report = evaluate(schema, read_conll(path("data/train.conll"), schema),
                               read_conll(path("pred.conll"), schema));
  EXPECT_GE(report.task("kind").accuracy(), 0.95);
}

TEST_F(CliTest, PredictEmptyInputAndSchemaMismatch) {
  std::mt19937_64 rng(1);
  const Tagger t = mtcrf::testing::random_tagger(ModelKind::kMultiHead, {2, 3}, rng);
  save_tagger(t, path("model.bin"));
  write("empty.conll", "");
  ASSERT_EQ(run("predict --model " + path("model.bin") + " --input " + path("empty.conll") +
                " --out " + path("out.conll")),
            0);
  EXPECT_EQ(slurp(path("out.conll")), "");
  write("three.conll", "ab\tL0\tL0\tL0\n");
  EXPECT_EQ(run("predict --model " + path("model.bin") + " --input " + path("three.conll") +
                " --out " + path("o.conll")),
            3);
  write("unknown.conll", "ab\tL0\tL9\n");
  EXPECT_EQ(run("predict --model " + path("model.bin") + " --input " + path("unknown.conll") +
                " --out " + path("o.conll")),
            3);
  write("junk.bin", "not a model");
  EXPECT_EQ(run("predict --model " + path("junk.bin") + " --input " + path("empty.conll") +
                " --out " + path("o.conll")),
            3);
}

TEST_F(CliTest, ZeroCouplingFactorialMatchesMultiHeadOutput) {
  std::mt19937_64 rng(2);
  const Tagger mh = mtcrf::testing::random_tagger(ModelKind::kMultiHead, {3, 4}, rng);
  Tagger fac = init_tagger(ModelKind::kFactorial, mh.schema,
                           mtcrf::testing::tiny_vocabulary(),
                           mh.model.base.featurizer.config, BpConfig{}, 0);
  fac.model.base = mh.model.base;
  fac.model.couplings.set_zero();
  save_tagger(mh, path("mh.bin"));
  save_tagger(fac, path("fac.bin"));
  std::ostringstream tokens;
  for (int s = 0; s < 20; ++s) {
    for (const auto& tok : mtcrf::testing::random_tokens(rng, 1 + s % 7)) tokens << tok << '\n';
    tokens << '\n';
  }
  write("tokens.conll", tokens.str());
  ASSERT_EQ(run("predict --model " + path("mh.bin") + " --input " + path("tokens.conll") +
                " --out " + path("mh.conll")),
            0);
  ASSERT_EQ(run("predict --model " + path("fac.bin") + " --input " + path("tokens.conll") +
                " --out " + path("fac.conll")),
            0);
  EXPECT_EQ(slurp(path("mh.conll")), slurp(path("fac.conll")));
  EXPECT_FALSE(slurp(path("mh.conll")).empty());
}

TEST_F(CliTest, EvaluateMatchesLibrary) {
  ASSERT_EQ(run("generate --train 10 --dev 10 --test 10 --seed 5 --out " + path("data")), 0);
  ASSERT_EQ(run("evaluate --gold " + path("data/test.conll") + " --pred " +
                path("data/test.conll") + " --schema " + path("data/schema.txt") + " --out " +
                path("same")),
            0);
  const std::string same = slurp(path("same/report.csv"));
  EXPECT_NE(same.find("span,BIO,1,1,1,1,"), std::string::npos);
  EXPECT_NE(same.find("head,BIO,1,1,1,1,"), std::string::npos);

  // Score a different partition as if it were predictions of the same length.
  const MultiTaskSchema schema = coupled_schema();
  const auto gold = read_conll(path("data/test.conll"), schema);
  std::mt19937_64 rng(6);
  auto pred = gold;
  for (auto& s : pred)
    for (auto& seq : s.gold)
      for (auto& y : seq)
        if (rng() % 3 == 0) y = 0;
  write_conll(path("pred.conll"), schema, pred);
  ASSERT_EQ(run("evaluate --gold " + path("data/test.conll") + " --pred " + path("pred.conll") +
                " --schema " + path("data/schema.txt") + " --out " + path("diff")),
            0);
  std::ostringstream expected;
  write_report_csv(expected, evaluate(schema, gold, pred));
  EXPECT_EQ(slurp(path("diff/report.csv")), expected.str());

  EXPECT_EQ(run("evaluate --gold " + path("data/test.conll") + " --pred " +
                path("data/dev.conll") + " --schema " + path("data/schema.txt") + " --out " +
                path("bad")),
            3);
}

TEST_F(CliTest, InspectCouplingExportsHeatmapsOrFails) {
  std::mt19937_64 rng(3);
  const Tagger fac = mtcrf::testing::random_tagger(ModelKind::kWeightedFactorial, {2, 3}, rng);
  save_tagger(fac, path("fac.bin"));
  ASSERT_EQ(run("inspect-coupling --model " + path("fac.bin") + " --pair t0,t1 --out " +
                path("hm")),
            0);
  std::ifstream pos(path("hm/coupling_pos.csv")), neg(path("hm/coupling_neg.csv"));
  const Heatmap p = read_heatmap_csv(pos), n = read_heatmap_csv(neg);
  const Eigen::MatrixXd view = fac.model.couplings.view(0, 1);
  EXPECT_TRUE(p.values + n.values == view);
  EXPECT_EQ(p.row_labels, fac.schema.task(1).labels());
  EXPECT_EQ(p.col_labels, fac.schema.task(0).labels());

  const Tagger mh = mtcrf::testing::random_tagger(ModelKind::kMultiHead, {2, 3}, rng);
  save_tagger(mh, path("mh.bin"));
  EXPECT_EQ(run("inspect-coupling --model " + path("mh.bin") + " --pair t0,t1 --out " +
                path("hm2")),
            3);
  EXPECT_EQ(run("inspect-coupling --model " + path("fac.bin") + " --pair t0 --out " +
                path("hm3")),
            2);
}
