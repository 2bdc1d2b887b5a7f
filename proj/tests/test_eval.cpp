#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <tuple>

#include <gtest/gtest.h>

#include "mtcrf/error.hpp"
#include "mtcrf/eval.hpp"
#include "mtcrf/model.hpp"
#include "support/support.hpp"

using namespace mtcrf;
namespace fs = std::filesystem;

namespace {

const TaskSchema& bio() {
  static const TaskSchema s("T", Scheme::kBio, {"O", "B-A", "B-MWE", "I-A", "I-MWE"});
  return s;
}

LabelSequence enc(const std::vector<std::string>& labels) {
  LabelSequence out;
  for (const auto& l : labels) out.push_back(bio().encode(l));
  return out;
}

LabelSequence random_valid_bio(std::mt19937_64& rng, int T) {
  std::vector<std::string> out;
  std::uniform_int_distribution<int> pick(0, 2);
  std::string open;
  for (int t = 0; t < T; ++t) {
    const int r = pick(rng);
    if (r == 0 || (r == 2 && open.empty())) {
      out.push_back(r == 0 ? "O" : "B-A");
      open = r == 0 ? "" : "A";
    } else if (r == 1) {
      open = (rng() % 2) ? "A" : "MWE";
      out.push_back("B-" + open);
    } else {
      out.push_back("I-" + open);
    }
  }
  return enc(out);
}

fs::path temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() /
                     ("mtcrf_eval_" + tag + std::to_string(std::random_device{}()));
  fs::create_directories(p);
  return p;
}

Heatmap read_map(const fs::path& path) {
  std::ifstream in(path);
  return read_heatmap_csv(in);
}

}  // namespace

TEST(ExtractSpans, Examples) {
  const auto a = extract_spans(bio(), enc({"O", "B-MWE", "I-MWE", "O"}));
  ASSERT_EQ(a.spans.size(), 1u);
  EXPECT_EQ(a.spans[0], (Span{"MWE", 1, 3}));
  EXPECT_EQ(a.repairs, 0);
  const auto b = extract_spans(bio(), enc({"B-A", "B-A"}));
  EXPECT_EQ(b.spans, (std::vector<Span>{{"A", 0, 1}, {"A", 1, 2}}));
}

TEST(ExtractSpans, OrphanInsideStartsRepairedSpan) {
  const auto r = extract_spans(bio(), enc({"O", "I-A", "I-A", "B-MWE", "I-A"}));
  EXPECT_EQ(r.spans, (std::vector<Span>{{"A", 1, 3}, {"MWE", 3, 4}, {"A", 4, 5}}));
  EXPECT_EQ(r.repairs, 2);
}

TEST(ExtractSpans, TilesNonOutsidePositionsAndRoundTrips) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const int T = 1 + static_cast<int>(rng() % 12);
    const LabelSequence seq = random_valid_bio(rng, T);
    ASSERT_TRUE(validate_bio(bio(), seq).empty());
    const auto r = extract_spans(bio(), seq);
    EXPECT_EQ(r.repairs, 0);
    std::vector<int> cover(T, 0);
    for (const auto& s : r.spans) {
      EXPECT_LT(s.start, s.end);
      for (int t = s.start; t < s.end; ++t) ++cover[t];
    }
    for (int t = 0; t < T; ++t) EXPECT_EQ(cover[t], seq[t] == 0 ? 0 : 1);
    EXPECT_EQ(render_spans(bio(), r.spans, T), seq);
  }
}

TEST(SpanF1, HandCounts) {
  const std::vector<Span> gold = {{"A", 0, 1}, {"A", 2, 4}};
  EXPECT_EQ(span_f1(gold, gold).f1(), 1.0);
  EXPECT_EQ(span_f1(gold, gold).precision(), 1.0);
  const PrfCounts none = span_f1(gold, {});
  EXPECT_EQ(none.precision(), 0.0);
  EXPECT_EQ(none.recall(), 0.0);
  EXPECT_EQ(none.f1(), 0.0);
  const PrfCounts mixed = span_f1(gold, {{"A", 0, 1}, {"A", 2, 3}});
  EXPECT_EQ(mixed.true_positives, 1);
  EXPECT_EQ(mixed.false_positives, 1);
  EXPECT_EQ(mixed.false_negatives, 1);
  EXPECT_EQ(mixed.precision(), 0.5);
  EXPECT_EQ(mixed.recall(), 0.5);
  EXPECT_EQ(mixed.f1(), 0.5);
  // Type must match as well as boundaries.
  EXPECT_EQ(span_f1(gold, {{"MWE", 0, 1}}).true_positives, 0);
}

TEST(SpanF1, HarmonicMeanAndRange) {
  PrfCounts c;
  c.true_positives = 3;
  c.false_positives = 5;
  c.false_negatives = 1;
  const double p = 3.0 / 8.0, r = 3.0 / 4.0;
  EXPECT_NEAR(c.f1(), 2 * p * r / (p + r), 1e-12);
}

TEST(Evaluate, MicroAveragesOverCorpus) {
  const MultiTaskSchema schema({bio(), TaskSchema("POS", Scheme::kFlat, {"O", "N", "V"})});
  // Sentence 1: 1 gold span, predicted exactly. Sentence 2: 3 gold spans, 1 found, 1 spurious.
  const std::vector<Sentence> gold = {
      {{"a", "b"}, {enc({"B-A", "O"}), {1, 0}}},
      {{"a", "b", "c", "d"}, {enc({"B-A", "B-A", "O", "B-MWE"}), {1, 2, 0, 0}}}};
  const std::vector<Sentence> pred = {
      {{"a", "b"}, {enc({"B-A", "O"}), {1, 1}}},
      {{"a", "b", "c", "d"}, {enc({"B-A", "O", "B-A", "O"}), {1, 2, 0, 2}}}};
  const F1Report r = evaluate(schema, gold, pred);
  const TaskScores& t = r.task("T");
  EXPECT_EQ(t.spans.true_positives, 2);
  EXPECT_EQ(t.spans.false_positives, 1);
  EXPECT_EQ(t.spans.false_negatives, 2);
  EXPECT_NEAR(t.f1(), 2.0 * (2.0 / 3.0) * 0.5 / (2.0 / 3.0 + 0.5), 1e-12);
  // Per-sentence F1 averaging would give (1 + 0.4) / 2 = 0.7 instead.
  EXPECT_GT(std::abs(t.f1() - 0.7), 1e-3);
  const TaskScores& pos = r.task("POS");
  EXPECT_EQ(pos.total_tokens, 6);
  EXPECT_EQ(pos.correct_tokens, 4);
  EXPECT_NEAR(pos.accuracy(), 4.0 / 6.0, 1e-12);
  EXPECT_EQ(pos.tokens.true_positives, 3);
  EXPECT_EQ(pos.tokens.false_positives, 2);
  EXPECT_EQ(pos.tokens.false_negatives, 0);
  EXPECT_NEAR(r.mean_f1(), (t.f1() + pos.f1()) / 2.0, 1e-12);
  EXPECT_EQ(evaluate(schema, gold, gold).task("T").f1(), 1.0);
}

TEST(Evaluate, MisalignedInputsThrow) {
  const MultiTaskSchema schema({bio()});
  const std::vector<Sentence> gold = {{{"a", "b"}, {enc({"B-A", "O"})}}};
  EXPECT_THROW(evaluate(schema, gold, {}), Error);
  EXPECT_THROW(evaluate(schema, gold, {{{"a"}, {enc({"O"})}}}), Error);
  EXPECT_THROW(evaluate(schema, gold, {{{"a", "x"}, {enc({"O", "O"})}}}), Error);
}

TEST(ReportCsv, HeaderAndRows) {
  const MultiTaskSchema schema({bio()});
  const std::vector<Sentence> gold = {{{"a", "b"}, {enc({"B-A", "O"})}}};
  std::ostringstream out;
  write_report_csv(out, evaluate(schema, gold, gold));
  EXPECT_EQ(out.str(), "task,scheme,precision,recall,f1,accuracy,tp,fp,fn,repairs\nT,BIO,1,1,1,1,1,0,0,0\n");
}

TEST(Heatmap, SignSplitAndExactReconstruction) {
  Eigen::MatrixXd C(2, 2);
  C << 1, -2, 0, 3;
  const fs::path dir = temp_dir("sign");
  export_heatmap_pair(C, {"r0", "r1"}, {"c0", "c1"}, dir.string());
  const Heatmap pos = read_map(dir / "coupling_pos.csv");
  const Heatmap neg = read_map(dir / "coupling_neg.csv");
  Eigen::MatrixXd pos_expected(2, 2), neg_expected(2, 2);
  pos_expected << 1, 0, 0, 3;
  neg_expected << 0, -2, 0, 0;
  EXPECT_TRUE(pos.values == pos_expected);
  EXPECT_TRUE(neg.values == neg_expected);
  EXPECT_EQ(pos.row_labels, (std::vector<std::string>{"r0", "r1"}));
  EXPECT_EQ(pos.col_labels, (std::vector<std::string>{"c0", "c1"}));
  fs::remove_all(dir);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const Eigen::MatrixXd R = mtcrf::testing::random_matrix(3, 4, rng, 1e3 * (i + 1));
    const fs::path d = temp_dir("rt");
    export_heatmap_pair(R, {"a", "b", "c"}, {"w", "x", "y", "z"}, d.string());
    const Eigen::MatrixXd sum =
        read_map(d / "coupling_pos.csv").values + read_map(d / "coupling_neg.csv").values;
    EXPECT_TRUE(sum == R);
    fs::remove_all(d);
  }
}

TEST(Heatmap, ZeroCouplingAndModelExport) {
  std::mt19937_64 rng(3);
  Tagger t = mtcrf::testing::random_tagger(ModelKind::kFactorial, {2, 3}, rng);
  t.model.couplings.set_zero();
  const fs::path dir = temp_dir("zero");
  export_coupling_heatmap(t, "t0", "t1", dir.string());
  const Heatmap pos = read_map(dir / "coupling_pos.csv");
  EXPECT_TRUE(pos.values.isZero(0.0));
  EXPECT_TRUE(read_map(dir / "coupling_neg.csv").values.isZero(0.0));
  // Rows are the other task's labels.
  EXPECT_EQ(pos.values.rows(), 3);
  EXPECT_EQ(pos.values.cols(), 2);
  fs::remove_all(dir);

  Tagger mh = mtcrf::testing::random_tagger(ModelKind::kMultiHead, {2, 3}, rng);
  try {
    export_coupling_heatmap(mh, "t0", "t1", dir.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissingCoupling);
  }
  fs::remove_all(dir);
}

TEST(Heatmap, MalformedCsvThrows) {
  std::istringstream bad("label,a\nr,notanumber\n");
  EXPECT_THROW(read_heatmap_csv(bad), Error);
}

TEST(Compare, SingleRecordHasZeroStd) {
  const auto table = compare_report({{"mh", "100", 100, "T", 0.8}});
  ASSERT_EQ(table.cells.size(), 1u);
  EXPECT_EQ(table.cells[0].mean, 0.8);
  EXPECT_EQ(table.cells[0].stddev, 0.0);
  EXPECT_EQ(table.variants, std::vector<std::string>{"mh"});
}

TEST(Compare, IdenticalMetricsGiveEqualCells) {
  std::vector<ResultPoint> pts;
  for (const char* v : {"wfac", "st", "mh"})
    for (double f : {0.5, 0.7}) pts.push_back({v, "full", 900, "T", f});
  const auto table = compare_report(pts);
  EXPECT_EQ(table.variants, (std::vector<std::string>{"st", "mh", "wfac"}));
  EXPECT_EQ(table.find("T", "full", "st")->mean, table.find("T", "full", "wfac")->mean);
  EXPECT_EQ(table.find("T", "full", "st")->stddev, table.find("T", "full", "mh")->stddev);
}

TEST(Compare, CellsMatchRecomputedStatistics) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> f1(0.0, 1.0);
  std::vector<ResultPoint> pts;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> raw;
  for (const char* v : {"st", "mh", "fac", "wfac", "cfac"}) {
    for (const auto& [split, order] : {std::pair{"100", 100}, std::pair{"full", 2723}}) {
      for (const char* task : {"A", "B"}) {
        for (int seed = 0; seed < 5; ++seed) {
          const double f = f1(rng);
          pts.push_back({v, split, static_cast<std::size_t>(order), task, f});
          raw[{task, split, v}].push_back(f);
        }
      }
    }
  }
  const auto table = compare_report(pts);
  EXPECT_EQ(table.cells.size(), 20u);
  for (const auto& [key, values] : raw) {
    const auto* cell = table.find(std::get<0>(key), std::get<1>(key), std::get<2>(key));
    ASSERT_NE(cell, nullptr);
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    EXPECT_EQ(cell->mean, mean);
    EXPECT_EQ(cell->stddev, std::sqrt(ss / (values.size() - 1)));
    EXPECT_EQ(cell->runs, 5);
  }
  std::ostringstream csv, text, curve;
  write_comparison_csv(csv, table);
  write_comparison_text(text, table);
  write_learning_curve_csv(curve, table);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "task,split,st_mean,st_std,mh_mean,mh_std,fac_mean,fac_std,wfac_mean,wfac_std,"
            "cfac_mean,cfac_std");
  EXPECT_EQ(curve.str().substr(0, curve.str().find('\n')), "variant,split_size,task,mean_f1,std_f1");
  const std::string curve_text = curve.str();
  EXPECT_EQ(std::count(curve_text.begin(), curve_text.end(), '\n'), 21);
  EXPECT_NE(text.str().find("WFAC"), std::string::npos);
}

TEST(FormatDouble, RoundTrips) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1e4);
  for (int i = 0; i < 1000; ++i) {
    const double v = n(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
}
