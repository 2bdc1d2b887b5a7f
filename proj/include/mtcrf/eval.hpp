#pragma once

#include <compare>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtcrf/corpus.hpp"
#include "mtcrf/tagset.hpp"

namespace mtcrf {

struct Span {
  std::string type;
  int start = 0;  // inclusive
  int end = 0;    // exclusive

  auto operator<=>(const Span&) const = default;
};

struct SpanExtraction {
  std::vector<Span> spans;
  int repairs = 0;  // orphan I-X tags that opened a new span
};

// Maximal B-X I-X* runs. An I-X that does not continue a span of type X
// starts a new one and is counted as a repair.
SpanExtraction extract_spans(const TaskSchema& schema,
                             const LabelSequence& labels);

// Inverse of extract_spans on BIO-valid sequences.
LabelSequence render_spans(const TaskSchema& schema,
                           const std::vector<Span>& spans, int length);

struct PrfCounts {
  long true_positives = 0;
  long false_positives = 0;
  long false_negatives = 0;

  double precision() const;
  double recall() const;
  double f1() const;
  PrfCounts& operator+=(const PrfCounts& o);
};

// Exact-match counts for one sentence.
PrfCounts span_f1(const std::vector<Span>& gold, const std::vector<Span>& predicted);

struct TaskScores {
  std::string task;
  Scheme scheme = Scheme::kFlat;
  PrfCounts spans;       // BIO tasks
  PrfCounts tokens;      // non-"O" token-level counts
  long correct_tokens = 0;
  long total_tokens = 0;
  int repairs = 0;

  double precision() const;
  double recall() const;
  // Span F1 for BIO tasks, token-level micro F1 over non-"O" labels for FLAT.
  double f1() const;
  double accuracy() const;
};

struct F1Report {
  std::vector<TaskScores> tasks;

  const TaskScores& task(const std::string& name) const;
  // Mean of per-task f1(); used for model selection.
  double mean_f1() const;
};

// Micro-averaged over the whole partition.
F1Report evaluate(const MultiTaskSchema& schema,
                  const std::vector<Sentence>& gold,
                  const std::vector<Sentence>& predicted);

void write_report_csv(std::ostream& out, const F1Report& report);

// Coupling heatmaps: the positive and negative parts of a matrix.
struct Heatmap {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXd values;
};

void write_heatmap_csv(std::ostream& out, const Heatmap& heatmap);
Heatmap read_heatmap_csv(std::istream& in);

// Writes coupling_pos.csv (max(C,0)) and coupling_neg.csv (min(C,0)).
void export_heatmap_pair(const Eigen::MatrixXd& coupling,
                         const std::vector<std::string>& row_labels,
                         const std::vector<std::string>& col_labels,
                         const std::string& directory);

// Test F1 of one task in one run, the unit aggregated by compare_report.
struct ResultPoint {
  std::string variant;
  std::string split;       // "100", ..., "full"
  std::size_t split_order; // sentence count, for sorting
  std::string task;
  double f1 = 0.0;
};

struct ComparisonCell {
  std::string task;
  std::string split;
  std::size_t split_order = 0;
  std::string variant;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for one run
  int runs = 0;
};

struct ComparisonTable {
  std::vector<std::string> variants;  // column order
  std::vector<ComparisonCell> cells;  // sorted by task, split, variant

  const ComparisonCell* find(const std::string& task, const std::string& split,
                             const std::string& variant) const;
};

double mean_of(const std::vector<double>& values);
double sample_stddev(const std::vector<double>& values);

ComparisonTable compare_report(const std::vector<ResultPoint>& points);
void write_comparison_csv(std::ostream& out, const ComparisonTable& table);
void write_comparison_text(std::ostream& out, const ComparisonTable& table);
// Columns: variant, split_size, task, mean_f1, std_f1.
void write_learning_curve_csv(std::ostream& out, const ComparisonTable& table);

// Full-precision decimal rendering used by every CSV writer.
std::string format_double(double value);

}  // namespace mtcrf
