#include "mtcrf/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "mtcrf/error.hpp"

namespace mtcrf {

SpanExtraction extract_spans(const TaskSchema& schema,
                             const LabelSequence& labels) {
  SpanExtraction out;
  if (schema.scheme() != Scheme::kBio) return out;
  const int T = static_cast<int>(labels.size());
  int open = -1;
  std::string open_type;
  auto close = [&](int end) {
    if (open >= 0) out.spans.push_back({open_type, open, end});
    open = -1;
  };
  for (int t = 0; t < T; ++t) {
    const LabelId y = labels[t];
    switch (schema.part(y)) {
      case TaskSchema::Part::kBegin:
        close(t);
        open = t;
        open_type = schema.type(y);
        break;
      case TaskSchema::Part::kInside:
        if (open < 0 || open_type != schema.type(y)) {
          close(t);
          open = t;
          open_type = schema.type(y);
          ++out.repairs;
        }
        break;
      default:
        close(t);
        break;
    }
  }
  close(T);
  return out;
}

LabelSequence render_spans(const TaskSchema& schema,
                           const std::vector<Span>& spans, int length) {
  LabelSequence out(length, schema.encode("O"));
  for (const auto& s : spans) {
    if (s.start < 0 || s.end > length || s.start >= s.end) {
      throw Error(ErrorKind::kInvalidArgument, "span out of range");
    }
    out[s.start] = schema.encode("B-" + s.type);
    for (int t = s.start + 1; t < s.end; ++t) out[t] = schema.encode("I-" + s.type);
  }
  return out;
}

double PrfCounts::precision() const {
  const long denom = true_positives + false_positives;
  return denom == 0 ? 0.0 : static_cast<double>(true_positives) / denom;
}

double PrfCounts::recall() const {
  const long denom = true_positives + false_negatives;
  return denom == 0 ? 0.0 : static_cast<double>(true_positives) / denom;
}

double PrfCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

PrfCounts& PrfCounts::operator+=(const PrfCounts& o) {
  true_positives += o.true_positives;
  false_positives += o.false_positives;
  false_negatives += o.false_negatives;
  return *this;
}

PrfCounts span_f1(const std::vector<Span>& gold,
                  const std::vector<Span>& predicted) {
  std::vector<Span> g = gold;
  std::vector<Span> p = predicted;
  std::sort(g.begin(), g.end());
  std::sort(p.begin(), p.end());
  std::vector<Span> common;
  std::set_intersection(g.begin(), g.end(), p.begin(), p.end(),
                        std::back_inserter(common));
  PrfCounts c;
  c.true_positives = static_cast<long>(common.size());
  c.false_positives = static_cast<long>(p.size() - common.size());
  c.false_negatives = static_cast<long>(g.size() - common.size());
  return c;
}

double TaskScores::precision() const {
  return scheme == Scheme::kBio ? spans.precision() : tokens.precision();
}
double TaskScores::recall() const {
  return scheme == Scheme::kBio ? spans.recall() : tokens.recall();
}
double TaskScores::f1() const {
  return scheme == Scheme::kBio ? spans.f1() : tokens.f1();
}
double TaskScores::accuracy() const {
  return total_tokens == 0 ? 0.0
                           : static_cast<double>(correct_tokens) / total_tokens;
}

const TaskScores& F1Report::task(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.task == name) return t;
  }
  throw Error(ErrorKind::kInvalidArgument, "no scores for task " + name);
}

double F1Report::mean_f1() const {
  if (tasks.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : tasks) s += t.f1();
  return s / static_cast<double>(tasks.size());
}

F1Report evaluate(const MultiTaskSchema& schema,
                  const std::vector<Sentence>& gold,
                  const std::vector<Sentence>& predicted) {
  if (gold.size() != predicted.size()) {
    throw Error(ErrorKind::kAlignmentMismatch,
                std::to_string(gold.size()) + " gold vs " +
                    std::to_string(predicted.size()) + " predicted sentences");
  }
  F1Report report;
  for (int j = 0; j < schema.num_tasks(); ++j) {
    const TaskSchema& task = schema.task(j);
    TaskScores scores;
    scores.task = task.name();
    scores.scheme = task.scheme();
    const LabelId outside = task.contains("O") ? task.encode("O") : -1;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (gold[i].tokens.size() != predicted[i].tokens.size()) {
        throw Error(ErrorKind::kAlignmentMismatch,
                    "sentence " + std::to_string(i) + " differs in length");
      }
      if (gold[i].tokens != predicted[i].tokens) {
        throw Error(ErrorKind::kAlignmentMismatch,
                    "sentence " + std::to_string(i) + " has different tokens");
      }
      check_conforms(schema, gold[i]);
      check_conforms(schema, predicted[i]);
      const LabelSequence& g = gold[i].gold[j];
      const LabelSequence& p = predicted[i].gold[j];
      for (std::size_t t = 0; t < g.size(); ++t) {
        ++scores.total_tokens;
        if (g[t] == p[t]) ++scores.correct_tokens;
        if (g[t] != outside && g[t] == p[t]) ++scores.tokens.true_positives;
        if (p[t] != outside && g[t] != p[t]) ++scores.tokens.false_positives;
        if (g[t] != outside && g[t] != p[t]) ++scores.tokens.false_negatives;
      }
      if (task.scheme() == Scheme::kBio) {
        const auto gs = extract_spans(task, g);
        const auto ps = extract_spans(task, p);
        scores.spans += span_f1(gs.spans, ps.spans);
        scores.repairs += ps.repairs;
      }
    }
    report.tasks.push_back(std::move(scores));
  }
  return report;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_report_csv(std::ostream& out, const F1Report& report) {
  out << "task,scheme,precision,recall,f1,accuracy,tp,fp,fn,repairs\n";
  for (const auto& t : report.tasks) {
    const PrfCounts& c = t.scheme == Scheme::kBio ? t.spans : t.tokens;
    out << t.task << ',' << to_string(t.scheme) << ','
        << format_double(t.precision()) << ',' << format_double(t.recall())
        << ',' << format_double(t.f1()) << ',' << format_double(t.accuracy())
        << ',' << c.true_positives << ',' << c.false_positives << ','
        << c.false_negatives << ',' << t.repairs << '\n';
  }
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kFormat, "not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

void write_heatmap_csv(std::ostream& out, const Heatmap& h) {
  out << "label";
  for (const auto& c : h.col_labels) out << ',' << c;
  out << '\n';
  for (Eigen::Index r = 0; r < h.values.rows(); ++r) {
    out << h.row_labels.at(r);
    for (Eigen::Index c = 0; c < h.values.cols(); ++c) {
      out << ',' << format_double(h.values(r, c));
    }
    out << '\n';
  }
}

Heatmap read_heatmap_csv(std::istream& in) {
  Heatmap h;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kFormat, "empty heatmap");
  auto header = split_commas(line);
  h.col_labels.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_commas(line);
    if (cells.size() != h.col_labels.size() + 1) {
      throw Error(ErrorKind::kFormat, "ragged heatmap row");
    }
    h.row_labels.push_back(cells[0]);
    std::vector<double> values;
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_double(cells[c]));
    rows.push_back(std::move(values));
  }
  h.values.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(h.col_labels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) h.values(r, c) = rows[r][c];
  }
  return h;
}

void export_heatmap_pair(const Eigen::MatrixXd& coupling,
                         const std::vector<std::string>& row_labels,
                         const std::vector<std::string>& col_labels,
                         const std::string& directory) {
  if (static_cast<Eigen::Index>(row_labels.size()) != coupling.rows() ||
      static_cast<Eigen::Index>(col_labels.size()) != coupling.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "heatmap labels do not match matrix");
  }
  std::filesystem::create_directories(directory);
  const Heatmap pos{row_labels, col_labels, coupling.cwiseMax(0.0)};
  const Heatmap neg{row_labels, col_labels, coupling.cwiseMin(0.0)};
  for (const auto& [name, map] :
       {std::pair{"coupling_pos.csv", &pos}, std::pair{"coupling_neg.csv", &neg}}) {
    const std::string path = (std::filesystem::path(directory) / name).string();
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
    write_heatmap_csv(out, *map);
  }
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

const ComparisonCell* ComparisonTable::find(const std::string& task,
                                            const std::string& split,
                                            const std::string& variant) const {
  for (const auto& c : cells) {
    if (c.task == task && c.split == split && c.variant == variant) return &c;
  }
  return nullptr;
}

namespace {

int variant_rank(const std::string& v) {
  static const std::vector<std::string> order = {"st", "mh", "fac", "wfac", "cfac"};
  const auto it = std::find(order.begin(), order.end(), v);
  return static_cast<int>(it - order.begin());
}

}  // namespace

ComparisonTable compare_report(const std::vector<ResultPoint>& points) {
  using Key = std::tuple<std::string, std::size_t, std::string, int, std::string>;
  std::map<Key, std::vector<double>> groups;
  std::map<Key, std::string> split_names;
  ComparisonTable table;
  for (const auto& p : points) {
    Key key{p.task, p.split_order, p.split, variant_rank(p.variant), p.variant};
    groups[key].push_back(p.f1);
    if (std::find(table.variants.begin(), table.variants.end(), p.variant) ==
        table.variants.end()) {
      table.variants.push_back(p.variant);
    }
  }
  std::sort(table.variants.begin(), table.variants.end(),
            [](const auto& a, const auto& b) {
              return std::make_pair(variant_rank(a), a) <
                     std::make_pair(variant_rank(b), b);
            });
  for (const auto& [key, values] : groups) {
    ComparisonCell cell;
    cell.task = std::get<0>(key);
    cell.split_order = std::get<1>(key);
    cell.split = std::get<2>(key);
    cell.variant = std::get<4>(key);
    cell.mean = mean_of(values);
    cell.stddev = sample_stddev(values);
    cell.runs = static_cast<int>(values.size());
    table.cells.push_back(std::move(cell));
  }
  return table;
}

namespace {

// Distinct (task, split) rows in table order.
std::vector<std::pair<std::string, std::string>> table_rows(
    const ComparisonTable& table) {
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& c : table.cells) {
    std::pair row{c.task, c.split};
    if (rows.empty() || rows.back() != row) rows.push_back(row);
  }
  return rows;
}

}  // namespace

void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "task,split";
  for (const auto& v : table.variants) out << ',' << v << "_mean," << v << "_std";
  out << '\n';
  for (const auto& [task, split] : table_rows(table)) {
    out << task << ',' << split;
    for (const auto& v : table.variants) {
      const ComparisonCell* c = table.find(task, split, v);
      if (c) {
        out << ',' << format_double(c->mean) << ',' << format_double(c->stddev);
      } else {
        out << ",,";
      }
    }
    out << '\n';
  }
}

void write_comparison_text(std::ostream& out, const ComparisonTable& table) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Task", "# Train"};
  for (const auto& v : table.variants) {
    std::string upper = v;
    std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
    header.push_back(upper);
  }
  grid.push_back(header);
  for (const auto& [task, split] : table_rows(table)) {
    std::vector<std::string> row = {task, split};
    for (const auto& v : table.variants) {
      const ComparisonCell* c = table.find(task, split, v);
      if (!c) {
        row.emplace_back("-");
        continue;
      }
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(2) << 100.0 * c->mean << " ± "
           << 100.0 * c->stddev;
      row.push_back(cell.str());
    }
    grid.push_back(std::move(row));
  }
  // "±" is two bytes but one column wide.
  auto width = [](const std::string& s) {
    return s.size() - (s.find("±") != std::string::npos ? 1 : 0);
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  }
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << "  ";
      const std::size_t pad = widths[c] - width(row[c]);
      if (c < 2) {
        out << row[c] << std::string(pad, ' ');
      } else {
        out << std::string(pad, ' ') << row[c];
      }
    }
    out << '\n';
  }
}

void write_learning_curve_csv(std::ostream& out, const ComparisonTable& table) {
  out << "variant,split_size,task,mean_f1,std_f1\n";
  for (const auto& v : table.variants) {
    for (const auto& c : table.cells) {
      if (c.variant != v) continue;
      out << v << ',' << c.split_order << ',' << c.task << ','
          << format_double(c.mean) << ',' << format_double(c.stddev) << '\n';
    }
  }
}

}  // namespace mtcrf
