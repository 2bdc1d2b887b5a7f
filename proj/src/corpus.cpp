#include "mtcrf/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "mtcrf/error.hpp"

namespace mtcrf {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  return in;
}

}  // namespace

std::vector<RawSentence> read_conll_raw(std::istream& in,
                                        std::optional<int> label_columns) {
  std::vector<RawSentence> sentences;
  RawSentence current;
  std::string line;
  int line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) sentences.push_back(std::move(current));
    current = RawSentence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    auto fields = split_tabs(line);
    const int labels = static_cast<int>(fields.size()) - 1;
    if (!label_columns) label_columns = labels;
    if (labels != *label_columns || labels < 0) {
      throw Error(ErrorKind::kColumnCountMismatch,
                  "line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " columns, expected " +
                      std::to_string(*label_columns + 1));
    }
    for (const auto& f : fields) {
      if (f.empty()) {
        throw Error(ErrorKind::kFormat,
                    "line " + std::to_string(line_no) + " has an empty field");
      }
    }
    if (current.columns.empty()) {
      current.columns.resize(labels);
      current.first_line = line_no;
    }
    current.tokens.push_back(fields[0]);
    for (int c = 0; c < labels; ++c) {
      current.columns[c].push_back(std::move(fields[c + 1]));
    }
  }
  flush();
  return sentences;
}

std::vector<RawSentence> read_conll_raw(const std::string& path,
                                        std::optional<int> label_columns) {
  auto in = open_input(path);
  try {
    return read_conll_raw(in, label_columns);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.detail());
  }
}

std::vector<Sentence> encode_sentences(const MultiTaskSchema& schema,
                                       const std::vector<RawSentence>& raw) {
  std::vector<Sentence> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const RawSentence& r = raw[i];
    if (static_cast<int>(r.columns.size()) != schema.num_tasks()) {
      throw Error(ErrorKind::kColumnCountMismatch,
                  "sentence " + std::to_string(i) + " has " +
                      std::to_string(r.columns.size()) +
                      " label columns, schema has " +
                      std::to_string(schema.num_tasks()));
    }
    Sentence s;
    s.tokens = r.tokens;
    for (int j = 0; j < schema.num_tasks(); ++j) {
      LabelSequence seq;
      seq.reserve(r.tokens.size());
      for (std::size_t t = 0; t < r.columns[j].size(); ++t) {
        try {
          seq.push_back(schema.task(j).encode(r.columns[j][t]));
        } catch (const Error& e) {
          const std::string where =
              r.first_line > 0
                  ? "line " + std::to_string(r.first_line + static_cast<int>(t))
                  : "sentence " + std::to_string(i);
          throw Error(ErrorKind::kUnknownLabel, where + ": " + e.detail());
        }
      }
      s.gold.push_back(std::move(seq));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sentence> read_conll(std::istream& in,
                                 const MultiTaskSchema& schema) {
  return encode_sentences(schema, read_conll_raw(in, schema.num_tasks()));
}

std::vector<Sentence> read_conll(const std::string& path,
                                 const MultiTaskSchema& schema) {
  return encode_sentences(schema, read_conll_raw(path, schema.num_tasks()));
}

namespace {

MultiTaskSchema infer_schema(const std::vector<const RawSentence*>& raw,
                             int columns, std::vector<std::string> names,
                             std::vector<Scheme> schemes) {
  if (columns <= 0) {
    throw Error(ErrorKind::kEmptyTask, "no label columns to infer from");
  }
  if (names.empty()) {
    for (int j = 0; j < columns; ++j) names.push_back("task" + std::to_string(j + 1));
  }
  if (static_cast<int>(names.size()) != columns) {
    throw Error(ErrorKind::kColumnCountMismatch,
                std::to_string(names.size()) + " task names for " +
                    std::to_string(columns) + " label columns");
  }
  std::vector<std::vector<std::string>> labels(columns);
  for (const RawSentence* r : raw) {
    for (int j = 0; j < columns; ++j) {
      labels[j].insert(labels[j].end(), r->columns[j].begin(),
                       r->columns[j].end());
    }
  }
  if (schemes.empty()) {
    for (int j = 0; j < columns; ++j) schemes.push_back(detect_scheme(labels[j]));
  }
  if (static_cast<int>(schemes.size()) != columns) {
    throw Error(ErrorKind::kColumnCountMismatch,
                "scheme count does not match label columns");
  }
  return build_schema(names, labels, schemes);
}

int column_count(const std::vector<RawSentence>& raw) {
  return raw.empty() ? -1 : static_cast<int>(raw.front().columns.size());
}

}  // namespace

Dataset read_conll_infer(const std::string& path,
                         std::vector<std::string> task_names,
                         std::vector<Scheme> schemes) {
  auto raw = read_conll_raw(path);
  std::vector<const RawSentence*> ptrs;
  for (const auto& r : raw) ptrs.push_back(&r);
  int columns = column_count(raw);
  if (columns < 0) columns = static_cast<int>(task_names.size());
  auto schema = infer_schema(ptrs, columns, std::move(task_names),
                             std::move(schemes));
  return {schema, encode_sentences(schema, raw)};
}

Corpus load_corpus(const std::string& train_path, const std::string& dev_path,
                   const std::string& test_path,
                   std::vector<std::string> task_names,
                   std::vector<Scheme> schemes) {
  auto train = read_conll_raw(train_path);
  const int columns = column_count(train);
  if (columns < 0) {
    throw Error(ErrorKind::kFormat, train_path + " contains no sentences");
  }
  auto dev = read_conll_raw(dev_path, columns);
  auto test = read_conll_raw(test_path, columns);
  std::vector<const RawSentence*> all;
  for (const auto* part : {&train, &dev, &test}) {
    for (const auto& r : *part) all.push_back(&r);
  }
  Corpus corpus;
  corpus.schema = infer_schema(all, columns, std::move(task_names),
                               std::move(schemes));
  corpus.train = encode_sentences(corpus.schema, train);
  corpus.dev = encode_sentences(corpus.schema, dev);
  corpus.test = encode_sentences(corpus.schema, test);
  return corpus;
}

void write_conll(std::ostream& out, const MultiTaskSchema& schema,
                 const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) {
    check_conforms(schema, s);
    for (int t = 0; t < s.length(); ++t) {
      out << s.tokens[t];
      for (int j = 0; j < schema.num_tasks(); ++j) {
        out << '\t' << schema.task(j).decode(s.gold[j][t]);
      }
      out << '\n';
    }
    out << '\n';
  }
}

void write_conll(const std::string& path, const MultiTaskSchema& schema,
                 const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  write_conll(out, schema, sentences);
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

std::string split_name(const SplitSize& size) {
  return size ? std::to_string(*size) : std::string("full");
}

SplitSize parse_split_size(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "full") return std::nullopt;
  std::size_t pos = 0;
  long long value = -1;
  try {
    value = std::stoll(lower, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != lower.size() || value <= 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "split size must be a positive integer or 'full': '" + text +
                    "'");
  }
  return static_cast<std::size_t>(value);
}

std::vector<std::vector<std::size_t>> sample_low_resource_indices(
    std::size_t train_size, const SplitSpec& spec) {
  for (const auto& size : spec.sizes) {
    if (size && (*size == 0 || *size > train_size)) {
      throw Error(ErrorKind::kSizeExceedsCorpus,
                  "split of " + std::to_string(*size) + " from " +
                      std::to_string(train_size) + " training sentences");
    }
  }
  std::vector<std::size_t> order(train_size);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> subsets;
  for (const auto& size : spec.sizes) {
    std::vector<std::size_t> subset;
    if (size) {
      subset.assign(order.begin(), order.begin() + *size);
      std::sort(subset.begin(), subset.end());
    } else {
      subset.resize(train_size);
      std::iota(subset.begin(), subset.end(), 0);
    }
    subsets.push_back(std::move(subset));
  }
  return subsets;
}

std::vector<std::vector<Sentence>> sample_low_resource(
    const std::vector<Sentence>& train, const SplitSpec& spec) {
  std::vector<std::vector<Sentence>> out;
  for (const auto& idx : sample_low_resource_indices(train.size(), spec)) {
    std::vector<Sentence> subset;
    subset.reserve(idx.size());
    for (auto i : idx) subset.push_back(train[i]);
    out.push_back(std::move(subset));
  }
  return out;
}

Dataset merge_silver_labels(const Dataset& base,
                            const std::vector<std::vector<std::string>>& silver,
                            const TaskSchema& task) {
  if (silver.size() != base.sentences.size()) {
    throw Error(ErrorKind::kAlignmentMismatch,
                "silver file has " + std::to_string(silver.size()) +
                    " sentences, corpus has " +
                    std::to_string(base.sentences.size()));
  }
  std::vector<TaskSchema> tasks = base.schema.tasks();
  tasks.push_back(task);
  Dataset merged{MultiTaskSchema(std::move(tasks)), base.sentences};
  for (std::size_t i = 0; i < silver.size(); ++i) {
    Sentence& s = merged.sentences[i];
    if (silver[i].size() != s.tokens.size()) {
      throw Error(ErrorKind::kAlignmentMismatch,
                  "sentence " + std::to_string(i) + " has " +
                      std::to_string(s.tokens.size()) + " tokens but " +
                      std::to_string(silver[i].size()) + " silver labels");
    }
    LabelSequence seq;
    for (const auto& surface : silver[i]) seq.push_back(task.encode(surface));
    s.gold.push_back(std::move(seq));
  }
  return merged;
}

std::vector<std::vector<std::string>> read_silver_labels(
    const std::string& path) {
  std::vector<std::vector<std::string>> out;
  for (auto& r : read_conll_raw(path, 1)) out.push_back(std::move(r.columns[0]));
  return out;
}

Dataset project_task(const Dataset& data, int task) {
  Dataset out{MultiTaskSchema({data.schema.task(task)}), {}};
  out.sentences.reserve(data.sentences.size());
  for (const auto& s : data.sentences) {
    out.sentences.push_back(Sentence{s.tokens, {s.gold.at(task)}});
  }
  return out;
}

void check_conforms(const MultiTaskSchema& schema, const Sentence& sentence) {
  if (sentence.tokens.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "sentence without tokens");
  }
  if (static_cast<int>(sentence.gold.size()) != schema.num_tasks()) {
    throw Error(ErrorKind::kShapeMismatch,
                "sentence has " + std::to_string(sentence.gold.size()) +
                    " label sequences for " +
                    std::to_string(schema.num_tasks()) + " tasks");
  }
  for (int j = 0; j < schema.num_tasks(); ++j) {
    if (sentence.gold[j].size() != sentence.tokens.size()) {
      throw Error(ErrorKind::kShapeMismatch,
                  "label sequence length differs from token count");
    }
    for (LabelId y : sentence.gold[j]) {
      if (y < 0 || y >= schema.task(j).size()) {
        throw Error(ErrorKind::kLabelOutOfRange,
                    "label id " + std::to_string(y) + " for task " +
                        schema.task(j).name());
      }
    }
  }
}

}  // namespace mtcrf
