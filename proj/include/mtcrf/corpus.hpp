#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtcrf/tagset.hpp"

namespace mtcrf {

// Token sequence with one gold label sequence per task.
struct Sentence {
  std::vector<std::string> tokens;
  std::vector<LabelSequence> gold;

  int length() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Sentence&) const = default;
};

// One partition (train, dev or test) together with its schema.
struct Dataset {
  MultiTaskSchema schema;
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
  bool operator==(const Dataset&) const = default;
};

struct Corpus {
  MultiTaskSchema schema;
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;

  Dataset train_set() const { return {schema, train}; }
  Dataset dev_set() const { return {schema, dev}; }
  Dataset test_set() const { return {schema, test}; }
};

// Sentence as read from disk, before label encoding.
struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> columns;  // per label column
  int first_line = 0;  // 1-based line of the first token; 0 if unknown
};

// Reads `token<TAB>label...` lines; blank lines separate sentences. When
// `label_columns` is set, every line must carry exactly that many labels.
std::vector<RawSentence> read_conll_raw(
    std::istream& in, std::optional<int> label_columns = std::nullopt);
std::vector<RawSentence> read_conll_raw(
    const std::string& path, std::optional<int> label_columns = std::nullopt);

// Encodes raw sentences against a fixed schema (UnknownLabel on failure).
std::vector<Sentence> encode_sentences(const MultiTaskSchema& schema,
                                       const std::vector<RawSentence>& raw);

std::vector<Sentence> read_conll(std::istream& in,
                                 const MultiTaskSchema& schema);
std::vector<Sentence> read_conll(const std::string& path,
                                 const MultiTaskSchema& schema);

// Infers the schema from the file itself. Missing names default to
// task1..taskJ; missing schemes are detected from label prefixes.
Dataset read_conll_infer(const std::string& path,
                         std::vector<std::string> task_names = {},
                         std::vector<Scheme> schemes = {});

// Builds one schema over the union of labels seen in all three files.
Corpus load_corpus(const std::string& train_path, const std::string& dev_path,
                   const std::string& test_path,
                   std::vector<std::string> task_names = {},
                   std::vector<Scheme> schemes = {});

void write_conll(std::ostream& out, const MultiTaskSchema& schema,
                 const std::vector<Sentence>& sentences);
void write_conll(const std::string& path, const MultiTaskSchema& schema,
                 const std::vector<Sentence>& sentences);

// Size of a low-resource split; nullopt stands for the full training set.
using SplitSize = std::optional<std::size_t>;

struct SplitSpec {
  std::vector<SplitSize> sizes;
  std::uint64_t seed = 0;
};

std::string split_name(const SplitSize& size);
SplitSize parse_split_size(const std::string& text);

// One shuffle of the training indices; each size takes a prefix, so smaller
// subsets are nested in larger ones. Indices of every subset are returned in
// original corpus order. FULL yields every index.
std::vector<std::vector<std::size_t>> sample_low_resource_indices(
    std::size_t train_size, const SplitSpec& spec);

std::vector<std::vector<Sentence>> sample_low_resource(
    const std::vector<Sentence>& train, const SplitSpec& spec);

// Appends `task` as the last task; silver[i] labels sentence i.
Dataset merge_silver_labels(const Dataset& base,
                            const std::vector<std::vector<std::string>>& silver,
                            const TaskSchema& task);

// Reads a one-label-column silver file.
std::vector<std::vector<std::string>> read_silver_labels(
    const std::string& path);

// Restricts a dataset to a single task (for single-task baselines).
Dataset project_task(const Dataset& data, int task);

// Checks label ranges and lengths against the schema.
void check_conforms(const MultiTaskSchema& schema, const Sentence& sentence);

}  // namespace mtcrf
