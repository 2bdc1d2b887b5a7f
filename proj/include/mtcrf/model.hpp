#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtcrf/corpus.hpp"
#include "mtcrf/factorial.hpp"

namespace mtcrf {

// Model families compared by the experiments: single-task, multi-head,
// factorial, weighted factorial and cascaded (weighted) factorial.
enum class ModelKind {
  kSingleTask,
  kMultiHead,
  kFactorial,
  kWeightedFactorial,
  kCascadedFactorial,
};

const char* to_string(ModelKind kind);  // "st", "mh", "fac", "wfac", "cfac"
ModelKind parse_model_kind(const std::string& text);
bool has_couplings(ModelKind kind);

// A trained or trainable tagger with everything needed to decode raw text.
// ST and MH taggers carry an empty coupling set.
struct Tagger {
  ModelKind kind = ModelKind::kMultiHead;
  MultiTaskSchema schema;
  FactorialModel model;
  std::string config_json;  // snapshot of the producing configuration

  int num_tasks() const { return schema.num_tasks(); }
};

Tagger init_tagger(ModelKind kind, const MultiTaskSchema& schema,
                   const std::vector<std::string>& vocabulary,
                   const FeatureConfig& features, const BpConfig& bp,
                   std::uint64_t seed);

// Collects the token inventory of a set of sentences.
std::vector<std::string> collect_vocabulary(
    const std::vector<Sentence>& sentences);

FactorialGradient zero_gradient(const Tagger& tagger);

// Training objective for one sentence; gradients accumulate into `grad`.
double tagger_loss_and_grad(const Tagger& tagger, const EncodedTokens& tokens,
                            const TaskLabels& gold, FactorialGradient& grad);
double tagger_loss(const Tagger& tagger, const EncodedTokens& tokens,
                   const TaskLabels& gold);

// Decodes with the procedure matching the tagger's kind.
TaskLabels tagger_predict(const Tagger& tagger, const Eigen::MatrixXd& features);
TaskLabels tagger_predict(const Tagger& tagger,
                          const std::vector<std::string>& tokens);

// Sentences with predicted labels in place of gold.
std::vector<Sentence> predict_sentences(const Tagger& tagger,
                                        const std::vector<Sentence>& input);

void append_spans(Tagger& tagger, TensorSpans& spans);

// Coupling between `task` (columns) and `other` (rows) as two CSV tables in
// `directory`: coupling_pos.csv and coupling_neg.csv. Throws MissingCoupling
// when the tagger has no such coupling.
void export_coupling_heatmap(const Tagger& tagger, const std::string& task,
                             const std::string& other,
                             const std::string& directory);

// Binary container: 8-byte magic "MTCRFMDL", uint32 format version, then
// schema, configuration, vocabulary and every parameter tensor.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_tagger(const Tagger& tagger, const std::string& path);
Tagger load_tagger(const std::string& path);

}  // namespace mtcrf
