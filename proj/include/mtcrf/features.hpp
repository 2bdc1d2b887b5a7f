#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtcrf/tensor_span.hpp"

namespace mtcrf {

struct FeatureConfig {
  int embedding_dim = 32;
  std::vector<int> char_ngram_orders = {2, 3};
  int hash_buckets = 4096;
  int window = 1;          // half-width
  int hidden_dim = 64;     // d
  int layers = 1;          // stacked tanh projections
  std::uint64_t seed = 0;

  int input_dim() const { return (2 * window + 1) * 2 * embedding_dim; }
  void validate() const;
  bool operator==(const FeatureConfig&) const = default;
};

// Token inventory. Row 0 is PAD, row 1 is UNK, vocabulary rows follow in
// sorted order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int row(const std::string& token) const;
  int rows() const { return static_cast<int>(tokens_.size()) + 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

struct ProjectionLayer {
  Eigen::MatrixXd weight;  // in x out
  Eigen::VectorXd bias;    // out
  bool operator==(const ProjectionLayer& o) const {
    return weight == o.weight && bias == o.bias;
  }
};

// Trainable parameters. Also used as the gradient container.
struct FeaturizerParams {
  Eigen::MatrixXd token_embeddings;  // vocabulary rows x embedding_dim
  Eigen::MatrixXd char_embeddings;   // (hash_buckets + 1) x embedding_dim;
                                     // last row is the PAD row
  std::vector<ProjectionLayer> layers;

  FeaturizerParams zeros_like() const;
  bool operator==(const FeaturizerParams& o) const {
    return token_embeddings == o.token_embeddings &&
           char_embeddings == o.char_embeddings && layers == o.layers;
  }
};

struct Featurizer {
  FeatureConfig config;
  Vocabulary vocabulary;
  FeaturizerParams params;

  int output_dim() const { return config.hidden_dim; }
};

// Lookup indices of one sentence: token rows and hashed char n-gram buckets.
struct EncodedTokens {
  std::vector<int> token_rows;
  std::vector<std::vector<int>> char_buckets;

  int length() const { return static_cast<int>(token_rows.size()); }
};

// Activations kept for the backward pass.
struct FeatureTape {
  std::vector<Eigen::MatrixXd> activations;  // [0] = input, back() = output

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

Featurizer init_featurizer(const FeatureConfig& config,
                           const std::vector<std::string>& vocabulary);

// FNV-1a hashed char n-grams of "<token>" for the configured orders.
std::vector<int> char_ngram_buckets(const std::string& token,
                                    const FeatureConfig& config);

EncodedTokens encode_tokens(const Featurizer& featurizer,
                            const std::vector<std::string>& tokens);

FeatureTape featurize_forward(const Featurizer& featurizer,
                              const EncodedTokens& tokens);

// Accumulates parameter gradients for upstream dL/dF into `grad`.
void featurize_backward(const Featurizer& featurizer,
                        const EncodedTokens& tokens, const FeatureTape& tape,
                        const Eigen::MatrixXd& d_features,
                        FeaturizerParams& grad);

// T x d feature matrix; pure in (params, tokens).
Eigen::MatrixXd featurize(const Featurizer& featurizer,
                          const std::vector<std::string>& tokens);

FeaturizerParams featurize_backward(const Featurizer& featurizer,
                                    const std::vector<std::string>& tokens,
                                    const Eigen::MatrixXd& d_features);

// Flat views over every parameter tensor, in a fixed order.
void append_spans(FeaturizerParams& params, TensorSpans& spans);

// Throws ShapeMismatch unless every tensor matches the configuration.
void check_shapes(const Featurizer& featurizer);

}  // namespace mtcrf
