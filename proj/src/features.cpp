#include "mtcrf/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "mtcrf/error.hpp"

namespace mtcrf {

void FeatureConfig::validate() const {
  if (embedding_dim <= 0 || hash_buckets <= 0 || hidden_dim <= 0 ||
      layers <= 0 || window < 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "feature dimensions must be positive and window >= 0");
  }
  for (int n : char_ngram_orders) {
    if (n <= 0) {
      throw Error(ErrorKind::kInvalidArgument, "n-gram orders must be positive");
    }
  }
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  std::set<std::string> unique(tokens.begin(), tokens.end());
  tokens_.assign(unique.begin(), unique.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    index_.emplace(tokens_[i], static_cast<int>(i) + 2);
  }
}

int Vocabulary::row(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

FeaturizerParams FeaturizerParams::zeros_like() const {
  FeaturizerParams z;
  z.token_embeddings =
      Eigen::MatrixXd::Zero(token_embeddings.rows(), token_embeddings.cols());
  z.char_embeddings =
      Eigen::MatrixXd::Zero(char_embeddings.rows(), char_embeddings.cols());
  for (const auto& layer : layers) {
    z.layers.push_back(
        {Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
         Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return z;
}

Featurizer init_featurizer(const FeatureConfig& config,
                           const std::vector<std::string>& vocabulary) {
  config.validate();
  if (vocabulary.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "empty vocabulary");
  }
  Featurizer f{config, Vocabulary(vocabulary), {}};
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> embed(-0.1, 0.1);
  auto fill = [&rng](Eigen::MatrixXd& m, std::uniform_real_distribution<double>& dist) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    }
  };
  const int e = config.embedding_dim;
  f.params.token_embeddings.resize(f.vocabulary.rows(), e);
  fill(f.params.token_embeddings, embed);
  f.params.char_embeddings.resize(config.hash_buckets + 1, e);
  fill(f.params.char_embeddings, embed);

  int in = config.input_dim();
  for (int l = 0; l < config.layers; ++l) {
    const int out = config.hidden_dim;
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> glorot(-limit, limit);
    ProjectionLayer layer{Eigen::MatrixXd(in, out), Eigen::VectorXd::Zero(out)};
    fill(layer.weight, glorot);
    f.params.layers.push_back(std::move(layer));
    in = out;
  }
  return f;
}

std::vector<int> char_ngram_buckets(const std::string& token,
                                    const FeatureConfig& config) {
  const std::string marked = "<" + token + ">";
  std::vector<int> buckets;
  for (int n : config.char_ngram_orders) {
    if (static_cast<std::size_t>(n) > marked.size()) continue;
    for (std::size_t i = 0; i + n <= marked.size(); ++i) {
      std::uint64_t h = 1469598103934665603ULL;
      // Order is mixed in so "ab" as a bigram and trigram prefix differ.
      h = (h ^ static_cast<std::uint64_t>(n)) * 1099511628211ULL;
      for (std::size_t k = i; k < i + n; ++k) {
        h = (h ^ static_cast<unsigned char>(marked[k])) * 1099511628211ULL;
      }
      buckets.push_back(static_cast<int>(h % config.hash_buckets));
    }
  }
  return buckets;
}

EncodedTokens encode_tokens(const Featurizer& featurizer,
                            const std::vector<std::string>& tokens) {
  EncodedTokens enc;
  enc.token_rows.reserve(tokens.size());
  for (const auto& tok : tokens) {
    enc.token_rows.push_back(featurizer.vocabulary.row(tok));
    enc.char_buckets.push_back(char_ngram_buckets(tok, featurizer.config));
  }
  return enc;
}

void check_shapes(const Featurizer& f) {
  const auto& p = f.params;
  const auto& c = f.config;
  bool ok = p.token_embeddings.rows() == f.vocabulary.rows() &&
            p.token_embeddings.cols() == c.embedding_dim &&
            p.char_embeddings.rows() == c.hash_buckets + 1 &&
            p.char_embeddings.cols() == c.embedding_dim &&
            static_cast<int>(p.layers.size()) == c.layers;
  int in = c.input_dim();
  for (const auto& layer : p.layers) {
    ok = ok && layer.weight.rows() == in && layer.weight.cols() == c.hidden_dim &&
         layer.bias.size() == c.hidden_dim;
    in = c.hidden_dim;
  }
  if (!ok) {
    throw Error(ErrorKind::kShapeMismatch,
                "featurizer parameters do not match its configuration");
  }
}

FeatureTape featurize_forward(const Featurizer& featurizer,
                              const EncodedTokens& tokens) {
  check_shapes(featurizer);
  const auto& p = featurizer.params;
  const int T = tokens.length();
  const int e = featurizer.config.embedding_dim;
  const int w = featurizer.config.window;
  const int pad_char = featurizer.config.hash_buckets;
  if (T == 0) throw Error(ErrorKind::kShapeMismatch, "empty token sequence");

  // Per-position [token embedding; mean char n-gram embedding].
  Eigen::MatrixXd local(T, 2 * e);
  for (int t = 0; t < T; ++t) {
    local.row(t).head(e) = p.token_embeddings.row(tokens.token_rows[t]);
    Eigen::RowVectorXd chars = Eigen::RowVectorXd::Zero(e);
    const auto& buckets = tokens.char_buckets[t];
    for (int b : buckets) chars += p.char_embeddings.row(b);
    if (!buckets.empty()) chars /= static_cast<double>(buckets.size());
    local.row(t).tail(e) = chars;
  }
  Eigen::RowVectorXd pad(2 * e);
  pad.head(e) = p.token_embeddings.row(Vocabulary::kPad);
  pad.tail(e) = p.char_embeddings.row(pad_char);

  FeatureTape tape;
  Eigen::MatrixXd input(T, featurizer.config.input_dim());
  for (int t = 0; t < T; ++t) {
    for (int o = -w; o <= w; ++o) {
      const int pos = t + o;
      const int col = (o + w) * 2 * e;
      if (pos < 0 || pos >= T) {
        input.row(t).segment(col, 2 * e) = pad;
      } else {
        input.row(t).segment(col, 2 * e) = local.row(pos);
      }
    }
  }
  tape.activations.push_back(std::move(input));
  for (const auto& layer : p.layers) {
    Eigen::MatrixXd z = tape.activations.back() * layer.weight;
    z.rowwise() += layer.bias.transpose();
    tape.activations.push_back(z.array().tanh().matrix());
  }
  return tape;
}

void featurize_backward(const Featurizer& featurizer,
                        const EncodedTokens& tokens, const FeatureTape& tape,
                        const Eigen::MatrixXd& d_features,
                        FeaturizerParams& grad) {
  const auto& p = featurizer.params;
  const int T = tokens.length();
  if (d_features.rows() != T || d_features.cols() != featurizer.output_dim()) {
    throw Error(ErrorKind::kShapeMismatch,
                "upstream gradient must be T x hidden_dim");
  }
  const int e = featurizer.config.embedding_dim;
  const int w = featurizer.config.window;
  const int pad_char = featurizer.config.hash_buckets;

  Eigen::MatrixXd upstream = d_features;
  for (int l = static_cast<int>(p.layers.size()) - 1; l >= 0; --l) {
    const Eigen::MatrixXd& out = tape.activations[l + 1];
    const Eigen::MatrixXd& in = tape.activations[l];
    Eigen::MatrixXd dz =
        (upstream.array() * (1.0 - out.array().square())).matrix();
    grad.layers[l].weight.noalias() += in.transpose() * dz;
    grad.layers[l].bias += dz.colwise().sum().transpose();
    upstream = dz * p.layers[l].weight.transpose();
  }

  for (int t = 0; t < T; ++t) {
    for (int o = -w; o <= w; ++o) {
      const int pos = t + o;
      const int col = (o + w) * 2 * e;
      auto d_tok = upstream.row(t).segment(col, e);
      auto d_chr = upstream.row(t).segment(col + e, e);
      if (pos < 0 || pos >= T) {
        grad.token_embeddings.row(Vocabulary::kPad) += d_tok;
        grad.char_embeddings.row(pad_char) += d_chr;
        continue;
      }
      grad.token_embeddings.row(tokens.token_rows[pos]) += d_tok;
      const auto& buckets = tokens.char_buckets[pos];
      if (buckets.empty()) continue;
      const double scale = 1.0 / static_cast<double>(buckets.size());
      for (int b : buckets) grad.char_embeddings.row(b) += scale * d_chr;
    }
  }
}

Eigen::MatrixXd featurize(const Featurizer& featurizer,
                          const std::vector<std::string>& tokens) {
  return featurize_forward(featurizer, encode_tokens(featurizer, tokens))
      .output();
}

FeaturizerParams featurize_backward(const Featurizer& featurizer,
                                    const std::vector<std::string>& tokens,
                                    const Eigen::MatrixXd& d_features) {
  const auto enc = encode_tokens(featurizer, tokens);
  const auto tape = featurize_forward(featurizer, enc);
  FeaturizerParams grad = featurizer.params.zeros_like();
  featurize_backward(featurizer, enc, tape, d_features, grad);
  return grad;
}

void append_spans(FeaturizerParams& params, TensorSpans& spans) {
  spans.push_back(as_span(params.token_embeddings));
  spans.push_back(as_span(params.char_embeddings));
  for (auto& layer : params.layers) {
    spans.push_back(as_span(layer.weight));
    spans.push_back(as_span(layer.bias));
  }
}

}  // namespace mtcrf
