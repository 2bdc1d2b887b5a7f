#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtcrf/chain_crf.hpp"
#include "mtcrf/model.hpp"

namespace mtcrf::testing {

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

inline ChainHead random_head(int feature_dim, int num_labels,
                             std::mt19937_64& rng, double scale = 1.0) {
  ChainHead h;
  h.emission = random_matrix(feature_dim, num_labels, rng, scale);
  h.transition = random_matrix(num_labels, num_labels, rng, scale);
  h.start = random_matrix(num_labels, 1, rng, scale);
  h.stop = random_matrix(num_labels, 1, rng, scale);
  return h;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline LabelSequence random_labels(std::mt19937_64& rng, int length, int K) {
  LabelSequence s(length);
  for (auto& v : s) v = uniform_int(rng, 0, K - 1);
  return s;
}

// Small FLAT schema with the given label counts.
inline MultiTaskSchema flat_schema(const std::vector<int>& label_counts) {
  std::vector<TaskSchema> tasks;
  for (std::size_t j = 0; j < label_counts.size(); ++j) {
    std::vector<std::string> labels;
    for (int k = 0; k < label_counts[j]; ++k) labels.push_back("L" + std::to_string(k));
    tasks.emplace_back("t" + std::to_string(j), Scheme::kFlat, labels);
  }
  return MultiTaskSchema(tasks);
}

inline FeatureConfig tiny_features(int layers = 1) {
  FeatureConfig c;
  c.embedding_dim = 3;
  c.char_ngram_orders = {2};
  c.hash_buckets = 11;
  c.window = 1;
  c.hidden_dim = 4;
  c.layers = layers;
  return c;
}

inline const std::vector<std::string>& tiny_vocabulary() {
  static const std::vector<std::string> v = {"ab", "ba", "cab", "dd", "e"};
  return v;
}

inline std::vector<std::string> random_tokens(std::mt19937_64& rng, int length) {
  static const std::vector<std::string> pool = {"ab", "ba", "cab", "dd", "e", "zz"};
  std::vector<std::string> t(length);
  for (auto& s : t) s = pool[uniform_int(rng, 0, static_cast<int>(pool.size()) - 1)];
  return t;
}

// Overwrites every parameter with N(0, scale) noise so that no group is
// trivially zero.
inline void randomize(Tagger& tagger, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  TensorSpans spans;
  append_spans(tagger, spans);
  for (auto span : spans)
    for (double& v : span) v = n(rng);
}

inline Tagger random_tagger(ModelKind kind, const std::vector<int>& label_counts,
                            std::mt19937_64& rng, int layers = 1) {
  Tagger t = init_tagger(kind, flat_schema(label_counts), tiny_vocabulary(),
                         tiny_features(layers), BpConfig{}, rng());
  randomize(t, rng);
  return t;
}

struct FdResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences over every entry of `params`; compares against the
// matching entries of `analytic` with |a - n| / (|n| + 1e-8).
inline FdResult finite_difference(const TensorSpans& params,
                                  const TensorSpans& analytic,
                                  const std::function<double()>& loss,
                                  double h = 1e-4) {
  FdResult r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].size(); ++k) {
      double& x = params[i][k];
      const double saved = x;
      x = saved + h;
      const double up = loss();
      x = saved - h;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][k];
      const double err = std::abs(a - numeric) / (std::abs(numeric) + 1e-8);
      ++r.checked;
      if (err > r.max_relative_error) {
        r.max_relative_error = err;
        r.worst_tensor = i;
        r.worst_index = k;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
    }
  }
  return r;
}

}  // namespace mtcrf::testing
