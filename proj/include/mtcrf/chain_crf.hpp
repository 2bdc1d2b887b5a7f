#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtcrf/tagset.hpp"
#include "mtcrf/tensor_span.hpp"

namespace mtcrf {

// Per-task CRF head. transition(a, b) scores a -> b (row = previous label).
// Also used as the gradient container for a head.
struct ChainHead {
  Eigen::MatrixXd emission;    // d x K
  Eigen::MatrixXd transition;  // K x K
  Eigen::VectorXd start;       // K
  Eigen::VectorXd stop;        // K

  int num_labels() const { return static_cast<int>(transition.rows()); }
  int feature_dim() const { return static_cast<int>(emission.rows()); }

  static ChainHead zeros(int feature_dim, int num_labels);
  ChainHead zeros_like() const { return zeros(feature_dim(), num_labels()); }
  bool operator==(const ChainHead& o) const {
    return emission == o.emission && transition == o.transition &&
           start == o.start && stop == o.stop;
  }
};

// Glorot-uniform emission projection, zero transitions and boundaries.
ChainHead init_head(int feature_dim, int num_labels, std::mt19937_64& rng);

void append_spans(ChainHead& head, TensorSpans& spans);

// T x K matrix of [A f_t]_y.
Eigen::MatrixXd emission_scores(const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& emission);

// Everything below takes per-position unary scores (T x K) and reads only
// the transition/start/stop parts of the head.

double log_partition(const Eigen::MatrixXd& unaries, const ChainHead& head);

struct Marginals {
  Eigen::MatrixXd unary;                  // T x K
  std::vector<Eigen::MatrixXd> pairwise;  // T-1 slabs of K x K
  double log_z = 0.0;
};

Marginals forward_backward(const Eigen::MatrixXd& unaries,
                           const ChainHead& head);

struct Decoded {
  LabelSequence labels;
  double score = 0.0;
};

// Ties go to the lower label id at every backpointer decision.
Decoded viterbi(const Eigen::MatrixXd& unaries, const ChainHead& head);

double path_score(const Eigen::MatrixXd& unaries, const ChainHead& head,
                  const LabelSequence& labels);

// Negative log-likelihood of `gold` and its gradient with respect to the
// unaries and the transition/start/stop potentials.
struct UnaryNll {
  double loss = 0.0;
  Eigen::MatrixXd d_unaries;
  Eigen::MatrixXd d_transition;
  Eigen::VectorXd d_start;
  Eigen::VectorXd d_stop;
};

UnaryNll unary_nll(const Eigen::MatrixXd& unaries, const ChainHead& head,
                   const LabelSequence& gold);

struct ChainNll {
  double loss = 0.0;
  Eigen::MatrixXd d_features;  // T x d
  ChainHead d_head;
};

ChainNll nll_and_grad(const Eigen::MatrixXd& features, const ChainHead& head,
                      const LabelSequence& gold);

void check_labels(const LabelSequence& labels, int num_labels, int length);

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace mtcrf
