#include "mtcrf/chain_crf.hpp"

#include <cmath>
#include <limits>

#include "mtcrf/error.hpp"

namespace mtcrf {

ChainHead ChainHead::zeros(int feature_dim, int num_labels) {
  return {Eigen::MatrixXd::Zero(feature_dim, num_labels),
          Eigen::MatrixXd::Zero(num_labels, num_labels),
          Eigen::VectorXd::Zero(num_labels), Eigen::VectorXd::Zero(num_labels)};
}

ChainHead init_head(int feature_dim, int num_labels, std::mt19937_64& rng) {
  ChainHead head = ChainHead::zeros(feature_dim, num_labels);
  const double limit = std::sqrt(6.0 / (feature_dim + num_labels));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index c = 0; c < head.emission.cols(); ++c) {
    for (Eigen::Index r = 0; r < head.emission.rows(); ++r) {
      head.emission(r, c) = dist(rng);
    }
  }
  return head;
}

void append_spans(ChainHead& head, TensorSpans& spans) {
  spans.push_back(as_span(head.emission));
  spans.push_back(as_span(head.transition));
  spans.push_back(as_span(head.start));
  spans.push_back(as_span(head.stop));
}

Eigen::MatrixXd emission_scores(const Eigen::MatrixXd& features,
                                const Eigen::MatrixXd& emission) {
  if (features.cols() != emission.rows()) {
    throw Error(ErrorKind::kShapeMismatch,
                "feature dim " + std::to_string(features.cols()) +
                    " vs emission rows " + std::to_string(emission.rows()));
  }
  return features * emission;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

namespace {

void check_unaries(const Eigen::MatrixXd& unaries, const ChainHead& head) {
  if (unaries.rows() < 1) {
    throw Error(ErrorKind::kShapeMismatch, "sequence length must be >= 1");
  }
  const int K = head.num_labels();
  if (unaries.cols() != K || head.transition.cols() != K ||
      head.start.size() != K || head.stop.size() != K) {
    throw Error(ErrorKind::kShapeMismatch,
                "unary/transition label counts disagree");
  }
}

// alpha(t, y): log-sum of prefixes ending in y at t, including unary t.
Eigen::MatrixXd forward_table(const Eigen::MatrixXd& u, const ChainHead& h) {
  const int T = static_cast<int>(u.rows());
  const int K = h.num_labels();
  Eigen::MatrixXd alpha(T, K);
  alpha.row(0) = h.start.transpose() + u.row(0);
  Eigen::VectorXd tmp(K);
  for (int t = 1; t < T; ++t) {
    for (int b = 0; b < K; ++b) {
      tmp = alpha.row(t - 1).transpose() + h.transition.col(b);
      alpha(t, b) = log_sum_exp(tmp) + u(t, b);
    }
  }
  return alpha;
}

// beta(t, y): log-sum of suffixes after t given y at t, including stop.
Eigen::MatrixXd backward_table(const Eigen::MatrixXd& u, const ChainHead& h) {
  const int T = static_cast<int>(u.rows());
  const int K = h.num_labels();
  Eigen::MatrixXd beta(T, K);
  beta.row(T - 1) = h.stop.transpose();
  Eigen::VectorXd tmp(K);
  for (int t = T - 2; t >= 0; --t) {
    for (int a = 0; a < K; ++a) {
      tmp = h.transition.row(a).transpose() + u.row(t + 1).transpose() +
            beta.row(t + 1).transpose();
      beta(t, a) = log_sum_exp(tmp);
    }
  }
  return beta;
}

}  // namespace

double log_partition(const Eigen::MatrixXd& unaries, const ChainHead& head) {
  check_unaries(unaries, head);
  const Eigen::MatrixXd alpha = forward_table(unaries, head);
  const Eigen::VectorXd last =
      alpha.row(alpha.rows() - 1).transpose() + head.stop;
  return log_sum_exp(last);
}

Marginals forward_backward(const Eigen::MatrixXd& unaries,
                           const ChainHead& head) {
  check_unaries(unaries, head);
  const int T = static_cast<int>(unaries.rows());
  const int K = head.num_labels();
  const Eigen::MatrixXd alpha = forward_table(unaries, head);
  const Eigen::MatrixXd beta = backward_table(unaries, head);
  Marginals m;
  m.log_z = log_sum_exp(alpha.row(T - 1).transpose() + head.stop);
  m.unary = ((alpha + beta).array() - m.log_z).exp().matrix();
  m.pairwise.reserve(T > 0 ? T - 1 : 0);
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd slab(K, K);
    for (int a = 0; a < K; ++a) {
      for (int b = 0; b < K; ++b) {
        slab(a, b) = std::exp(alpha(t, a) + head.transition(a, b) +
                              unaries(t + 1, b) + beta(t + 1, b) - m.log_z);
      }
    }
    m.pairwise.push_back(std::move(slab));
  }
  return m;
}

Decoded viterbi(const Eigen::MatrixXd& unaries, const ChainHead& head) {
  check_unaries(unaries, head);
  const int T = static_cast<int>(unaries.rows());
  const int K = head.num_labels();
  Eigen::MatrixXd delta(T, K);
  Eigen::MatrixXi back(T, K);
  delta.row(0) = head.start.transpose() + unaries.row(0);
  for (int t = 1; t < T; ++t) {
    for (int b = 0; b < K; ++b) {
      int best = 0;
      double best_score = delta(t - 1, 0) + head.transition(0, b);
      for (int a = 1; a < K; ++a) {
        const double s = delta(t - 1, a) + head.transition(a, b);
        if (s > best_score) {
          best_score = s;
          best = a;
        }
      }
      delta(t, b) = best_score + unaries(t, b);
      back(t, b) = best;
    }
  }
  int last = 0;
  double best_score = delta(T - 1, 0) + head.stop(0);
  for (int y = 1; y < K; ++y) {
    const double s = delta(T - 1, y) + head.stop(y);
    if (s > best_score) {
      best_score = s;
      last = y;
    }
  }
  Decoded out;
  out.labels.assign(T, 0);
  out.labels[T - 1] = last;
  for (int t = T - 1; t > 0; --t) out.labels[t - 1] = back(t, out.labels[t]);
  out.score = best_score;
  return out;
}

void check_labels(const LabelSequence& labels, int num_labels, int length) {
  if (static_cast<int>(labels.size()) != length) {
    throw Error(ErrorKind::kShapeMismatch,
                "label sequence length " + std::to_string(labels.size()) +
                    " != " + std::to_string(length));
  }
  for (LabelId y : labels) {
    if (y < 0 || y >= num_labels) {
      throw Error(ErrorKind::kLabelOutOfRange,
                  "label id " + std::to_string(y) + " not in [0, " +
                      std::to_string(num_labels) + ")");
    }
  }
}

double path_score(const Eigen::MatrixXd& unaries, const ChainHead& head,
                  const LabelSequence& labels) {
  check_unaries(unaries, head);
  const int T = static_cast<int>(unaries.rows());
  check_labels(labels, head.num_labels(), T);
  double s = head.start(labels[0]) + head.stop(labels[T - 1]);
  for (int t = 0; t < T; ++t) {
    s += unaries(t, labels[t]);
    if (t > 0) s += head.transition(labels[t - 1], labels[t]);
  }
  return s;
}

UnaryNll unary_nll(const Eigen::MatrixXd& unaries, const ChainHead& head,
                   const LabelSequence& gold) {
  check_unaries(unaries, head);
  const int T = static_cast<int>(unaries.rows());
  const int K = head.num_labels();
  check_labels(gold, K, T);
  Marginals m = forward_backward(unaries, head);

  UnaryNll out;
  out.loss = m.log_z - path_score(unaries, head, gold);
  out.d_unaries = std::move(m.unary);
  out.d_transition = Eigen::MatrixXd::Zero(K, K);
  for (const auto& slab : m.pairwise) out.d_transition += slab;
  out.d_start = out.d_unaries.row(0).transpose();
  out.d_stop = out.d_unaries.row(T - 1).transpose();
  for (int t = 0; t < T; ++t) {
    out.d_unaries(t, gold[t]) -= 1.0;
    if (t > 0) out.d_transition(gold[t - 1], gold[t]) -= 1.0;
  }
  out.d_start(gold[0]) -= 1.0;
  out.d_stop(gold[T - 1]) -= 1.0;
  return out;
}

ChainNll nll_and_grad(const Eigen::MatrixXd& features, const ChainHead& head,
                      const LabelSequence& gold) {
  const Eigen::MatrixXd unaries = emission_scores(features, head.emission);
  UnaryNll u = unary_nll(unaries, head, gold);
  ChainNll out;
  out.loss = u.loss;
  out.d_features = u.d_unaries * head.emission.transpose();
  out.d_head.emission = features.transpose() * u.d_unaries;
  out.d_head.transition = std::move(u.d_transition);
  out.d_head.start = std::move(u.d_start);
  out.d_head.stop = std::move(u.d_stop);
  return out;
}

}  // namespace mtcrf
