#include "mtcrf/multihead.hpp"

#include "mtcrf/error.hpp"

namespace mtcrf {

namespace {

void add_into(ChainHead& dst, const ChainHead& src) {
  dst.emission += src.emission;
  dst.transition += src.transition;
  dst.start += src.start;
  dst.stop += src.stop;
}

}  // namespace

MultiHeadGradient& MultiHeadGradient::operator+=(const MultiHeadGradient& o) {
  featurizer.token_embeddings += o.featurizer.token_embeddings;
  featurizer.char_embeddings += o.featurizer.char_embeddings;
  for (std::size_t l = 0; l < featurizer.layers.size(); ++l) {
    featurizer.layers[l].weight += o.featurizer.layers[l].weight;
    featurizer.layers[l].bias += o.featurizer.layers[l].bias;
  }
  for (std::size_t j = 0; j < heads.size(); ++j) add_into(heads[j], o.heads[j]);
  return *this;
}

MultiHeadGradient& MultiHeadGradient::operator*=(double scale) {
  TensorSpans spans;
  append_spans(*this, spans);
  for (auto span : spans) {
    for (double& v : span) v *= scale;
  }
  return *this;
}

MultiHeadGradient zero_gradient(const MultiHeadModel& model) {
  MultiHeadGradient g{model.featurizer.params.zeros_like(), {}};
  for (const auto& h : model.heads) g.heads.push_back(h.zeros_like());
  return g;
}

void append_spans(MultiHeadModel& model, TensorSpans& spans) {
  append_spans(model.featurizer.params, spans);
  for (auto& h : model.heads) append_spans(h, spans);
}

void append_spans(MultiHeadGradient& grad, TensorSpans& spans) {
  append_spans(grad.featurizer, spans);
  for (auto& h : grad.heads) append_spans(h, spans);
}

double mh_loss_and_grad(const MultiHeadModel& model,
                        const EncodedTokens& tokens, const TaskLabels& gold,
                        MultiHeadGradient& grad) {
  if (static_cast<int>(gold.size()) != model.num_tasks()) {
    throw Error(ErrorKind::kShapeMismatch,
                "expected one gold sequence per task");
  }
  const FeatureTape tape = featurize_forward(model.featurizer, tokens);
  const Eigen::MatrixXd& features = tape.output();
  Eigen::MatrixXd d_features =
      Eigen::MatrixXd::Zero(features.rows(), features.cols());
  double loss = 0.0;
  for (int j = 0; j < model.num_tasks(); ++j) {
    ChainNll nll = nll_and_grad(features, model.heads[j], gold[j]);
    loss += nll.loss;
    d_features += nll.d_features;
    add_into(grad.heads[j], nll.d_head);
  }
  featurize_backward(model.featurizer, tokens, tape, d_features,
                     grad.featurizer);
  return loss;
}

MultiHeadLoss mh_loss_and_grad(const MultiHeadModel& model,
                               const std::vector<std::string>& tokens,
                               const TaskLabels& gold) {
  MultiHeadLoss out{0.0, zero_gradient(model)};
  out.loss = mh_loss_and_grad(model, encode_tokens(model.featurizer, tokens),
                              gold, out.grad);
  return out;
}

double mh_loss(const MultiHeadModel& model, const Eigen::MatrixXd& features,
               const TaskLabels& gold) {
  if (static_cast<int>(gold.size()) != model.num_tasks()) {
    throw Error(ErrorKind::kShapeMismatch,
                "expected one gold sequence per task");
  }
  double loss = 0.0;
  for (int j = 0; j < model.num_tasks(); ++j) {
    const ChainHead& head = model.heads[j];
    const Eigen::MatrixXd unaries = emission_scores(features, head.emission);
    check_labels(gold[j], head.num_labels(), static_cast<int>(unaries.rows()));
    loss += log_partition(unaries, head) - path_score(unaries, head, gold[j]);
  }
  return loss;
}

TaskLabels mh_predict(const MultiHeadModel& model,
                      const Eigen::MatrixXd& features) {
  TaskLabels out;
  for (const auto& head : model.heads) {
    out.push_back(viterbi(emission_scores(features, head.emission), head).labels);
  }
  return out;
}

TaskLabels mh_predict(const MultiHeadModel& model,
                      const std::vector<std::string>& tokens) {
  return mh_predict(model, featurize(model.featurizer, tokens));
}

}  // namespace mtcrf
