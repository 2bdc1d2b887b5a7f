#pragma once

#include <vector>

#include "mtcrf/chain_crf.hpp"
#include "mtcrf/features.hpp"

namespace mtcrf {

// Shared featurizer with one independent chain head per task.
struct MultiHeadModel {
  Featurizer featurizer;
  std::vector<ChainHead> heads;

  int num_tasks() const { return static_cast<int>(heads.size()); }
};

struct MultiHeadGradient {
  FeaturizerParams featurizer;
  std::vector<ChainHead> heads;

  MultiHeadGradient& operator+=(const MultiHeadGradient& other);
  MultiHeadGradient& operator*=(double scale);
};

MultiHeadGradient zero_gradient(const MultiHeadModel& model);

void append_spans(MultiHeadModel& model, TensorSpans& spans);
void append_spans(MultiHeadGradient& grad, TensorSpans& spans);

// Label sequences are given per task.
using TaskLabels = std::vector<LabelSequence>;

// Sum of per-task chain NLLs on one shared feature matrix. Gradients are
// accumulated into `grad`; the loss is returned.
double mh_loss_and_grad(const MultiHeadModel& model,
                        const EncodedTokens& tokens, const TaskLabels& gold,
                        MultiHeadGradient& grad);

struct MultiHeadLoss {
  double loss = 0.0;
  MultiHeadGradient grad;
};

MultiHeadLoss mh_loss_and_grad(const MultiHeadModel& model,
                               const std::vector<std::string>& tokens,
                               const TaskLabels& gold);

// Loss only, on precomputed features.
double mh_loss(const MultiHeadModel& model, const Eigen::MatrixXd& features,
               const TaskLabels& gold);

TaskLabels mh_predict(const MultiHeadModel& model,
                      const Eigen::MatrixXd& features);
TaskLabels mh_predict(const MultiHeadModel& model,
                      const std::vector<std::string>& tokens);

}  // namespace mtcrf
