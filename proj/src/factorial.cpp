#include "mtcrf/factorial.hpp"

#include <algorithm>

#include "mtcrf/error.hpp"

namespace mtcrf {

const char* to_string(CouplingVariant variant) {
  switch (variant) {
    case CouplingVariant::kPlain: return "plain";
    case CouplingVariant::kWeighted: return "weighted";
    case CouplingVariant::kCascaded: return "cascaded";
  }
  return "unknown";
}

void BpConfig::validate() const {
  if (max_iterations <= 0 || damping < 0.0 || damping >= 1.0 ||
      tolerance <= 0.0) {
    throw Error(ErrorKind::kInvalidArgument,
                "bp needs max_iterations > 0, damping in [0,1), tolerance > 0");
  }
}

CouplingSet::CouplingSet(const std::vector<int>& label_counts) {
  const int J = static_cast<int>(label_counts.size());
  for (int lo = 0; lo < J; ++lo) {
    for (int hi = lo + 1; hi < J; ++hi) {
      pairs_.emplace_back(lo, hi);
      matrices_.push_back(
          Eigen::MatrixXd::Zero(label_counts[lo], label_counts[hi]));
    }
  }
}

int CouplingSet::find(int a, int b) const {
  const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  for (int p = 0; p < num_pairs(); ++p) {
    if (pairs_[p] == key) return p;
  }
  return -1;
}

Eigen::MatrixXd CouplingSet::view(int task, int other) const {
  const int p = find(task, other);
  if (p < 0 || task == other) {
    throw Error(ErrorKind::kMissingCoupling,
                "no coupling between tasks " + std::to_string(task) + " and " +
                    std::to_string(other));
  }
  return task > other ? matrices_[p] : Eigen::MatrixXd(matrices_[p].transpose());
}

void CouplingSet::set_zero() {
  for (auto& m : matrices_) m.setZero();
}

std::vector<int> FactorialModel::coupled_tasks(int j) const {
  std::vector<int> out;
  const int upper = variant == CouplingVariant::kCascaded ? j : num_tasks();
  for (int other = 0; other < upper; ++other) {
    if (other != j && couplings.find(j, other) >= 0) out.push_back(other);
  }
  return out;
}

FactorialModel make_factorial(MultiHeadModel base, CouplingVariant variant,
                              BpConfig bp) {
  bp.validate();
  std::vector<int> counts;
  for (const auto& h : base.heads) counts.push_back(h.num_labels());
  return {std::move(base), CouplingSet(counts), variant, bp};
}

FactorialGradient& FactorialGradient::operator+=(const FactorialGradient& o) {
  base += o.base;
  for (std::size_t p = 0; p < couplings.size(); ++p) couplings[p] += o.couplings[p];
  return *this;
}

FactorialGradient& FactorialGradient::operator*=(double scale) {
  base *= scale;
  for (auto& c : couplings) c *= scale;
  return *this;
}

FactorialGradient zero_gradient(const FactorialModel& model) {
  FactorialGradient g{zero_gradient(model.base), {}};
  for (const auto& m : model.couplings.matrices()) {
    g.couplings.push_back(Eigen::MatrixXd::Zero(m.rows(), m.cols()));
  }
  return g;
}

void append_spans(FactorialModel& model, TensorSpans& spans) {
  append_spans(model.base, spans);
  for (auto& m : model.couplings.matrices()) spans.push_back(as_span(m));
}

void append_spans(FactorialGradient& grad, TensorSpans& spans) {
  append_spans(grad.base, spans);
  for (auto& m : grad.couplings) spans.push_back(as_span(m));
}

namespace {

bool is_weighted(const FactorialModel& model) {
  return model.variant != CouplingVariant::kPlain;
}

const LabelSequence& coupled_labels(const TaskLabels& labels, int other,
                                    int length) {
  if (other >= static_cast<int>(labels.size()) ||
      static_cast<int>(labels[other].size()) != length) {
    throw Error(ErrorKind::kMissingCoupledLabels,
                "labels of coupled task " + std::to_string(other) +
                    " missing or of wrong length");
  }
  return labels[other];
}

}  // namespace

Eigen::MatrixXd coupling_unaries(const FactorialModel& model,
                                 const Eigen::MatrixXd& features, int task,
                                 const TaskLabels& other_labels) {
  const int T = static_cast<int>(features.rows());
  const ChainHead& own = model.base.heads.at(task);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(T, own.num_labels());
  for (int other : model.coupled_tasks(task)) {
    const LabelSequence& labels = coupled_labels(other_labels, other, T);
    const ChainHead& other_head = model.base.heads[other];
    check_labels(labels, other_head.num_labels(), T);
    const Eigen::MatrixXd view = model.couplings.view(task, other);
    for (int t = 0; t < T; ++t) {
      const LabelId y = labels[t];
      double weight = 1.0;
      if (is_weighted(model)) {
        weight = features.row(t).dot(other_head.emission.col(y));
      }
      out.row(t) += weight * view.row(y);
    }
  }
  return out;
}

double fac_loss_and_grad(const FactorialModel& model,
                         const EncodedTokens& tokens, const TaskLabels& gold,
                         FactorialGradient& grad) {
  const int J = model.num_tasks();
  if (static_cast<int>(gold.size()) != J) {
    throw Error(ErrorKind::kShapeMismatch,
                "expected one gold sequence per task");
  }
  const FeatureTape tape = featurize_forward(model.base.featurizer, tokens);
  const Eigen::MatrixXd& features = tape.output();
  const int T = static_cast<int>(features.rows());
  Eigen::MatrixXd d_features = Eigen::MatrixXd::Zero(T, features.cols());
  const bool weighted = is_weighted(model);

  double loss = 0.0;
  for (int j = 0; j < J; ++j) {
    const ChainHead& head = model.base.heads[j];
    const Eigen::MatrixXd unaries =
        emission_scores(features, head.emission) +
        coupling_unaries(model, features, j, gold);
    UnaryNll nll = unary_nll(unaries, head, gold[j]);
    loss += nll.loss;

    ChainHead& d_head = grad.base.heads[j];
    d_head.emission.noalias() += features.transpose() * nll.d_unaries;
    d_head.transition += nll.d_transition;
    d_head.start += nll.d_start;
    d_head.stop += nll.d_stop;
    d_features.noalias() += nll.d_unaries * head.emission.transpose();

    for (int other : model.coupled_tasks(j)) {
      const int p = model.couplings.find(j, other);
      const bool stored_as_view = j > other;
      const Eigen::MatrixXd& stored = model.couplings.matrix(p);
      Eigen::MatrixXd& d_stored = grad.couplings[p];
      const ChainHead& other_head = model.base.heads[other];
      for (int t = 0; t < T; ++t) {
        const LabelId y = gold[other][t];
        const auto d_row = nll.d_unaries.row(t);
        double weight = 1.0;
        if (weighted) weight = features.row(t).dot(other_head.emission.col(y));
        if (stored_as_view) {
          d_stored.row(y) += weight * d_row;
        } else {
          d_stored.col(y) += weight * d_row.transpose();
        }
        if (weighted) {
          const double d_weight = stored_as_view
                                      ? stored.row(y).dot(d_row)
                                      : stored.col(y).dot(d_row.transpose());
          grad.base.heads[other].emission.col(y) +=
              d_weight * features.row(t).transpose();
          d_features.row(t) += d_weight * other_head.emission.col(y).transpose();
        }
      }
    }
  }
  featurize_backward(model.base.featurizer, tokens, tape, d_features,
                     grad.base.featurizer);
  return loss;
}

FactorialLoss fac_loss_and_grad(const FactorialModel& model,
                                const std::vector<std::string>& tokens,
                                const TaskLabels& gold) {
  FactorialLoss out{0.0, zero_gradient(model)};
  out.loss = fac_loss_and_grad(
      model, encode_tokens(model.base.featurizer, tokens), gold, out.grad);
  return out;
}

double fac_loss(const FactorialModel& model, const Eigen::MatrixXd& features,
                const TaskLabels& gold) {
  if (static_cast<int>(gold.size()) != model.num_tasks()) {
    throw Error(ErrorKind::kShapeMismatch,
                "expected one gold sequence per task");
  }
  double loss = 0.0;
  for (int j = 0; j < model.num_tasks(); ++j) {
    const ChainHead& head = model.base.heads[j];
    const Eigen::MatrixXd unaries =
        emission_scores(features, head.emission) +
        coupling_unaries(model, features, j, gold);
    check_labels(gold[j], head.num_labels(), static_cast<int>(unaries.rows()));
    loss += log_partition(unaries, head) - path_score(unaries, head, gold[j]);
  }
  return loss;
}

namespace {

// Max-marginals of one chain: alpha + beta in the max-product semiring.
Eigen::MatrixXd max_marginals(const Eigen::MatrixXd& unaries,
                              const ChainHead& head) {
  const int T = static_cast<int>(unaries.rows());
  const int K = static_cast<int>(unaries.cols());
  Eigen::MatrixXd alpha(T, K), beta(T, K);
  alpha.row(0) = unaries.row(0) + head.start.transpose();
  for (int t = 1; t < T; ++t) {
    for (int y = 0; y < K; ++y) {
      alpha(t, y) = unaries(t, y) +
                    (alpha.row(t - 1).transpose() + head.transition.col(y)).maxCoeff();
    }
  }
  beta.row(T - 1) = head.stop.transpose();
  for (int t = T - 2; t >= 0; --t) {
    const Eigen::RowVectorXd next = unaries.row(t + 1) + beta.row(t + 1);
    for (int y = 0; y < K; ++y) {
      beta(t, y) = (head.transition.row(y) + next).maxCoeff();
    }
  }
  return alpha + beta;
}

struct MessageKey {
  int from;
  int to;
};

// Max-product messages between coupled chains. Message (from -> to) at time
// t is a vector over the receiving task's labels.
TaskLabels belief_propagation(const FactorialModel& model,
                              const Eigen::MatrixXd& features,
                              const std::vector<Eigen::MatrixXd>& emissions) {
  const int J = model.num_tasks();
  const int T = static_cast<int>(features.rows());
  const bool weighted = is_weighted(model);
  std::vector<MessageKey> keys;
  std::vector<Eigen::MatrixXd> messages;
  std::vector<Eigen::MatrixXd> views;  // rows: sender labels, cols: receiver labels
  for (int to = 0; to < J; ++to) {
    for (int from : model.coupled_tasks(to)) {
      keys.push_back({from, to});
      messages.push_back(Eigen::MatrixXd::Zero(T, model.base.heads[to].num_labels()));
      views.push_back(model.couplings.view(to, from));
    }
  }
  auto incoming = [&](int j) {
    Eigen::MatrixXd u = emissions[j];
    for (std::size_t m = 0; m < keys.size(); ++m) {
      if (keys[m].to == j) u += messages[m];
    }
    return u;
  };
  const double keep = model.bp.damping;
  for (int round = 0; round < model.bp.max_iterations; ++round) {
    double change = 0.0;
    for (int j = 0; j < J; ++j) {
      const Eigen::MatrixXd beliefs = max_marginals(incoming(j), model.base.heads[j]);
      for (std::size_t m = 0; m < keys.size(); ++m) {
        if (keys[m].from != j) continue;
        // The receiver's own message is removed before passing beliefs back.
        int back = -1;
        for (std::size_t r = 0; r < keys.size(); ++r) {
          if (keys[r].from == keys[m].to && keys[r].to == j) back = static_cast<int>(r);
        }
        Eigen::MatrixXd cavity = beliefs;
        if (back >= 0) cavity -= messages[back];
        Eigen::MatrixXd fresh(T, views[m].cols());
        for (int t = 0; t < T; ++t) {
          for (int y = 0; y < fresh.cols(); ++y) {
            Eigen::VectorXd factor = views[m].col(y);
            if (weighted) factor = factor.cwiseProduct(emissions[j].row(t).transpose());
            fresh(t, y) = (factor + cavity.row(t).transpose()).maxCoeff();
          }
          fresh.row(t).array() -= fresh.row(t).maxCoeff();
        }
        const Eigen::MatrixXd updated = (1.0 - keep) * fresh + keep * messages[m];
        change = std::max(change, (updated - messages[m]).cwiseAbs().maxCoeff());
        messages[m] = updated;
      }
    }
    if (change < model.bp.tolerance) break;
  }
  TaskLabels out;
  for (int j = 0; j < J; ++j) {
    out.push_back(viterbi(incoming(j), model.base.heads[j]).labels);
  }
  return out;
}

// Round-robin conditional Viterbi. A task's sequence is replaced only when the
// conditional path score strictly improves, so ties never cycle.
TaskLabels coordinate_ascent(const FactorialModel& model,
                             const Eigen::MatrixXd& features,
                             const std::vector<Eigen::MatrixXd>& emissions,
                             TaskLabels current, LoopyTrace* trace) {
  const int J = model.num_tasks();
  if (trace) {
    trace->rounds = {current};
    trace->converged = false;
  }
  for (int round = 0; round < model.bp.max_iterations; ++round) {
    bool changed = false;
    for (int j = 0; j < J; ++j) {
      const ChainHead& head = model.base.heads[j];
      const Eigen::MatrixXd unaries =
          emissions[j] + coupling_unaries(model, features, j, current);
      Decoded best = viterbi(unaries, head);
      if (best.labels != current[j] &&
          best.score > path_score(unaries, head, current[j])) {
        current[j] = std::move(best.labels);
        changed = true;
      }
    }
    if (trace) trace->rounds.push_back(current);
    if (!changed) {
      if (trace) trace->converged = true;
      break;
    }
  }
  return current;
}

}  // namespace

TaskLabels loopy_decode(const FactorialModel& model,
                        const Eigen::MatrixXd& features, LoopyTrace* trace) {
  if (model.variant == CouplingVariant::kCascaded) {
    throw Error(ErrorKind::kWrongVariant,
                "loopy decoding applies to plain and weighted models");
  }
  const int J = model.num_tasks();
  std::vector<Eigen::MatrixXd> emissions;
  for (const auto& head : model.base.heads) {
    emissions.push_back(emission_scores(features, head.emission));
  }
  LoopyTrace bp_trace;
  TaskLabels best = coordinate_ascent(model, features, emissions,
                                      belief_propagation(model, features, emissions),
                                      trace ? &bp_trace : nullptr);
  if (model.variant == CouplingVariant::kPlain) {
    // Restart from the coupling-free decode and keep the better joint score.
    TaskLabels independent;
    for (int j = 0; j < J; ++j) {
      independent.push_back(viterbi(emissions[j], model.base.heads[j]).labels);
    }
    LoopyTrace restart_trace;
    TaskLabels other = coordinate_ascent(model, features, emissions, independent,
                                         trace ? &restart_trace : nullptr);
    if (joint_score(model, features, other) > joint_score(model, features, best)) {
      best = std::move(other);
      bp_trace = std::move(restart_trace);
    }
  }
  if (trace) *trace = std::move(bp_trace);
  return best;
}

TaskLabels loopy_decode(const FactorialModel& model,
                        const std::vector<std::string>& tokens) {
  return loopy_decode(model, featurize(model.base.featurizer, tokens));
}

TaskLabels cascade_decode(const FactorialModel& model,
                          const Eigen::MatrixXd& features) {
  if (model.variant != CouplingVariant::kCascaded) {
    throw Error(ErrorKind::kWrongVariant,
                "cascade decoding applies to cascaded models");
  }
  const int J = model.num_tasks();
  TaskLabels decoded(J);
  for (int j = 0; j < J; ++j) {
    const ChainHead& head = model.base.heads[j];
    const Eigen::MatrixXd unaries =
        emission_scores(features, head.emission) +
        coupling_unaries(model, features, j, decoded);
    decoded[j] = viterbi(unaries, head).labels;
  }
  return decoded;
}

TaskLabels cascade_decode(const FactorialModel& model,
                          const std::vector<std::string>& tokens) {
  return cascade_decode(model, featurize(model.base.featurizer, tokens));
}

double joint_score(const FactorialModel& model,
                   const Eigen::MatrixXd& features, const TaskLabels& labels) {
  if (model.variant != CouplingVariant::kPlain) {
    throw Error(ErrorKind::kWrongVariant, "joint score is defined for plain models");
  }
  const int J = model.num_tasks();
  const int T = static_cast<int>(features.rows());
  if (static_cast<int>(labels.size()) != J) {
    throw Error(ErrorKind::kShapeMismatch, "expected one sequence per task");
  }
  double score = 0.0;
  for (int j = 0; j < J; ++j) {
    const ChainHead& head = model.base.heads[j];
    score += path_score(emission_scores(features, head.emission), head,
                        labels[j]);
  }
  for (int p = 0; p < model.couplings.num_pairs(); ++p) {
    const auto [lo, hi] = model.couplings.pair(p);
    const Eigen::MatrixXd& c = model.couplings.matrix(p);
    for (int t = 0; t < T; ++t) score += c(labels[lo][t], labels[hi][t]);
  }
  return score;
}

double joint_score(const FactorialModel& model,
                   const std::vector<std::string>& tokens,
                   const TaskLabels& labels) {
  return joint_score(model, featurize(model.base.featurizer, tokens), labels);
}

}  // namespace mtcrf
