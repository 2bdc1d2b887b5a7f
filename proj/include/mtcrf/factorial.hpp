#pragma once

#include <utility>
#include <vector>

#include "mtcrf/multihead.hpp"

namespace mtcrf {

enum class CouplingVariant { kPlain, kWeighted, kCascaded };

const char* to_string(CouplingVariant variant);

// Message passing schedule. max_iterations also bounds the rounds of
// conditional re-decoding.
struct BpConfig {
  int max_iterations = 10;
  double damping = 0.5;    // weight of the previous message
  double tolerance = 1e-4; // max message change that counts as converged

  void validate() const;
  bool operator==(const BpConfig&) const = default;
};

// Cross-task coupling potentials, one matrix per unordered task pair
// {lo, hi} with lo < hi, shaped K_lo x K_hi (row = label of lo). Seen from
// task hi the stored matrix is indexed [other label, own label]; seen from
// task lo it is the transpose, so the two views share one set of entries.
class CouplingSet {
 public:
  CouplingSet() = default;
  // Zero couplings for every task pair.
  explicit CouplingSet(const std::vector<int>& label_counts);

  int num_pairs() const { return static_cast<int>(pairs_.size()); }
  const std::pair<int, int>& pair(int p) const { return pairs_.at(p); }
  Eigen::MatrixXd& matrix(int p) { return matrices_.at(p); }
  const Eigen::MatrixXd& matrix(int p) const { return matrices_.at(p); }
  std::vector<Eigen::MatrixXd>& matrices() { return matrices_; }
  const std::vector<Eigen::MatrixXd>& matrices() const { return matrices_; }

  // Index of the pair {a, b}, or -1.
  int find(int a, int b) const;
  // K_other x K_task view of the shared matrix.
  Eigen::MatrixXd view(int task, int other) const;

  void set_zero();
  bool operator==(const CouplingSet& o) const {
    return pairs_ == o.pairs_ && matrices_ == o.matrices_;
  }

 private:
  std::vector<std::pair<int, int>> pairs_;
  std::vector<Eigen::MatrixXd> matrices_;
};

struct FactorialModel {
  MultiHeadModel base;
  CouplingSet couplings;
  CouplingVariant variant = CouplingVariant::kPlain;
  BpConfig bp;

  int num_tasks() const { return base.num_tasks(); }
  // Tasks whose labels enter task j's unaries: all others for PLAIN and
  // WEIGHTED, lower-indexed ones for CASCADED.
  std::vector<int> coupled_tasks(int j) const;
};

// Wraps a multi-head model with zero couplings for every pair.
FactorialModel make_factorial(MultiHeadModel base, CouplingVariant variant,
                              BpConfig bp = {});

struct FactorialGradient {
  MultiHeadGradient base;
  std::vector<Eigen::MatrixXd> couplings;

  FactorialGradient& operator+=(const FactorialGradient& other);
  FactorialGradient& operator*=(double scale);
};

FactorialGradient zero_gradient(const FactorialModel& model);

void append_spans(FactorialModel& model, TensorSpans& spans);
void append_spans(FactorialGradient& grad, TensorSpans& spans);

// Additive T x K_j unaries contributed by the couplings of task j given the
// labels of the tasks it is coupled to. PLAIN adds C[y_other, y]; WEIGHTED
// and CASCADED scale each term by the other task's emission score at its
// label. `other_labels` is indexed by task; entry j is ignored.
Eigen::MatrixXd coupling_unaries(const FactorialModel& model,
                                 const Eigen::MatrixXd& features, int task,
                                 const TaskLabels& other_labels);

// Sum over tasks of the chain NLL with coupled tasks clamped to gold.
// Gradients are accumulated into `grad`.
double fac_loss_and_grad(const FactorialModel& model,
                         const EncodedTokens& tokens, const TaskLabels& gold,
                         FactorialGradient& grad);

struct FactorialLoss {
  double loss = 0.0;
  FactorialGradient grad;
};

FactorialLoss fac_loss_and_grad(const FactorialModel& model,
                                const std::vector<std::string>& tokens,
                                const TaskLabels& gold);

double fac_loss(const FactorialModel& model, const Eigen::MatrixXd& features,
                const TaskLabels& gold);

// Assignments after initialisation and after each completed round.
struct LoopyTrace {
  std::vector<TaskLabels> rounds;
  bool converged = false;
};

// Damped max-product message passing between the task chains gives a first
// assignment. Iterated conditional decoding then refines it: each round
// re-decodes every task (schema order) given the others' current labels,
// until a round changes nothing or bp.max_iterations rounds ran. A task's
// sequence is replaced only when the new path scores strictly higher under
// the current coupling unaries. PLAIN models also refine the coupling-free
// Viterbi assignment and keep whichever ends with the higher joint score; the
// trace follows the kept run.
TaskLabels loopy_decode(const FactorialModel& model,
                        const Eigen::MatrixXd& features,
                        LoopyTrace* trace = nullptr);
TaskLabels loopy_decode(const FactorialModel& model,
                        const std::vector<std::string>& tokens);

// Single pass in schema order; task j conditions on decoded tasks < j.
TaskLabels cascade_decode(const FactorialModel& model,
                          const Eigen::MatrixXd& features);
TaskLabels cascade_decode(const FactorialModel& model,
                          const std::vector<std::string>& tokens);

// Sum of chain path scores plus every pair's coupling counted once.
// Defined for the PLAIN variant.
double joint_score(const FactorialModel& model,
                   const Eigen::MatrixXd& features, const TaskLabels& labels);
double joint_score(const FactorialModel& model,
                   const std::vector<std::string>& tokens,
                   const TaskLabels& labels);

}  // namespace mtcrf
