#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mtcrf/error.hpp"
#include "oracle.hpp"
#include "support/support.hpp"

using namespace mtcrf;
using mtcrf::testing::random_head;
using mtcrf::testing::random_matrix;
using mtcrf::testing::random_tagger;
using mtcrf::testing::uniform_int;

TEST(BruteForce, ZeroPotentials) {
  const ChainHead h = ChainHead::zeros(1, 2);
  EXPECT_NEAR(oracle::brute_force_logZ(Eigen::MatrixXd::Zero(3, 2), h), 3.0 * std::log(2.0),
              1e-12);
  EXPECT_EQ(oracle::brute_force_argmax(Eigen::MatrixXd::Zero(3, 2), h).labels,
            (LabelSequence{0, 0, 0}));
  const auto m = oracle::brute_force_marginals(Eigen::MatrixXd::Zero(3, 4), ChainHead::zeros(1, 4));
  EXPECT_LE((m.unary.array() - 0.25).abs().maxCoeff(), 1e-12);
}

TEST(BruteForce, SingleStep) {
  std::mt19937_64 rng(1);
  const ChainHead h = random_head(1, 3, rng);
  const Eigen::MatrixXd u = random_matrix(1, 3, rng);
  const Eigen::VectorXd logits = u.row(0).transpose() + h.start + h.stop;
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  EXPECT_NEAR(oracle::brute_force_logZ(u, h), lse, 1e-12);
  const auto marg = oracle::brute_force_marginals(u, h);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(marg.unary(0, k), std::exp(logits(k) - lse), 1e-12);
}

TEST(BruteForce, DominantPath) {
  ChainHead h = ChainHead::zeros(1, 3);
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(3, 3);
  u(0, 2) = 10;
  u(1, 1) = 10;
  u(2, 0) = 10;
  EXPECT_EQ(oracle::brute_force_argmax(u, h).labels, (LabelSequence{2, 1, 0}));
}

TEST(BruteForce, RefusesLargeSpaces) {
  try {
    oracle::brute_force_logZ(Eigen::MatrixXd::Zero(11, 4), ChainHead::zeros(1, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooLarge);
  }
}

TEST(CrossProduct, IndependentTasksFactorize) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    Tagger t = random_tagger(ModelKind::kFactorial,
                             {uniform_int(rng, 1, 3), uniform_int(rng, 1, 3)}, rng);
    t.model.couplings.set_zero();
    const auto tokens = mtcrf::testing::random_tokens(rng, uniform_int(rng, 1, 4));
    const Eigen::MatrixXd F = featurize(t.model.base.featurizer, tokens);
    const auto pc = oracle::crossproduct(t.model, F);
    double sum = 0.0;
    for (const auto& h : t.model.base.heads) sum += log_partition(emission_scores(F, h.emission), h);
    EXPECT_NEAR(log_partition(pc.unaries, pc.head), sum, 1e-10);
  }
}

TEST(CrossProduct, HandSummedSingleStep) {
  std::mt19937_64 rng(3);
  Tagger t = random_tagger(ModelKind::kFactorial, {2, 2}, rng);
  const auto tokens = std::vector<std::string>{"ab"};
  const Eigen::MatrixXd F = featurize(t.model.base.featurizer, tokens);
  const auto pc = oracle::crossproduct(t.model, F);
  ASSERT_EQ(pc.num_states(), 4);
  const auto& h0 = t.model.base.heads[0];
  const auto& h1 = t.model.base.heads[1];
  const Eigen::MatrixXd e0 = emission_scores(F, h0.emission);
  const Eigen::MatrixXd e1 = emission_scores(F, h1.emission);
  const Eigen::MatrixXd& C = t.model.couplings.matrix(0);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const int s = pc.encode({a, b});
      const double expected = e0(0, a) + h0.start(a) + h0.stop(a) + e1(0, b) + h1.start(b) +
                              h1.stop(b) + C(a, b);
      EXPECT_NEAR(pc.unaries(0, s) + pc.head.start(s) + pc.head.stop(s), expected, 1e-12);
    }
  }
}

TEST(CrossProduct, PartitionMatchesJointEnumeration) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 30; ++i) {
    Tagger t = random_tagger(ModelKind::kFactorial,
                             {uniform_int(rng, 1, 3), uniform_int(rng, 1, 3)}, rng);
    const int T = uniform_int(rng, 1, 4);
    const Eigen::MatrixXd F =
        featurize(t.model.base.featurizer, mtcrf::testing::random_tokens(rng, T));
    const auto pc = oracle::crossproduct(t.model, F);
    // Enumerate per-task sequences directly and score with joint_score.
    double z = -std::numeric_limits<double>::infinity();
    for (const auto& a : oracle::all_sequences(T, t.model.base.heads[0].num_labels())) {
      for (const auto& b : oracle::all_sequences(T, t.model.base.heads[1].num_labels())) {
        const double s = joint_score(t.model, F, {a, b});
        const double m = std::max(z, s);
        z = m + std::log(std::exp(z - m) + std::exp(s - m));
      }
    }
    const double lz = log_partition(pc.unaries, pc.head);
    EXPECT_NEAR(std::exp(lz - z), 1.0, 1e-8);
  }
}

TEST(CrossProduct, RejectsNonPlainAndOversizedModels) {
  std::mt19937_64 rng(5);
  Tagger w = random_tagger(ModelKind::kWeightedFactorial, {2, 2}, rng);
  const Eigen::MatrixXd F = featurize(w.model.base.featurizer, {"ab"});
  try {
    oracle::crossproduct(w.model, F);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kWrongVariant);
  }
  Tagger big = random_tagger(ModelKind::kFactorial, {17, 16}, rng);
  try {
    oracle::crossproduct(big.model, F);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTooLarge);
  }
}
