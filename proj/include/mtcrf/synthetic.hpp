#pragma once

#include <cstdint>

#include "mtcrf/corpus.hpp"

namespace mtcrf {

// Two BIO tasks. "span" marks typed spans whose type (A or B) is revealed
// only by the last token of the span; "head" tags the first token of each
// span with B-P for type A and B-Q for type B, flipped with probability
// `noise`. Everything outside span starts is "O" on "head".
struct CoupledCorpusConfig {
  std::size_t sentences = 100;
  std::uint64_t seed = 0;
  double noise = 0.1;
  int min_length = 8;
  int max_length = 16;
  double span_rate = 0.25;  // chance of opening a span at a free position
};

MultiTaskSchema coupled_schema();
Dataset coupled_corpus(const CoupledCorpusConfig& config);

// One FLAT task where each token determines its label.
MultiTaskSchema separable_schema();
Dataset separable_corpus(std::size_t sentences, std::uint64_t seed);

}  // namespace mtcrf
