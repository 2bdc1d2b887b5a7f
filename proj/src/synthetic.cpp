#include "mtcrf/synthetic.hpp"

#include <algorithm>
#include <random>

#include "mtcrf/error.hpp"

namespace mtcrf {

namespace {

constexpr int kBeginWords = 5;
constexpr int kFillerWords = 10;
constexpr int kCloserWords = 5;
constexpr int kOutsideWords = 30;
constexpr int kSeparableWords = 12;

std::string word(const char* prefix, int i) { return prefix + std::to_string(i); }

}  // namespace

MultiTaskSchema coupled_schema() {
  return MultiTaskSchema({TaskSchema("span", Scheme::kBio, {"O", "B-A", "B-B", "I-A", "I-B"}),
                          TaskSchema("head", Scheme::kBio, {"O", "B-P", "B-Q"})});
}

Dataset coupled_corpus(const CoupledCorpusConfig& config) {
  if (config.min_length < 3 || config.max_length < config.min_length ||
      config.noise < 0.0 || config.noise > 1.0 || config.span_rate < 0.0 ||
      config.span_rate > 1.0) {
    throw Error(ErrorKind::kInvalidArgument, "invalid synthetic corpus settings");
  }
  Dataset data{coupled_schema(), {}};
  const TaskSchema& span = data.schema.task(0);
  const TaskSchema& head = data.schema.task(1);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> length(config.min_length, config.max_length);
  std::uniform_int_distribution<int> span_length(3, 5);
  std::uniform_int_distribution<int> begin_word(0, kBeginWords - 1);
  std::uniform_int_distribution<int> filler_word(0, kFillerWords - 1);
  std::uniform_int_distribution<int> closer_word(0, kCloserWords - 1);
  std::uniform_int_distribution<int> outside_word(0, kOutsideWords - 1);
  std::bernoulli_distribution open(config.span_rate);
  std::bernoulli_distribution type_b(0.5);
  std::bernoulli_distribution flip(config.noise);

  data.sentences.reserve(config.sentences);
  for (std::size_t n = 0; n < config.sentences; ++n) {
    const int target = length(rng);
    Sentence s;
    s.gold.assign(2, {});
    auto push = [&](std::string token, const std::string& l1, const std::string& l2) {
      s.tokens.push_back(std::move(token));
      s.gold[0].push_back(span.encode(l1));
      s.gold[1].push_back(head.encode(l2));
    };
    while (static_cast<int>(s.tokens.size()) < target) {
      const int room = target - static_cast<int>(s.tokens.size());
      if (room >= 3 && open(rng)) {
        const int m = std::min(room, span_length(rng));
        const bool is_b = type_b(rng);
        const std::string type = is_b ? "B" : "A";
        const bool flipped = flip(rng);
        push(word("k", begin_word(rng)), "B-" + type,
             (is_b != flipped) ? "B-Q" : "B-P");
        for (int i = 1; i < m - 1; ++i) push(word("f", filler_word(rng)), "I-" + type, "O");
        push(word(is_b ? "b" : "a", closer_word(rng)), "I-" + type, "O");
      } else {
        push(word("w", outside_word(rng)), "O", "O");
      }
    }
    data.sentences.push_back(std::move(s));
  }
  return data;
}

MultiTaskSchema separable_schema() {
  return MultiTaskSchema({TaskSchema("kind", Scheme::kFlat, {"O", "X", "Y"})});
}

Dataset separable_corpus(std::size_t sentences, std::uint64_t seed) {
  Dataset data{separable_schema(), {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> length(3, 10);
  std::uniform_int_distribution<int> token(0, kSeparableWords - 1);
  for (std::size_t n = 0; n < sentences; ++n) {
    Sentence s;
    s.gold.assign(1, {});
    const int t = length(rng);
    for (int i = 0; i < t; ++i) {
      const int w = token(rng);
      s.tokens.push_back(word("t", w));
      s.gold[0].push_back(w % 3);
    }
    data.sentences.push_back(std::move(s));
  }
  return data;
}

}  // namespace mtcrf
