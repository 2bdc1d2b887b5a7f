#include "mtcrf/model.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "mtcrf/error.hpp"
#include "mtcrf/eval.hpp"

namespace mtcrf {

const char* to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSingleTask: return "st";
    case ModelKind::kMultiHead: return "mh";
    case ModelKind::kFactorial: return "fac";
    case ModelKind::kWeightedFactorial: return "wfac";
    case ModelKind::kCascadedFactorial: return "cfac";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& text) {
  for (auto kind : {ModelKind::kSingleTask, ModelKind::kMultiHead,
                    ModelKind::kFactorial, ModelKind::kWeightedFactorial,
                    ModelKind::kCascadedFactorial}) {
    if (text == to_string(kind)) return kind;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown model variant '" + text + "'");
}

bool has_couplings(ModelKind kind) {
  return kind == ModelKind::kFactorial ||
         kind == ModelKind::kWeightedFactorial ||
         kind == ModelKind::kCascadedFactorial;
}

namespace {

CouplingVariant variant_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::kWeightedFactorial: return CouplingVariant::kWeighted;
    case ModelKind::kCascadedFactorial: return CouplingVariant::kCascaded;
    default: return CouplingVariant::kPlain;
  }
}

}  // namespace

Tagger init_tagger(ModelKind kind, const MultiTaskSchema& schema,
                   const std::vector<std::string>& vocabulary,
                   const FeatureConfig& features, const BpConfig& bp,
                   std::uint64_t seed) {
  if (kind == ModelKind::kSingleTask && schema.num_tasks() != 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "a single-task tagger needs a one-task schema");
  }
  FeatureConfig fc = features;
  fc.seed = seed;
  MultiHeadModel base{init_featurizer(fc, vocabulary), {}};
  // Heads draw from a stream separate from the featurizer's.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (int k : schema.label_counts()) {
    base.heads.push_back(init_head(fc.hidden_dim, k, rng));
  }
  Tagger t;
  t.kind = kind;
  t.schema = schema;
  if (has_couplings(kind)) {
    t.model = make_factorial(std::move(base), variant_of(kind), bp);
  } else {
    bp.validate();
    t.model = FactorialModel{std::move(base), CouplingSet{}, CouplingVariant::kPlain, bp};
  }
  return t;
}

std::vector<std::string> collect_vocabulary(
    const std::vector<Sentence>& sentences) {
  std::set<std::string> tokens;
  for (const auto& s : sentences) tokens.insert(s.tokens.begin(), s.tokens.end());
  return {tokens.begin(), tokens.end()};
}

FactorialGradient zero_gradient(const Tagger& tagger) {
  return zero_gradient(tagger.model);
}

double tagger_loss_and_grad(const Tagger& tagger, const EncodedTokens& tokens,
                            const TaskLabels& gold, FactorialGradient& grad) {
  if (has_couplings(tagger.kind)) {
    return fac_loss_and_grad(tagger.model, tokens, gold, grad);
  }
  return mh_loss_and_grad(tagger.model.base, tokens, gold, grad.base);
}

double tagger_loss(const Tagger& tagger, const EncodedTokens& tokens,
                   const TaskLabels& gold) {
  const Eigen::MatrixXd features =
      featurize_forward(tagger.model.base.featurizer, tokens).output();
  if (has_couplings(tagger.kind)) return fac_loss(tagger.model, features, gold);
  return mh_loss(tagger.model.base, features, gold);
}

TaskLabels tagger_predict(const Tagger& tagger,
                          const Eigen::MatrixXd& features) {
  switch (tagger.kind) {
    case ModelKind::kFactorial:
    case ModelKind::kWeightedFactorial:
      return loopy_decode(tagger.model, features);
    case ModelKind::kCascadedFactorial:
      return cascade_decode(tagger.model, features);
    default:
      return mh_predict(tagger.model.base, features);
  }
}

TaskLabels tagger_predict(const Tagger& tagger,
                          const std::vector<std::string>& tokens) {
  return tagger_predict(tagger, featurize(tagger.model.base.featurizer, tokens));
}

std::vector<Sentence> predict_sentences(const Tagger& tagger,
                                        const std::vector<Sentence>& input) {
  std::vector<Sentence> out;
  out.reserve(input.size());
  for (const auto& s : input) {
    out.push_back(Sentence{s.tokens, tagger_predict(tagger, s.tokens)});
  }
  return out;
}

void append_spans(Tagger& tagger, TensorSpans& spans) {
  append_spans(tagger.model, spans);
}

namespace {

constexpr char kMagic[8] = {'M', 'T', 'C', 'R', 'F', 'M', 'D', 'L'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void mat(const Eigen::MatrixXd& m) {
    pod<std::int64_t>(m.rows());
    pod<std::int64_t>(m.cols());
    out_.write(reinterpret_cast<const char*>(m.data()),
               static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  void vec(const Eigen::VectorXd& v) { mat(Eigen::MatrixXd(v)); }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > static_cast<std::uint64_t>(remaining())) fail("string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  Eigen::MatrixXd mat() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0 || rows > (1LL << 31) || cols > (1LL << 31) ||
        rows * cols > remaining() / static_cast<std::int64_t>(sizeof(double))) {
      fail("matrix shape");
    }
    Eigen::MatrixXd m(rows, cols);
    in_.read(reinterpret_cast<char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
    check();
    return m;
  }
  Eigen::VectorXd vec() {
    Eigen::MatrixXd m = mat();
    if (m.cols() != 1) fail("vector shape");
    return m.col(0);
  }
  std::int64_t remaining() {
    const auto here = in_.tellg();
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(here);
    return static_cast<std::int64_t>(end - here);
  }
  [[noreturn]] void fail(const std::string& what) {
    throw Error(ErrorKind::kFormat, path_ + ": corrupt model file (" + what + ")");
  }

 private:
  void check() {
    if (!in_) fail("truncated");
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_tagger(const Tagger& tagger, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kModelFormatVersion);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(tagger.kind));
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(tagger.model.variant));
  std::ostringstream schema;
  write_schema(schema, tagger.schema);
  w.str(schema.str());

  const Featurizer& f = tagger.model.base.featurizer;
  const FeatureConfig& c = f.config;
  w.pod<std::int32_t>(c.embedding_dim);
  w.pod<std::int32_t>(static_cast<std::int32_t>(c.char_ngram_orders.size()));
  for (int n : c.char_ngram_orders) w.pod<std::int32_t>(n);
  w.pod<std::int32_t>(c.hash_buckets);
  w.pod<std::int32_t>(c.window);
  w.pod<std::int32_t>(c.hidden_dim);
  w.pod<std::int32_t>(c.layers);
  w.pod<std::uint64_t>(c.seed);

  const BpConfig& bp = tagger.model.bp;
  w.pod<std::int32_t>(bp.max_iterations);
  w.pod<double>(bp.damping);
  w.pod<double>(bp.tolerance);

  w.pod<std::uint64_t>(f.vocabulary.tokens().size());
  for (const auto& tok : f.vocabulary.tokens()) w.str(tok);

  w.mat(f.params.token_embeddings);
  w.mat(f.params.char_embeddings);
  for (const auto& layer : f.params.layers) {
    w.mat(layer.weight);
    w.vec(layer.bias);
  }
  for (const auto& head : tagger.model.base.heads) {
    w.mat(head.emission);
    w.mat(head.transition);
    w.vec(head.start);
    w.vec(head.stop);
  }
  const CouplingSet& cs = tagger.model.couplings;
  w.pod<std::int32_t>(cs.num_pairs());
  for (int p = 0; p < cs.num_pairs(); ++p) {
    w.pod<std::int32_t>(cs.pair(p).first);
    w.pod<std::int32_t>(cs.pair(p).second);
    w.mat(cs.matrix(p));
  }
  w.str(tagger.config_json);
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path);
}

namespace {

Tagger read_tagger(std::istream& in, const std::string& path) {
  Reader r(in, path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    r.fail("bad magic");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kModelFormatVersion) {
    r.fail("unsupported version " + std::to_string(version));
  }
  Tagger t;
  const auto kind = r.pod<std::uint8_t>();
  const auto variant = r.pod<std::uint8_t>();
  if (kind > static_cast<std::uint8_t>(ModelKind::kCascadedFactorial) ||
      variant > static_cast<std::uint8_t>(CouplingVariant::kCascaded)) {
    r.fail("model kind");
  }
  t.kind = static_cast<ModelKind>(kind);
  t.model.variant = static_cast<CouplingVariant>(variant);
  std::istringstream schema(r.str());
  t.schema = read_schema(schema);

  FeatureConfig c;
  c.embedding_dim = r.pod<std::int32_t>();
  const auto orders = r.pod<std::int32_t>();
  if (orders < 0 || orders > 64) r.fail("n-gram orders");
  c.char_ngram_orders.clear();
  for (int i = 0; i < orders; ++i) c.char_ngram_orders.push_back(r.pod<std::int32_t>());
  c.hash_buckets = r.pod<std::int32_t>();
  c.window = r.pod<std::int32_t>();
  c.hidden_dim = r.pod<std::int32_t>();
  c.layers = r.pod<std::int32_t>();
  c.seed = r.pod<std::uint64_t>();
  c.validate();

  t.model.bp.max_iterations = r.pod<std::int32_t>();
  t.model.bp.damping = r.pod<double>();
  t.model.bp.tolerance = r.pod<double>();
  t.model.bp.validate();

  const auto vocab_size = r.pod<std::uint64_t>();
  if (vocab_size > (1ULL << 28)) r.fail("vocabulary size");
  std::vector<std::string> vocab;
  for (std::uint64_t i = 0; i < vocab_size; ++i) vocab.push_back(r.str());

  Featurizer& f = t.model.base.featurizer;
  f.config = c;
  f.vocabulary = Vocabulary(vocab);
  f.params.token_embeddings = r.mat();
  f.params.char_embeddings = r.mat();
  for (int l = 0; l < c.layers; ++l) {
    ProjectionLayer layer;
    layer.weight = r.mat();
    layer.bias = r.vec();
    f.params.layers.push_back(std::move(layer));
  }
  for (int j = 0; j < t.schema.num_tasks(); ++j) {
    ChainHead head;
    head.emission = r.mat();
    head.transition = r.mat();
    head.start = r.vec();
    head.stop = r.vec();
    const int K = t.schema.task(j).size();
    if (head.num_labels() != K || head.feature_dim() != c.hidden_dim ||
        head.transition.rows() != K || head.transition.cols() != K ||
        head.start.size() != K || head.stop.size() != K) {
      r.fail("head shape");
    }
    t.model.base.heads.push_back(std::move(head));
  }
  const auto pairs = r.pod<std::int32_t>();
  if (pairs > 0) {
    t.model.couplings = CouplingSet(t.schema.label_counts());
    if (pairs != t.model.couplings.num_pairs()) r.fail("coupling count");
    for (int p = 0; p < pairs; ++p) {
      const auto lo = r.pod<std::int32_t>();
      const auto hi = r.pod<std::int32_t>();
      Eigen::MatrixXd m = r.mat();
      if (t.model.couplings.pair(p) != std::pair<int, int>(lo, hi) ||
          m.rows() != t.model.couplings.matrix(p).rows() ||
          m.cols() != t.model.couplings.matrix(p).cols()) {
        r.fail("coupling shape");
      }
      t.model.couplings.matrix(p) = std::move(m);
    }
  } else if (pairs < 0) {
    r.fail("coupling count");
  }
  t.config_json = r.str();
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");

  check_shapes(f);
  if (has_couplings(t.kind) != (pairs > 0) ||
      variant_of(t.kind) != t.model.variant) {
    r.fail("model kind");
  }
  return t;
}

}  // namespace

Tagger load_tagger(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  try {
    return read_tagger(in, path);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat) throw;
    throw Error(ErrorKind::kFormat, path + ": corrupt model file (" + e.detail() + ")");
  }
}

void export_coupling_heatmap(const Tagger& tagger, const std::string& task,
                             const std::string& other,
                             const std::string& directory) {
  const int j = tagger.schema.index_of(task);
  const int k = tagger.schema.index_of(other);
  if (j < 0 || k < 0) {
    throw Error(ErrorKind::kMissingCoupling,
                "unknown task in pair " + task + "," + other);
  }
  if (!has_couplings(tagger.kind) || j == k) {
    throw Error(ErrorKind::kMissingCoupling,
                std::string(to_string(tagger.kind)) + " model has no coupling for " +
                    task + "," + other);
  }
  export_heatmap_pair(tagger.model.couplings.view(j, k),
                      tagger.schema.task(k).labels(),
                      tagger.schema.task(j).labels(), directory);
}

}  // namespace mtcrf
